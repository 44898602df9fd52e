"""End-to-end feature extraction for one snapshot and over a corpus.

Per binary: build the raw CFG, preprocess it, rank strings, map APIs and
strings onto nodes, pick up to ten seed regions, read out their BFS
sequences and signatures, add the whole-CFG features, and assemble the
1422-value vector.  Any failure along the way degrades to the all-default
vector instead of aborting a corpus run.

Corpus extraction is two-pass: the first pass accumulates trigram document
frequencies, the second emits feature rows against the frozen table.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import classifier
from .classifier import ModelParams, ScalerParams
from .features import (
    FeatureDims,
    IdfTable,
    RegionFeatures,
    TokenKind,
    assemble_vector,
    nop_count,
    opcode_stream,
    section_ratio_flag,
    sequence_tokens,
    signature_sequence,
    top_trigrams,
    trigrams_of,
)
from .preprocess import merge_chains, remove_loops
from .regions import (
    DEFAULT_LEVELS,
    DEFAULT_MAX_REGIONS,
    SelectionCase,
    Subgraph,
    extract_subgraph,
    select_seed_nodes,
)
from .snapshot import Cfg, DisassemblySnapshot, load_snapshot
from .strings import RankedString, rank_strings
from .xrefs import (
    CallXrefGraph,
    build_xref_graph,
    map_api_to_nodes,
    map_string_to_nodes,
    pre_entry_functions,
)


@dataclass
class PipelineConfig:
    levels: int = DEFAULT_LEVELS
    max_regions: int = DEFAULT_MAX_REGIONS
    trigrams: int = 15
    trigram_dim: int = 20
    seq_dim: int = 100
    sig_dim: int = 100
    whole_sig_dim: int = 200
    ratio_threshold: float = 1.5
    epochs: int = 12
    batch: int = 200
    learning_rate: float = 0.001
    optimizer: str = "adam"
    dropout: float = 0.2
    batch_norm: bool = True
    hidden_widths: Optional[tuple[int, ...]] = None  # None = full default stack

    @property
    def dims(self) -> FeatureDims:
        return FeatureDims(
            api_dim=self.seq_dim,
            opcode_dim=self.seq_dim,
            sig_dim=self.sig_dim,
            max_regions=self.max_regions,
            whole_sig_dim=self.whole_sig_dim,
            trigram_dim=self.trigram_dim,
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PipelineConfig":
        doc = json.loads(Path(path).read_text())
        cfg = cls()
        for key, value in doc.items():
            if key == "hidden_widths" and value is not None:
                value = tuple(int(v) for v in value)
            if hasattr(cfg, key):
                setattr(cfg, key, value)
        return cfg


@dataclass
class RegionReadout:
    """Inspection payload for one extracted region."""

    seed: int
    seed_addr: int
    subgraph: Subgraph
    opcode_tokens: tuple[str, ...]
    api_tokens: tuple[str, ...]
    signature_values: tuple[int, ...]


@dataclass
class ExtractionResult:
    binary_id: str
    vector: np.ndarray
    case: SelectionCase
    ranked_strings: list[RankedString] = field(default_factory=list)
    regions: list[RegionReadout] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


def build_api_map(
    snapshot: DisassemblySnapshot, cfg: Cfg, xg: CallXrefGraph
) -> dict[int, list[str]]:
    """Node -> ordered API names, the order APIs are encountered in the node.

    Each mapping is anchored at the lowest-address call instruction that
    attributes the API to the node (the direct PLT call, or the call into a
    pre-entry function); ties fall back to import declaration order.
    """
    per_node: dict[int, list[tuple[int, int, str]]] = {}
    for idx, api in enumerate(snapshot.imports):
        nodes = map_api_to_nodes(api, snapshot, cfg, xg)
        xref_sources = {
            fn.entry_addr
            for fn in snapshot.functions
            if any(callee == api.plt_addr for _c, callee in fn.call_sites)
        }
        hop_addrs: set[int] = set()
        for src in sorted(xref_sources):
            if src != xg.entry_addr:
                hop_addrs |= pre_entry_functions(xg, src)
        for nid in nodes:
            anchor = None
            for ins in cfg.nodes[nid].instructions:
                if ins.is_call and (
                    ins.call_target == api.plt_addr or ins.call_target in hop_addrs
                ):
                    anchor = ins.address
                    break
            per_node.setdefault(nid, []).append(
                (anchor if anchor is not None else cfg.nodes[nid].start_addr, idx, api.name)
            )
    return {
        nid: [name for _addr, _idx, name in sorted(entries)]
        for nid, entries in per_node.items()
    }


def extract_features(
    snapshot: DisassemblySnapshot,
    config: PipelineConfig = PipelineConfig(),
    idf: Optional[IdfTable] = None,
    string_overrides: Optional[Mapping[str, float]] = None,
) -> ExtractionResult:
    """Advanced features of one snapshot; failures yield the default vector."""
    dims = config.dims
    idf = idf if idf is not None else IdfTable()
    try:
        return _extract(snapshot, config, dims, idf, string_overrides)
    except Exception as exc:  # empty CFG, function limit, or any framework fault
        return ExtractionResult(
            binary_id=snapshot.binary_id,
            vector=np.zeros(dims.total, dtype=np.float64),
            case=SelectionCase.FAILED,
            diagnostics=[f"{type(exc).__name__}: {exc}"],
        )


def _extract(
    snapshot: DisassemblySnapshot,
    config: PipelineConfig,
    dims: FeatureDims,
    idf: IdfTable,
    string_overrides: Optional[Mapping[str, float]],
) -> ExtractionResult:
    from .snapshot import build_cfg

    raw = build_cfg(snapshot)
    partial = remove_loops(raw)
    complete = merge_chains(partial)

    ranked = rank_strings(snapshot.strings, string_overrides)
    xg = build_xref_graph(snapshot)
    api_map = build_api_map(snapshot, partial, xg)

    selection = select_seed_nodes(
        partial,
        ranked,
        lambda s: map_string_to_nodes(s, snapshot, partial, xg),
        max_regions=config.max_regions,
    )

    readouts: list[RegionReadout] = []
    region_feats: list[RegionFeatures] = []
    for seed in selection.seeds:
        sub = extract_subgraph(partial, seed, config.levels)
        opcodes = sequence_tokens(sub, partial, TokenKind.OPCODE)
        apis = sequence_tokens(sub, partial, TokenKind.API, api_map)
        # Degree counts come from the raw graph: edges dropped during loop
        # removal still shape a node's fan-in/fan-out.
        sigs = signature_sequence(sub.bfs_order, raw)
        readouts.append(
            RegionReadout(
                seed=seed,
                seed_addr=partial.nodes[seed].start_addr,
                subgraph=sub,
                opcode_tokens=tuple(opcodes),
                api_tokens=tuple(apis),
                signature_values=tuple(s.value for s in sigs),
            )
        )
        region_feats.append(
            RegionFeatures(
                seed=seed,
                opcode_tokens=tuple(opcodes),
                api_tokens=tuple(apis),
                signatures=tuple(sigs),
            )
        )

    whole_order = _whole_cfg_order(complete)
    whole_sigs = signature_sequence(whole_order, complete)
    grams = top_trigrams(opcode_stream(snapshot), idf, config.trigrams)
    vector = assemble_vector(
        regions=region_feats,
        whole_signatures=whole_sigs,
        trigram_weights=grams,
        nops=nop_count(snapshot),
        ratio_flag=section_ratio_flag(snapshot.sections, config.ratio_threshold),
        dims=dims,
    )
    return ExtractionResult(
        binary_id=snapshot.binary_id,
        vector=vector,
        case=selection.case,
        ranked_strings=ranked,
        regions=readouts,
    )


def _whole_cfg_order(complete: Cfg) -> list[int]:
    """BFS over the complete CFG rooted at the merged entry node.

    Nodes the entry cannot reach follow in ascending NodeId.
    """
    order: list[int] = []
    seen = {complete.entry}
    queue = [complete.entry]
    while queue:
        node = queue.pop(0)
        order.append(node)
        for child in complete.succ[node]:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    order.extend(sorted(set(complete.nodes) - seen))
    return order


# ---------------------------------------------------------------------------
# Corpus persistence
# ---------------------------------------------------------------------------

def snapshot_trigram_set(path: Path) -> tuple[str, set[str]]:
    """Pass-1 worker: distinct trigrams of one snapshot (empty on failure)."""
    try:
        snap = load_snapshot(path)
    except Exception:
        return (path.stem, set())
    return (path.stem, set(trigrams_of(opcode_stream(snap))))


def build_corpus_idf(paths: Sequence[Path], workers: int = 1) -> IdfTable:
    idf = IdfTable()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(snapshot_trigram_set, paths))
    else:
        results = [snapshot_trigram_set(p) for p in paths]
    for _stem, grams in sorted(results, key=lambda r: r[0]):
        idf.add_document(grams)
    return idf


def format_feature_row(binary_id: str, label: int, vector: np.ndarray) -> str:
    values = ",".join(repr(float(v)) for v in vector)
    return f"{binary_id},{label},{values}"


def parse_feature_file(path: Union[str, Path]) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Read a feature file back into (ids, X, y)."""
    ids: list[str] = []
    rows: list[list[float]] = []
    labels: list[int] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split(",")
        ids.append(parts[0])
        labels.append(int(parts[1]))
        rows.append([float(v) for v in parts[2:]])
    if not rows:
        raise classifier.EmptyDatasetError(f"no feature rows in {path}")
    return ids, np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.float64)


def save_idf(idf: IdfTable, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(idf.to_json_dict(), indent=0, sort_keys=True) + "\n")


def load_idf(path: Union[str, Path]) -> IdfTable:
    return IdfTable.from_json_dict(json.loads(Path(path).read_text()))


MODEL_FORMAT_VERSION = 1


def save_model(
    path: Union[str, Path],
    params: ModelParams,
    scaler: ScalerParams,
    config: Optional[PipelineConfig] = None,
) -> None:
    """Versioned npz container with layer arrays, norm stats and the scaler."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_dim": params.input_dim,
        "widths": list(params.widths),
        "batch_norm": params.batch_norm,
        "dropout": params.dropout,
        "config": vars(config) if config is not None else None,
    }
    if meta["config"] is not None and meta["config"].get("hidden_widths"):
        meta["config"]["hidden_widths"] = list(meta["config"]["hidden_widths"])
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    for i in range(len(params.bn_gamma)):
        arrays[f"bn_gamma{i}"] = params.bn_gamma[i]
        arrays[f"bn_beta{i}"] = params.bn_beta[i]
        arrays[f"bn_mean{i}"] = params.bn_mean[i]
        arrays[f"bn_var{i}"] = params.bn_var[i]
    arrays["scaler_mean"] = scaler.mean
    arrays["scaler_std"] = scaler.std
    np.savez(path, **arrays)


def load_model(path: Union[str, Path]) -> tuple[ModelParams, ScalerParams, Optional[dict]]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta.get('format_version')!r}")
        widths = tuple(int(w) for w in meta["widths"])
        params = ModelParams(
            input_dim=int(meta["input_dim"]),
            widths=widths,
            weights=[data[f"W{i}"] for i in range(len(widths))],
            biases=[data[f"b{i}"] for i in range(len(widths))],
            batch_norm=bool(meta["batch_norm"]),
            dropout=float(meta["dropout"]),
        )
        if params.batch_norm:
            for i in range(len(widths) - 1):
                params.bn_gamma.append(data[f"bn_gamma{i}"])
                params.bn_beta.append(data[f"bn_beta{i}"])
                params.bn_mean.append(data[f"bn_mean{i}"])
                params.bn_var.append(data[f"bn_var{i}"])
        scaler = ScalerParams(mean=data["scaler_mean"], std=data["scaler_std"])
    return params, scaler, meta.get("config")


def stratified_split(
    y: np.ndarray, train_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified index split; train size is round(fraction * n) overall.

    Per-class quotas follow largest remainders so the total honors the
    fraction exactly; every class keeps at least one sample on each side
    when it has two or more.
    """
    y = np.asarray(y)
    n = len(y)
    rng = np.random.default_rng(seed)
    total_train = int(round(train_fraction * n))
    classes = sorted(set(y.tolist()))
    quotas = {c: train_fraction * np.sum(y == c) for c in classes}
    floors = {c: int(np.floor(quotas[c])) for c in classes}
    leftover = total_train - sum(floors.values())
    by_remainder = sorted(classes, key=lambda c: (-(quotas[c] - floors[c]), c))
    counts = dict(floors)
    for c in by_remainder:
        if leftover <= 0:
            break
        counts[c] += 1
        leftover -= 1
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in classes:
        members = np.flatnonzero(y == c)
        rng.shuffle(members)
        k = counts[c]
        k = max(1, min(k, len(members) - 1)) if len(members) >= 2 else k
        train_idx.extend(members[:k].tolist())
        test_idx.extend(members[k:].tolist())
    return np.asarray(sorted(train_idx)), np.asarray(sorted(test_idx))
