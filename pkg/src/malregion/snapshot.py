"""Snapshot parsing and raw CFG construction.

A *snapshot* is the JSON interchange document that decouples this pipeline
from any particular disassembler.  It captures everything we need about one
binary: sections, imported APIs with their linkage-table (PLT) slots,
strings with reference addresses, the function list with call sites, and
the entry function's basic blocks and edges.

Schema v1 (documented in docs/snapshot_schema.md):

    {
      "schema_version": 1,
      "binary_id": "<hex digest>",
      "sections":  [{"name": ".text", "virtual_size": N, "physical_size": N}],
      "imports":   [{"name": "WriteFile", "plt_addr": N}],
      "strings":   [{"text": "...", "ref_addrs": [N, ...]}],
      "functions": [{"name": "entry0", "entry_addr": N,
                     "call_sites": [[caller_addr, callee_addr], ...]}],
      "entry_function": {"name": "entry0", "addr": N},
      "blocks":    [{"id": I, "start_addr": N,
                     "instructions": [{"addr": N, "mnemonic": "mov",
                                       "is_call": false, "call_target": N?}]}],
      "edges":     [[src_id, dst_id], ...]
    }

Addresses are JSON integers, mnemonics lowercase.  Unknown keys are ignored
so producers may add extra information (e.g. a "warnings" list).
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

SCHEMA_VERSION = 1

# Mirrors the experimentation limit on exhaustive call-path enumeration.
FUNCTION_LIMIT = 300


class DecodeError(ValueError):
    """Raised when the snapshot byte stream is not well-formed JSON."""


class SchemaError(ValueError):
    """Raised when decoded JSON violates the snapshot schema."""


class EmptyCfgError(ValueError):
    """Raised when a snapshot carries no basic blocks to build a CFG from."""


@dataclass(frozen=True)
class Instruction:
    address: int
    mnemonic: str
    is_call: bool = False
    call_target: Optional[int] = None


@dataclass(frozen=True)
class BasicBlock:
    id: int
    start_addr: int
    instructions: tuple[Instruction, ...] = ()

    @property
    def end_addr(self) -> int:
        """Address of the last instruction (start_addr when empty)."""
        if self.instructions:
            return self.instructions[-1].address
        return self.start_addr

    def contains(self, addr: int) -> bool:
        return self.start_addr <= addr <= self.end_addr

    def mnemonics(self) -> list[str]:
        return [ins.mnemonic for ins in self.instructions]


@dataclass(frozen=True)
class Section:
    name: str
    virtual_size: int
    physical_size: int


@dataclass(frozen=True)
class ImportedApi:
    name: str
    plt_addr: int


@dataclass(frozen=True)
class StringEntry:
    text: str
    ref_addrs: tuple[int, ...] = ()


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    entry_addr: int
    call_sites: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class DisassemblySnapshot:
    binary_id: str
    sections: tuple[Section, ...]
    imports: tuple[ImportedApi, ...]
    strings: tuple[StringEntry, ...]
    functions: tuple[FunctionRecord, ...]
    entry_name: str
    entry_addr: int
    entry_blocks: tuple[BasicBlock, ...]
    entry_edges: tuple[tuple[int, int], ...]
    entry_node: Optional[int]  # block id containing entry_addr; None when no blocks
    warnings: tuple[str, ...] = ()

    def function_at(self, addr: int) -> Optional[FunctionRecord]:
        """Function whose extent contains ``addr``.

        Records carry entry addresses only, so a function's extent is taken
        as [entry_addr, next function's entry_addr); the highest function is
        open-ended.  Addresses below every function resolve to None.
        """
        if not self.functions:
            return None
        ordered = sorted(self.functions, key=lambda f: f.entry_addr)
        starts = [f.entry_addr for f in ordered]
        idx = bisect_right(starts, addr) - 1
        if idx < 0:
            return None
        return ordered[idx]


class Stage(Enum):
    RAW = "raw"
    PARTIAL = "partial"
    COMPLETE = "complete"


@dataclass
class Cfg:
    """Directed graph of basic blocks.

    ``succ``/``pred`` hold sorted tuples and are kept mutually consistent.
    Instances are treated as immutable once built; preprocessing passes
    return new Cfg values instead of mutating.
    """

    nodes: dict[int, BasicBlock]
    succ: dict[int, tuple[int, ...]]
    pred: dict[int, tuple[int, ...]]
    entry: int
    stage: Stage

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for u in sorted(self.succ):
            for v in self.succ[u]:
                out.append((u, v))
        return out

    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def out_degree(self, n: int) -> int:
        return len(self.succ[n])

    def in_degree(self, n: int) -> int:
        return len(self.pred[n])


def make_adjacency(
    node_ids: Iterable[int], edges: Iterable[tuple[int, int]]
) -> tuple[dict[int, tuple[int, ...]], dict[int, tuple[int, ...]]]:
    """Build sorted successor/predecessor maps from an edge list."""
    succ: dict[int, set[int]] = {n: set() for n in node_ids}
    pred: dict[int, set[int]] = {n: set() for n in succ}
    for u, v in edges:
        succ[u].add(v)
        pred[v].add(u)
    return (
        {n: tuple(sorted(s)) for n, s in succ.items()},
        {n: tuple(sorted(p)) for n, p in pred.items()},
    )


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"missing required field '{key}' in {where}")
    return obj[key]


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} must be a JSON integer, got {value!r}")
    return value


def _parse_instruction(obj, where: str) -> Instruction:
    if not isinstance(obj, dict):
        raise SchemaError(f"instruction in {where} must be an object")
    addr = _as_int(_require(obj, "addr", where), f"{where} addr")
    mnemonic = _require(obj, "mnemonic", where)
    if (
        not isinstance(mnemonic, str)
        or not mnemonic
        or mnemonic != mnemonic.lower()
        or any(ch.isspace() for ch in mnemonic)
    ):
        raise SchemaError(
            f"mnemonic in {where} must be a non-empty lowercase token, got {mnemonic!r}"
        )
    is_call = bool(obj.get("is_call", False))
    target = obj.get("call_target")
    if target is not None:
        target = _as_int(target, f"{where} call_target")
        if not is_call:
            raise SchemaError(f"call_target present without is_call in {where}")
    return Instruction(addr, mnemonic, is_call, target)


def _parse_block(obj, index: int) -> BasicBlock:
    where = f"blocks[{index}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object")
    bid = _as_int(_require(obj, "id", where), f"{where} id")
    start = _as_int(_require(obj, "start_addr", where), f"{where} start_addr")
    raw_ins = obj.get("instructions", [])
    if not isinstance(raw_ins, list):
        raise SchemaError(f"{where} instructions must be a list")
    instructions = tuple(
        _parse_instruction(ins, f"{where}.instructions[{i}]")
        for i, ins in enumerate(raw_ins)
    )
    for a, b in zip(instructions, instructions[1:]):
        if b.address <= a.address:
            raise SchemaError(
                f"{where} instructions must be strictly ascending by address"
            )
    if instructions and instructions[0].address != start:
        raise SchemaError(
            f"{where} start_addr {start:#x} does not match first instruction "
            f"address {instructions[0].address:#x}"
        )
    return BasicBlock(bid, start, instructions)


def parse_snapshot(raw: Union[bytes, str, dict]) -> DisassemblySnapshot:
    """Parse and validate one snapshot document.

    Accepts JSON bytes/text (the wire format) or an already-decoded dict.
    Total and deterministic on valid inputs: identical bytes produce a
    structurally identical snapshot.
    """
    if isinstance(raw, dict):
        doc = raw
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"malformed snapshot JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("snapshot top level must be a JSON object")

    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")

    binary_id = _require(doc, "binary_id", "snapshot")
    if not isinstance(binary_id, str) or not binary_id:
        raise SchemaError("binary_id must be a non-empty string")

    sections = []
    for i, sec in enumerate(doc.get("sections", [])):
        name = _require(sec, "name", f"sections[{i}]")
        vs = _as_int(_require(sec, "virtual_size", f"sections[{i}]"), "virtual_size")
        ps = _as_int(_require(sec, "physical_size", f"sections[{i}]"), "physical_size")
        if vs < 0 or ps < 0:
            raise SchemaError(f"sections[{i}] sizes must be non-negative")
        sections.append(Section(str(name), vs, ps))

    imports = []
    for i, imp in enumerate(doc.get("imports", [])):
        imports.append(
            ImportedApi(
                str(_require(imp, "name", f"imports[{i}]")),
                _as_int(_require(imp, "plt_addr", f"imports[{i}]"), "plt_addr"),
            )
        )

    strings = []
    for i, s in enumerate(doc.get("strings", [])):
        text = _require(s, "text", f"strings[{i}]")
        refs = s.get("ref_addrs", [])
        if not isinstance(refs, list):
            raise SchemaError(f"strings[{i}] ref_addrs must be a list")
        strings.append(
            StringEntry(str(text), tuple(_as_int(a, "ref_addr") for a in refs))
        )

    functions = []
    for i, fn in enumerate(doc.get("functions", [])):
        sites_raw = fn.get("call_sites", [])
        if not isinstance(sites_raw, list):
            raise SchemaError(f"functions[{i}] call_sites must be a list")
        sites = []
        for site in sites_raw:
            if not isinstance(site, (list, tuple)) or len(site) != 2:
                raise SchemaError(
                    f"functions[{i}] call_sites entries must be [caller, callee] pairs"
                )
            sites.append((_as_int(site[0], "caller_addr"), _as_int(site[1], "callee_addr")))
        functions.append(
            FunctionRecord(
                str(_require(fn, "name", f"functions[{i}]")),
                _as_int(_require(fn, "entry_addr", f"functions[{i}]"), "entry_addr"),
                tuple(sites),
            )
        )

    entry_fn = _require(doc, "entry_function", "snapshot")
    if not isinstance(entry_fn, dict):
        raise SchemaError("entry_function must be an object with name and addr")
    entry_name = str(_require(entry_fn, "name", "entry_function"))
    entry_addr = _as_int(_require(entry_fn, "addr", "entry_function"), "entry addr")

    blocks_raw = _require(doc, "blocks", "snapshot")
    if not isinstance(blocks_raw, list):
        raise SchemaError("blocks must be a list")
    blocks = tuple(_parse_block(b, i) for i, b in enumerate(blocks_raw))

    ids = [b.id for b in blocks]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate NodeId in blocks")
    if blocks and set(ids) != set(range(len(blocks))):
        raise SchemaError("block ids must be dense integers 0..n-1")

    edges_raw = _require(doc, "edges", "snapshot")
    if not isinstance(edges_raw, list):
        raise SchemaError("edges must be a list")
    id_set = set(ids)
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int]] = []
    for e in edges_raw:
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise SchemaError("edges entries must be [src, dst] pairs")
        u, v = _as_int(e[0], "edge src"), _as_int(e[1], "edge dst")
        if u not in id_set or v not in id_set:
            raise SchemaError(f"dangling edge ({u}, {v}) references unknown NodeId")
        if (u, v) not in seen:  # duplicates collapse; the CFG is a simple digraph
            seen.add((u, v))
            edges.append((u, v))

    entry_node: Optional[int] = None
    if blocks:
        containing = [b.id for b in blocks if b.contains(entry_addr)]
        if len(containing) != 1:
            raise SchemaError(
                f"expected exactly one block containing entry address {entry_addr:#x}, "
                f"found {len(containing)}"
            )
        entry_node = containing[0]

    warnings = tuple(str(w) for w in doc.get("warnings", []))

    return DisassemblySnapshot(
        binary_id=binary_id,
        sections=tuple(sections),
        imports=tuple(imports),
        strings=tuple(strings),
        functions=tuple(functions),
        entry_name=entry_name,
        entry_addr=entry_addr,
        entry_blocks=blocks,
        entry_edges=tuple(sorted(edges)),
        entry_node=entry_node,
        warnings=warnings,
    )


def load_snapshot(path: Union[str, Path]) -> DisassemblySnapshot:
    return parse_snapshot(Path(path).read_bytes())


def build_cfg(snapshot: DisassemblySnapshot) -> Cfg:
    """Raw CFG of the entry function: one node per block, edges as recorded."""
    if not snapshot.entry_blocks:
        raise EmptyCfgError(f"snapshot {snapshot.binary_id} has no basic blocks")
    nodes = {b.id: b for b in snapshot.entry_blocks}
    succ, pred = make_adjacency(nodes, snapshot.entry_edges)
    assert snapshot.entry_node is not None
    return Cfg(nodes=nodes, succ=succ, pred=pred, entry=snapshot.entry_node, stage=Stage.RAW)
