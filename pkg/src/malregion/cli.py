"""Command-line front end: extract features, train, classify, inspect.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import classifier, pipeline
from .classifier import TrainConfig, fit_scaler, metrics_from_scores, transform
from .features import IdfTable
from .pipeline import PipelineConfig, ExtractionResult
from .regions import SelectionCase
from .snapshot import DecodeError, SchemaError, load_snapshot
from .strings import OverrideFormatError, load_overrides

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(USAGE_EXIT)


def _fail(message: str) -> "NoReturn":  # noqa: F821
    print(f"error: {message}", file=sys.stderr)
    sys.exit(DATA_EXIT)


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return PipelineConfig.from_file(path)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        _fail(f"cannot read config {path}: {exc}")


def _load_labels(path: str) -> dict[str, int]:
    labels: dict[str, int] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        _fail(f"cannot read label file: {exc}")
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if ln == 1 and parts[:2] == ["binary_id", "label"]:
            continue  # optional header
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            _fail(f"malformed label file line {ln}: {line!r}")
        labels[parts[0]] = int(parts[1])
    return labels


def _extract_one(args: tuple) -> tuple[str, "ExtractionResult | None", str | None]:
    """Worker: (stem, result, error). Corrupt files produce result=None."""
    path, config_dict, idf_dict, overrides = args
    config = PipelineConfig(**config_dict)
    idf = IdfTable.from_json_dict(idf_dict)
    try:
        snap = load_snapshot(path)
    except (DecodeError, SchemaError, OSError) as exc:
        return (Path(path).stem, None, f"{type(exc).__name__}: {exc}")
    result = pipeline.extract_features(snap, config, idf, overrides)
    return (Path(path).stem, result, None)


def cmd_extract(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        _fail(f"corpus directory {corpus} not found")
    paths = sorted(corpus.glob("*.json"))
    if not paths:
        _fail(f"no snapshot JSON files under {corpus}")
    labels = _load_labels(args.labels)
    config = _load_config(args.config)
    overrides = None
    if args.string_scores:
        try:
            overrides = load_overrides(args.string_scores)
        except OverrideFormatError as exc:
            _fail(str(exc))

    idf = pipeline.build_corpus_idf(paths, workers=args.workers)

    config_dict = dict(vars(config))
    idf_dict = idf.to_json_dict()
    work = [(str(p), config_dict, idf_dict, overrides) for p in paths]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_extract_one, work))
    else:
        outcomes = [_extract_one(w) for w in work]

    rows: list[str] = []
    counts = {"ok": 0, "failed": 0}
    zero = np.zeros(config.dims.total)
    for stem, result, err in outcomes:
        binary_id = result.binary_id if result is not None else stem
        if binary_id not in labels and stem in labels:
            binary_id = stem
        if binary_id not in labels:
            _fail(f"no label for {binary_id}")
        if result is None:
            print(f"warning: {stem}: {err}; emitting default row", file=sys.stderr)
            rows.append(pipeline.format_feature_row(binary_id, labels[binary_id], zero))
            counts["failed"] += 1
            continue
        if result.case is SelectionCase.FAILED:
            print(
                f"warning: {stem}: extraction failed "
                f"({'; '.join(result.diagnostics)}); default row",
                file=sys.stderr,
            )
            counts["failed"] += 1
        else:
            counts["ok"] += 1
        rows.append(pipeline.format_feature_row(binary_id, labels[binary_id], result.vector))

    out = Path(args.out)
    out.write_text("\n".join(rows) + "\n")
    idf_path = Path(args.idf_out) if args.idf_out else out.with_suffix(out.suffix + ".idf.json")
    pipeline.save_idf(idf, idf_path)
    print(
        f"extracted {len(rows)} rows ({counts['ok']} ok, {counts['failed']} failed) "
        f"-> {out}; idf -> {idf_path}"
    )
    return 0


def cmd_train(args) -> int:
    try:
        ids, X, y = pipeline.parse_feature_file(args.features)
    except (OSError, ValueError, classifier.EmptyDatasetError) as exc:
        _fail(f"cannot read features: {exc}")
    for cls in (0, 1):
        if int(np.sum(y == cls)) < 2:
            _fail(f"need at least 2 samples of class {cls}")
    config = _load_config(args.config)
    widths = config.hidden_widths or classifier.DEFAULT_WIDTHS
    if widths[-1] != 1:
        widths = tuple(widths) + (1,)

    train_idx, test_idx = pipeline.stratified_split(y, args.split, args.seed)
    scaler = fit_scaler(X[train_idx])
    Xtr, Xte = transform(X[train_idx], scaler), transform(X[test_idx], scaler)

    tc = TrainConfig(
        widths=tuple(widths),
        epochs=args.epochs if args.epochs is not None else config.epochs,
        batch_size=args.batch if args.batch is not None else config.batch,
        learning_rate=args.lr if args.lr is not None else config.learning_rate,
        optimizer=args.optimizer or config.optimizer,
        seed=args.seed,
        batch_norm=config.batch_norm,
        dropout=config.dropout,
    )
    params = classifier.train(Xtr, y[train_idx], tc)
    pipeline.save_model(args.model_out, params, scaler, config)

    for name, Xs, ys in (("train", Xtr, y[train_idx]), ("test", Xte, y[test_idx])):
        scores = classifier.predict(params, Xs)
        m = metrics_from_scores(scores, ys)
        print(
            f"{name}: accuracy={m.accuracy:.4f} precision={m.precision:.4f} "
            f"recall={m.recall:.4f} f1={m.f1:.4f} auc={m.auc:.4f} "
            f"fpr={m.fpr:.4f} loss={m.loss:.4f}"
        )
    print(f"model -> {args.model_out}")
    return 0


def cmd_classify(args) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except (DecodeError, SchemaError, OSError) as exc:
        _fail(f"cannot read snapshot: {exc}")
    try:
        params, scaler, saved_config = pipeline.load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot read model: {exc}")
    try:
        idf = pipeline.load_idf(args.idf)
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot read idf table: {exc}")
    config = PipelineConfig(**saved_config) if saved_config else _load_config(args.config)
    overrides = load_overrides(args.string_scores) if args.string_scores else None

    result = pipeline.extract_features(snap, config, idf, overrides)
    if result.vector.shape[0] != params.input_dim:
        _fail(
            f"feature width {result.vector.shape[0]} does not match model input "
            f"{params.input_dim}"
        )
    score = float(classifier.predict(params, transform(result.vector, scaler))[0])
    verdict = "malware" if score >= 0.5 else "benign"
    print(f"score={score:.6f} verdict={verdict}")
    return 0


def _print_report(result: ExtractionResult) -> None:
    print(f"binary: {result.binary_id}")
    print(f"case: {result.case.value}")
    if result.diagnostics:
        for d in result.diagnostics:
            print(f"diagnostic: {d}")
    if result.ranked_strings:
        print("ranked strings:")
        for rs in result.ranked_strings[:10]:
            print(f"  {rs.score:5.2f}  {rs.text}")
    else:
        print("ranked strings: none")
    if result.case is SelectionCase.NO_MALICIOUS:
        print("no malicious strings mapped; fell back to the entry node")
    for i, region in enumerate(result.regions):
        print(f"region {i}: seed node {region.seed} at {region.seed_addr:#x}")
        print(f"  bfs nodes: {', '.join(str(n) for n in region.subgraph.bfs_order)}")
        print(f"  opcodes: {', '.join(region.opcode_tokens) or '(none)'}")
        print(f"  apis: {', '.join(region.api_tokens) or '(none)'}")
        print(f"  signatures: {', '.join(str(v) for v in region.signature_values)}")


def cmd_inspect(args) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except (DecodeError, SchemaError, OSError) as exc:
        _fail(f"cannot read snapshot: {exc}")
    config = _load_config(args.config)
    overrides = None
    if args.string_scores:
        try:
            overrides = load_overrides(args.string_scores)
        except OverrideFormatError as exc:
            _fail(str(exc))
    result = pipeline.extract_features(snap, config, IdfTable(), overrides)
    _print_report(result)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="malregion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="two-pass corpus feature extraction")
    p.add_argument("--corpus", required=True, help="directory of snapshot JSON files")
    p.add_argument("--labels", required=True, help="CSV: binary_id,label")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--out", required=True, help="feature file path")
    p.add_argument("--idf-out", default=None, help="idf table path (default: <out>.idf.json)")
    p.add_argument("--string-scores", default=None, help="override score JSON")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the feedforward classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="score one snapshot with a trained model")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--idf", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--string-scores", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("inspect", help="report detected regions of one snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--string-scores", default=None)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
