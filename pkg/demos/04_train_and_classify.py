#!/usr/bin/env python3
"""Train the classifier end to end on a generated corpus.

Generates 60 benign and 60 malicious synthetic snapshots, extracts the
1422-value vectors (two passes: trigram document frequencies, then feature
emission), trains a reduced-width network, and scores two held-back
snapshots the way the `classify` command would.
"""
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "tests"))
from synth import write_corpus  # noqa: E402

from malregion.classifier import (
    TrainConfig,
    fit_scaler,
    metrics_from_scores,
    predict,
    train,
    transform,
)
from malregion.pipeline import (
    PipelineConfig,
    build_corpus_idf,
    extract_features,
    parse_feature_file,
    format_feature_row,
    stratified_split,
)
from malregion.snapshot import load_snapshot

workdir = Path(tempfile.mkdtemp(prefix="malregion-demo-"))
corpus = workdir / "corpus"
write_corpus(corpus, 60, 60, seed=7)
labels = {
    line.split(",")[0]: int(line.split(",")[1])
    for line in (corpus / "labels.csv").read_text().splitlines()
}
paths = sorted(corpus.glob("*.json"))
print(f"corpus: {len(paths)} snapshots under {corpus}")

idf = build_corpus_idf(paths)
print(f"pass 1 done: {idf.doc_count} documents, {len(idf.df)} distinct trigrams")

rows = []
for p in paths:
    res = extract_features(load_snapshot(p), PipelineConfig(), idf)
    rows.append(format_feature_row(res.binary_id, labels[res.binary_id], res.vector))
feature_file = workdir / "features.csv"
feature_file.write_text("\n".join(rows) + "\n")
ids, X, y = parse_feature_file(feature_file)
print(f"pass 2 done: feature matrix {X.shape}")

train_idx, test_idx = stratified_split(y, 0.7, seed=0)
scaler = fit_scaler(X[train_idx])
config = TrainConfig(widths=(64, 32, 1), epochs=12, batch_size=200,
                     learning_rate=0.001, optimizer="adam", seed=0)
params = train(transform(X[train_idx], scaler), y[train_idx], config)

for name, idx in (("train", train_idx), ("test", test_idx)):
    m = metrics_from_scores(predict(params, transform(X[idx], scaler)), y[idx])
    print(f"{name}: accuracy={m.accuracy:.3f} precision={m.precision:.3f} "
          f"recall={m.recall:.3f} auc={m.auc:.3f} fpr={m.fpr:.3f} loss={m.loss:.3f}")

for stem in ("benign0000", "malware0000"):
    res = extract_features(load_snapshot(corpus / f"{stem}.json"), PipelineConfig(), idf)
    score = float(predict(params, transform(res.vector, scaler))[0])
    verdict = "malware" if score >= 0.5 else "benign"
    print(f"{stem}: score={score:.4f} -> {verdict}")
