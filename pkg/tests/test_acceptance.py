"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdicts.
"""
import hashlib
import random
import subprocess
import sys
import time

import numpy as np

from malregion.classifier import (
    TrainConfig,
    backward,
    bce_loss,
    fit_scaler,
    forward,
    init_params,
    metrics_from_scores,
    predict,
    roc_auc,
    train,
    transform,
)
from malregion.features import IdfTable, NodeSignature, RegionFeatures, assemble_vector
from malregion.pipeline import (
    PipelineConfig,
    extract_features,
    parse_feature_file,
    stratified_split,
)
from malregion.preprocess import merge_chains, remove_loops
from malregion.regions import extract_subgraph
from malregion.snapshot import Stage, build_cfg, load_snapshot
from malregion.cli import main as cli_main

from conftest import FIXTURES, has_cycle, mergeable_pairs, random_cfg
from synth import write_corpus
from test_classifier import concordance_auc, max_relative_error, numeric_gradients


def verdict(name: str, started: float, budget: float):
    elapsed = time.monotonic() - started
    print(f"PASS: {name} ({elapsed:.2f}s, budget {budget:g}s)")
    assert elapsed < budget


def test_criterion_loop_removal_and_merges_golden():
    t0 = time.monotonic()
    raw = build_cfg(load_snapshot(FIXTURES / "fig3.json"))
    partial = remove_loops(raw)
    complete = merge_chains(partial)
    assert not has_cycle(partial)
    assert not has_cycle(complete)
    assert set(raw.nodes) - set(complete.nodes) == {1, 6, 7, 12}
    for parent, child in [(0, 1), (5, 6), (3, 7), (11, 12)]:
        merged = [i.address for i in complete.nodes[parent].instructions]
        expected = [
            i.address
            for i in raw.nodes[parent].instructions + raw.nodes[child].instructions
        ]
        assert merged == expected
    assert mergeable_pairs(complete) == []
    verdict("thirteen-node preprocessing golden (merges exactly 0+1, 5+6, 3+7, 11+12)", t0, 1.0)


def test_criterion_two_level_subgraph_golden():
    t0 = time.monotonic()
    partial = remove_loops(build_cfg(load_snapshot(FIXTURES / "fig4.json")))
    sub = extract_subgraph(partial, 7, 2)
    assert set(sub.nodes) == {3, 4, 5, 6, 7, 9, 10, 11, 12}
    verdict("two-level subgraph around seed 7 equals {3,4,5,6,7,9,10,11,12}", t0, 1.0)


def test_criterion_bfs_readouts_golden():
    t0 = time.monotonic()
    res = extract_features(load_snapshot(FIXTURES / "fig5.json"), PipelineConfig(), IdfTable())
    region = res.regions[0]
    assert region.opcode_tokens == (
        "mov", "call", "sub", "jmp", "pop", "cmp", "push", "add",
    )
    assert region.api_tokens == (
        "GetCurrentProcess", "WriteFile", "EnterCriticalSection", "LoadLibraryA",
        "TerminateProcess", "VirtualFree", "GetCPInfo", "ExitProcess",
    )
    assert region.signature_values == (6, 6, 10, 10, 5, 10, 5, 9)
    verdict("BFS opcode/API/signature readouts match the published sequences", t0, 1.0)


def test_criterion_xref_paths_and_api_mapping_golden():
    t0 = time.monotonic()
    from malregion.xrefs import build_xref_graph, map_api_to_nodes, simple_paths

    snap = load_snapshot(FIXTURES / "fig8.json")
    xg = build_xref_graph(snap)
    f5 = next(f.entry_addr for f in snap.functions if f.name == "f5")
    assert len(simple_paths(xg, f5, snap.entry_addr)) == 7
    partial = remove_loops(build_cfg(snap))
    calls_f1_or_f3 = {
        nid
        for nid, block in partial.nodes.items()
        if any(
            ins.is_call
            and ins.call_target
            in {f.entry_addr for f in snap.functions if f.name in ("f1", "f3")}
            for ins in block.instructions
        )
    }
    assert map_api_to_nodes(snap.imports[0], snap, partial, xg) == calls_f1_or_f3 == {1, 2}
    verdict("xref fixture: exactly 7 simple paths; API maps to the f1/f3 callers", t0, 1.0)


def test_criterion_vector_shape_500_random_cases():
    t0 = time.monotonic()
    rng = random.Random(777)
    for _ in range(500):
        n_regions = rng.choice([0, 0, 1, 2, 3, 5, 9, 10])  # 0 covers Failed/NoMalicious padding
        regions = [
            RegionFeatures(
                seed=i,
                opcode_tokens=tuple(rng.choice(["mov", "add", "jmp"]) for _ in range(rng.randint(0, 40))),
                api_tokens=tuple(rng.choice(["A", "B", "C"]) for _ in range(rng.randint(0, 12))),
                signatures=tuple(
                    NodeSignature(rng.randint(0, 63), rng.randint(0, 3))
                    for _ in range(rng.randint(0, 180))
                ),
            )
            for i in range(n_regions)
        ]
        whole = [
            NodeSignature(rng.randint(0, 63), rng.randint(0, 3))
            for _ in range(rng.randint(0, 320))
        ]
        trigrams = [("mov|add|jmp", rng.random()) for _ in range(rng.randint(0, 15))]
        vec = assemble_vector(regions, whole, trigrams, rng.randint(0, 99), rng.randint(0, 1))
        assert vec.shape == (1422,)
        for slot in range(n_regions, 10):
            assert not vec[200 + slot * 100 : 300 + slot * 100].any()
        if len(whole) < 200:
            assert not vec[1200 + len(whole) : 1400].any()
    verdict("500 randomized selections all assemble to exactly 1422 with zero padding", t0, 10.0)


def test_criterion_preprocessing_properties_1000_digraphs():
    t0 = time.monotonic()
    rng = random.Random(424242)
    for _ in range(1000):
        raw = random_cfg(rng, max_nodes=50)
        partial = remove_loops(raw)
        assert not has_cycle(partial)
        complete = merge_chains(partial)
        assert mergeable_pairs(complete) == []
        # idempotence of both passes
        partial_again = remove_loops(
            type(partial)(partial.nodes, partial.succ, partial.pred, partial.entry, Stage.RAW)
        )
        assert set(partial_again.edges()) == set(partial.edges())
        complete_again = merge_chains(
            type(complete)(complete.nodes, complete.succ, complete.pred, complete.entry, Stage.PARTIAL)
        )
        assert set(complete_again.nodes) == set(complete.nodes)
        assert set(complete_again.edges()) == set(complete.edges())
    verdict("1000 random digraphs: acyclic output, no mergeable pair, idempotent", t0, 30.0)


def test_criterion_hashing_determinism_across_processes():
    t0 = time.monotonic()
    snippet = (
        "import sys, hashlib; "
        "from malregion.snapshot import load_snapshot; "
        "from malregion.pipeline import extract_features, PipelineConfig; "
        "from malregion.features import IdfTable; "
        "v = extract_features(load_snapshot(sys.argv[1]), PipelineConfig(), IdfTable()).vector; "
        "print(hashlib.sha256(v.tobytes()).hexdigest())"
    )
    for fixture in ("fig3.json", "fig4.json", "fig5.json", "fig8.json"):
        path = str(FIXTURES / fixture)
        in_process = set()
        for _ in range(2):
            vec = extract_features(load_snapshot(path), PipelineConfig(), IdfTable()).vector
            in_process.add(hashlib.sha256(vec.tobytes()).hexdigest())
        assert len(in_process) == 1
        out = subprocess.run(
            [sys.executable, "-c", snippet, path], capture_output=True, text=True, check=True
        )
        assert out.stdout.strip() == in_process.pop()
    verdict("feature extraction bit-identical on rerun and across processes", t0, 30.0)


def test_criterion_gradient_check():
    t0 = time.monotonic()
    rng = np.random.default_rng(99)
    params = init_params(6, (8, 4, 1), np.random.default_rng(1), batch_norm=False, dropout=0.0)
    X = rng.normal(size=(20, 6))
    y = (rng.random(20) < 0.5).astype(float)
    caches, _ = forward(X, params, mode="infer")
    dW, db, _, _ = backward(params, caches, y)
    numeric = numeric_gradients(params, X, y, step=1e-5)
    err = max_relative_error(dW + db, numeric)
    assert err < 1e-4, err
    verdict(f"[8,4,1] gradient check vs central differences (max rel err {err:.2e})", t0, 5.0)


def test_criterion_bce_analytic_point():
    t0 = time.monotonic()
    assert abs(bce_loss(np.array([0.5]), np.array([1.0])) - np.log(2)) < 1e-9
    verdict("bce(0.5, 1) = ln 2 within 1e-9", t0, 1.0)


def test_criterion_metrics_oracle():
    t0 = time.monotonic()
    scores = np.array([0.9] * 9 + [0.7] + [0.2] + [0.1] * 9)
    labels = np.array([1.0] * 9 + [0.0] + [1.0] + [0.0] * 9)
    m = metrics_from_scores(scores, labels)
    assert m.precision == 0.9 and m.recall == 0.9 and m.accuracy == 0.9 and m.fpr == 0.1
    rng = np.random.default_rng(55)
    for _ in range(30):
        n = int(rng.integers(5, 80))
        s = np.round(rng.random(n), 2)
        y = (rng.random(n) < 0.5).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        assert abs(roc_auc(s, y) - concordance_auc(s, y)) < 1e-9
    verdict("TP9/FP1/FN1/TN9 metrics exact; AUC matches pairwise concordance", t0, 5.0)


def test_criterion_end_to_end_synthetic_corpus(tmp_path):
    t0 = time.monotonic()
    corpus = tmp_path / "corpus"
    labels = write_corpus(corpus, 200, 200, seed=2024)
    features = tmp_path / "features.csv"
    rc = cli_main(
        ["extract", "--corpus", str(corpus), "--labels", str(labels), "--out", str(features)]
    )
    assert rc == 0
    ids, X, y = parse_feature_file(features)
    assert len(ids) == 400

    train_idx, test_idx = stratified_split(y, 0.7, seed=0)
    scaler = fit_scaler(X[train_idx])
    config = TrainConfig(
        widths=(64, 32, 1),      # reduced-width stack for desk scale
        epochs=12,
        batch_size=200,
        learning_rate=0.001,
        optimizer="adam",
        seed=0,
        batch_norm=True,
        dropout=0.2,
    )
    params = train(transform(X[train_idx], scaler), y[train_idx], config)
    scores = predict(params, transform(X[test_idx], scaler))
    m = metrics_from_scores(scores, y[test_idx])
    print(
        f"  held-out: accuracy={m.accuracy:.4f} fpr={m.fpr:.4f} auc={m.auc:.4f} "
        f"loss={m.loss:.4f} (n={len(test_idx)})"
    )
    assert m.accuracy >= 0.95, m
    assert m.fpr <= 0.05, m
    verdict("synthetic 200+200 corpus, 12 epochs/batch 200: accuracy >= 0.95, FPR <= 0.05", t0, 300.0)
