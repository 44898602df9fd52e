from __future__ import annotations

import random
from pathlib import Path

import pytest

from malregion.snapshot import Cfg, Stage, build_cfg, parse_snapshot

FIXTURES = Path(__file__).parent / "fixtures"

BASE = 0x401000


def make_snapshot_dict(
    n_blocks: int,
    edges,
    mnemonics=None,
    strings=(),
    imports=(),
    functions=None,
    sections=None,
    binary_id="testbin0",
    entry_addr=None,
    calls=None,
):
    """Small hand-rolled snapshot document for inline tests."""
    calls = calls or {}
    blocks = []
    for i in range(n_blocks):
        start = BASE + i * 16
        mnems = (mnemonics or {}).get(i, ["mov"])
        instructions = []
        for k, m in enumerate(mnems):
            ins = {"addr": start + 4 * k, "mnemonic": m}
            if (i, k) in calls:
                ins["is_call"] = True
                ins["call_target"] = calls[(i, k)]
            instructions.append(ins)
        blocks.append({"id": i, "start_addr": start, "instructions": instructions})
    return {
        "schema_version": 1,
        "binary_id": binary_id,
        "sections": list(sections) if sections is not None
        else [{"name": ".text", "virtual_size": 4096, "physical_size": 4096}],
        "imports": list(imports),
        "strings": list(strings),
        "functions": functions
        if functions is not None
        else [{"name": "entry0", "entry_addr": BASE, "call_sites": []}],
        "entry_function": {"name": "entry0", "addr": entry_addr if entry_addr is not None else BASE},
        "blocks": blocks,
        "edges": [list(e) for e in edges],
    }


def snapshot_from(n_blocks, edges, **kw):
    return parse_snapshot(make_snapshot_dict(n_blocks, edges, **kw))


def cfg_from(n_blocks, edges, **kw):
    return build_cfg(snapshot_from(n_blocks, edges, **kw))


def random_cfg(rng: random.Random, max_nodes: int = 50, p_edge: float = 0.08) -> Cfg:
    """Random raw digraph (self-loops allowed) packaged as a Cfg."""
    n = rng.randint(1, max_nodes)
    edges = set()
    for u in range(n):
        for v in range(n):
            if rng.random() < p_edge:
                edges.add((u, v))
    return cfg_from(n, sorted(edges))


def random_dag_cfg(rng: random.Random, max_nodes: int = 50, p_edge: float = 0.1) -> Cfg:
    """Random acyclic graph already at the partial stage."""
    n = rng.randint(1, max_nodes)
    edges = set()
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p_edge:
                edges.add((u, v))
    cfg = cfg_from(n, sorted(edges))
    return Cfg(nodes=cfg.nodes, succ=cfg.succ, pred=cfg.pred, entry=cfg.entry, stage=Stage.PARTIAL)


def has_cycle(cfg: Cfg) -> bool:
    """Brute-force cycle detector, independent of the library's DFS."""
    state = {n: 0 for n in cfg.nodes}

    def walk(u):
        state[u] = 1
        for v in cfg.succ[u]:
            if state[v] == 1 or (state[v] == 0 and walk(v)):
                return True
        state[u] = 2
        return False

    return any(state[n] == 0 and walk(n) for n in cfg.nodes)


def mergeable_pairs(cfg: Cfg):
    """Exhaustive scan for (single-child parent, single-parent child) pairs."""
    return [
        (p, cfg.succ[p][0])
        for p in cfg.nodes
        if len(cfg.succ[p]) == 1
        and cfg.succ[p][0] != p
        and len(cfg.pred[cfg.succ[p][0]]) == 1
    ]


def reachable_from(cfg: Cfg, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in cfg.succ[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


@pytest.fixture(scope="session")
def fig3_path():
    return FIXTURES / "fig3.json"


@pytest.fixture(scope="session")
def fig4_path():
    return FIXTURES / "fig4.json"


@pytest.fixture(scope="session")
def fig5_path():
    return FIXTURES / "fig5.json"


@pytest.fixture(scope="session")
def fig8_path():
    return FIXTURES / "fig8.json"
