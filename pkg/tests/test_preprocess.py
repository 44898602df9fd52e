import random

import pytest

from malregion.preprocess import merge_chains, remove_loops
from malregion.snapshot import Stage, build_cfg, load_snapshot

from conftest import (
    cfg_from,
    has_cycle,
    mergeable_pairs,
    random_cfg,
    random_dag_cfg,
    reachable_from,
)


def nodes_and_edges(cfg):
    return set(cfg.nodes), set(cfg.edges())


def test_fig3_back_edges_removed_and_acyclic(fig3_path):
    raw = build_cfg(load_snapshot(fig3_path))
    partial = remove_loops(raw)
    assert partial.stage is Stage.PARTIAL
    assert set(partial.nodes) == set(raw.nodes)
    assert not has_cycle(partial)
    removed = set(raw.edges()) - set(partial.edges())
    assert (9, 9) in removed  # self-loop always goes
    assert all(e in set(raw.edges()) for e in partial.edges())


def test_fig3_merges_exactly_the_four_pairs(fig3_path):
    raw = build_cfg(load_snapshot(fig3_path))
    complete = merge_chains(remove_loops(raw))
    assert set(raw.nodes) - set(complete.nodes) == {1, 6, 7, 12}
    for parent, child in [(0, 1), (5, 6), (3, 7), (11, 12)]:
        got = [i.address for i in complete.nodes[parent].instructions]
        want = [
            i.address
            for i in raw.nodes[parent].instructions + raw.nodes[child].instructions
        ]
        assert got == want
    assert not mergeable_pairs(complete)
    assert not has_cycle(complete)


def test_dag_input_passes_through_unchanged():
    cfg = cfg_from(4, [[0, 1], [0, 2], [1, 3], [2, 3]])
    partial = remove_loops(cfg)
    assert set(partial.edges()) == set(cfg.edges())
    assert partial.stage is Stage.PARTIAL


def test_self_loop_removed():
    partial = remove_loops(cfg_from(2, [[0, 0], [0, 1]]))
    assert set(partial.edges()) == {(0, 1)}


def test_unreachable_cycle_still_broken():
    # 1 <-> 2 unreachable from entry 0; output must still be acyclic
    partial = remove_loops(cfg_from(3, [[1, 2], [2, 1]]))
    assert not has_cycle(partial)
    assert set(partial.nodes) == {0, 1, 2}


def test_path_graph_collapses_to_one_node():
    complete = merge_chains(remove_loops(cfg_from(3, [[0, 1], [1, 2]])))
    assert set(complete.nodes) == {0}
    assert len(complete.nodes[0].instructions) == 3
    assert complete.entry == 0


def test_stage_guards():
    cfg = cfg_from(2, [[0, 1]])
    partial = remove_loops(cfg)
    with pytest.raises(ValueError):
        remove_loops(partial)
    with pytest.raises(ValueError):
        merge_chains(cfg)


def test_entry_follows_merge_into_predecessor():
    # unreachable prefix 1 -> 0(entry): pair (1, 0) merges, entry moves to 1
    cfg = cfg_from(3, [[1, 0], [0, 2], [2, 0]], entry_addr=0x401000)
    complete = merge_chains(remove_loops(cfg))
    assert complete.entry in complete.nodes


def test_random_graphs_loop_removal_oracle():
    rng = random.Random(1234)
    for _ in range(1000):
        raw = random_cfg(rng)
        partial = remove_loops(raw)
        assert not has_cycle(partial)
        assert set(partial.nodes) == set(raw.nodes)
        assert set(partial.edges()) <= set(raw.edges())


def test_random_dags_merge_leaves_no_pair_and_preserves_instructions():
    rng = random.Random(99)
    for _ in range(1000):
        partial = random_dag_cfg(rng)
        complete = merge_chains(partial)
        assert mergeable_pairs(complete) == []
        before = sum(len(b.instructions) for b in partial.nodes.values())
        after = sum(len(b.instructions) for b in complete.nodes.values())
        assert before == after


def test_idempotence_of_both_passes():
    rng = random.Random(5)
    for _ in range(200):
        raw = random_cfg(rng, max_nodes=30)
        partial = remove_loops(raw)
        again = remove_loops(
            type(partial)(
                nodes=partial.nodes,
                succ=partial.succ,
                pred=partial.pred,
                entry=partial.entry,
                stage=Stage.RAW,
            )
        )
        assert set(again.edges()) == set(partial.edges())
        complete = merge_chains(partial)
        twice = merge_chains(
            type(complete)(
                nodes=complete.nodes,
                succ=complete.succ,
                pred=complete.pred,
                entry=complete.entry,
                stage=Stage.PARTIAL,
            )
        )
        assert set(twice.edges()) == set(complete.edges())
        assert set(twice.nodes) == set(complete.nodes)


def test_merge_preserves_reachability_between_survivors():
    rng = random.Random(42)
    for _ in range(200):
        partial = random_dag_cfg(rng, max_nodes=15)
        complete = merge_chains(partial)
        # survivors absorb chains; map each original node to its survivor
        survivor = {}
        for sid, block in complete.nodes.items():
            for ins in block.instructions:
                survivor[ins.address] = sid
        for a in complete.nodes:
            reach_before = reachable_from(partial, a)
            reach_after = reachable_from(complete, a)
            for b in complete.nodes:
                if b == a:
                    continue
                if b in reach_before:
                    assert b in reach_after
