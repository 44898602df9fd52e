#!/usr/bin/env python3
"""Walk through CFG preprocessing on the bundled thirteen-block fixture.

The raw graph carries three loops (a self-loop and two back jumps).  Loop
removal drops exactly those edges; chain merging then fuses every parent
that has a single child with that child when it has no other parent.
"""
from pathlib import Path

from malregion import build_cfg, load_snapshot, merge_chains, remove_loops

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "fig3.json"


def show(cfg, title):
    print(f"\n{title}: {len(cfg.nodes)} nodes, {len(cfg.edges())} edges "
          f"(stage={cfg.stage.value})")
    for n in cfg.node_ids():
        succs = ", ".join(str(s) for s in cfg.succ[n]) or "-"
        print(f"  node {n:2d} @ {cfg.nodes[n].start_addr:#x} -> {succs}")


snap = load_snapshot(FIXTURE)
raw = build_cfg(snap)
show(raw, "raw CFG")

partial = remove_loops(raw)
removed = sorted(set(raw.edges()) - set(partial.edges()))
print(f"\nback edges removed: {removed}")
show(partial, "partially preprocessed (loops removed)")

complete = merge_chains(partial)
absorbed = sorted(set(partial.nodes) - set(complete.nodes))
print(f"\nchain children absorbed into their parents: {absorbed}")
show(complete, "completely preprocessed (chains merged)")

for parent in (0, 5, 3, 11):
    block = complete.nodes[parent]
    print(f"merged node {parent} now holds {len(block.instructions)} instructions")
