#!/usr/bin/env python3
"""Indirect API mapping through the cross-reference graph.

The fixture's only import is called deep inside helper f5.  Every simple
call path from f5 back to the entry function is enumerated; the functions
sitting immediately before entry() on those paths (f1 and f3) tell us
which CFG blocks ultimately reach the API.
"""
from pathlib import Path

from malregion import build_cfg, load_snapshot, remove_loops
from malregion.strings import rank_strings
from malregion.xrefs import (
    build_xref_graph,
    map_api_to_nodes,
    map_string_to_nodes,
    pre_entry_functions,
    simple_paths,
)

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "fig8.json"

snap = load_snapshot(FIXTURE)
cfg = remove_loops(build_cfg(snap))
xg = build_xref_graph(snap)

names = {f.entry_addr: f.name for f in snap.functions}
names[snap.entry_addr] = "entry()"

print("cross-reference edges (callee -> caller):")
for callee in sorted(xg.succ):
    for caller in xg.succ[callee]:
        print(f"  {names[callee]:7s} -> {names[caller]}")

api = snap.imports[0]
f5 = next(f.entry_addr for f in snap.functions if f.name == "f5")
paths = simple_paths(xg, f5, snap.entry_addr)
print(f"\n{api.name} is referenced inside f5; simple paths f5 -> entry(): {len(paths)}")
for p in paths:
    print("  " + " -> ".join(names[a] for a in p))

hops = pre_entry_functions(xg, f5)
print(f"\nfunctions immediately before entry(): {sorted(names[a] for a in hops)}")
print(f"CFG nodes calling them: {sorted(map_api_to_nodes(api, snap, cfg, xg))}")

ranked = rank_strings(snap.strings)
print(f"\nstring {ranked[0].text!r} referenced inside f5 maps the same way: "
      f"{sorted(map_string_to_nodes(ranked[0], snap, cfg, xg))}")
