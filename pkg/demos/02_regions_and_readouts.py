#!/usr/bin/env python3
"""From a ranked string to a region readout.

The fixture contains a single suspicious string referenced from one basic
block.  String ranking puts it on top, mapping ties it to its block, and
the two-level subgraph around that seed yields the BFS opcode sequence,
API sequence, and structural signature bytes that feed the feature vector.
"""
from pathlib import Path

from malregion import load_snapshot
from malregion.features import IdfTable
from malregion.pipeline import PipelineConfig, extract_features

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "fig5.json"

snap = load_snapshot(FIXTURE)
result = extract_features(snap, PipelineConfig(), IdfTable())

print(f"binary {result.binary_id}: selection case = {result.case.value}")
print("\nranked strings:")
for rs in result.ranked_strings:
    print(f"  {rs.score:5.2f}  {rs.text!r}  refs={['%#x' % a for a in rs.ref_addrs]}")

for i, region in enumerate(result.regions):
    print(f"\nregion {i}: seed node {region.seed} @ {region.seed_addr:#x}")
    print(f"  members:    {sorted(region.subgraph.nodes)}")
    print(f"  bfs order:  {list(region.subgraph.bfs_order)}")
    print(f"  opcodes:    {', '.join(region.opcode_tokens)}")
    print(f"  apis:       {', '.join(region.api_tokens)}")
    print(f"  signatures: {', '.join(str(v) for v in region.signature_values)}")

vec = result.vector
print(f"\nassembled feature vector: {vec.shape[0]} values")
print(f"  api hash block nonzeros:     {int((vec[:100] != 0).sum())}")
print(f"  opcode hash block nonzeros:  {int((vec[100:200] != 0).sum())}")
print(f"  first region signature head: {vec[200:208].tolist()}")
print(f"  nop count / ratio flag:      {vec[1420]:.0f} / {vec[1421]:.0f}")
