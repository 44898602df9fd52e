"""Seed selection and subgraph extraction around potential malicious nodes.

A region is the neighborhood of a seed node in the partially preprocessed
CFG: everything reachable within ``levels`` predecessor hops plus
everything within ``levels`` successor hops.  Regions get a deterministic
BFS order that starts from the subgraph's topmost level.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .snapshot import Cfg, Stage
from .strings import RankedString

DEFAULT_LEVELS = 2
DEFAULT_MAX_REGIONS = 10


class SelectionCase(Enum):
    TEN_OR_MORE = "ten_or_more"
    ONE_TO_NINE = "one_to_nine"
    NO_MALICIOUS = "no_malicious"
    FAILED = "failed"


@dataclass(frozen=True)
class RegionSelection:
    seeds: tuple[int, ...]
    case: SelectionCase

    def __post_init__(self):
        if self.case is SelectionCase.FAILED and self.seeds:
            raise ValueError("failed selection carries no seeds")
        if self.case is SelectionCase.NO_MALICIOUS and len(self.seeds) != 1:
            raise ValueError("no-malicious selection holds exactly the fallback seed")


@dataclass(frozen=True)
class Subgraph:
    seed: int
    nodes: frozenset[int]
    bfs_order: tuple[int, ...]
    levels: int


def _hops(cfg: Cfg, start: int, levels: int, forward: bool) -> set[int]:
    adj = cfg.succ if forward else cfg.pred
    seen = {start}
    frontier = [start]
    for _ in range(levels):
        nxt = []
        for node in frontier:
            for other in adj[node]:
                if other not in seen:
                    seen.add(other)
                    nxt.append(other)
        frontier = nxt
    seen.discard(start)
    return seen


def bfs_order(members: frozenset[int], cfg: Cfg) -> tuple[int, ...]:
    """BFS over the induced edges, rooted at the topmost level.

    Roots are the members with no predecessor inside the subgraph, queued in
    ascending NodeId; neighbors expand in ascending NodeId.  Members the
    search misses are appended in ascending NodeId.
    """
    roots = sorted(
        n for n in members if not any(p in members for p in cfg.pred[n])
    )
    seen = set(roots)
    order: list[int] = []
    queue = deque(roots)
    while queue:
        node = queue.popleft()
        order.append(node)
        for child in cfg.succ[node]:
            if child in members and child not in seen:
                seen.add(child)
                queue.append(child)
    for leftover in sorted(members - seen):
        order.append(leftover)
    return tuple(order)


def extract_subgraph(cfg: Cfg, seed: int, levels: int = DEFAULT_LEVELS) -> Subgraph:
    """Neighborhood of ``seed``: <= levels hops up plus <= levels hops down."""
    if seed not in cfg.nodes:
        raise KeyError(f"seed node {seed} not in CFG")
    members = frozenset({seed} | _hops(cfg, seed, levels, False) | _hops(cfg, seed, levels, True))
    return Subgraph(seed=seed, nodes=members, bfs_order=bfs_order(members, cfg), levels=levels)


def select_seed_nodes(
    cfg: Optional[Cfg],
    ranked: Sequence[RankedString],
    mapper: Callable[[RankedString], set[int]],
    max_regions: int = DEFAULT_MAX_REGIONS,
) -> RegionSelection:
    """Walk strings in rank order and collect distinct mapped nodes as seeds.

    ``cfg`` is None when CFG construction failed upstream; that is the
    FAILED case, a value rather than an error.  With zero mapped nodes the
    entry node stands in as the single seed.
    """
    if cfg is None:
        return RegionSelection(seeds=(), case=SelectionCase.FAILED)
    if cfg.stage is not Stage.PARTIAL:
        raise ValueError("seed selection runs on the partially preprocessed CFG")

    seeds: list[int] = []
    seen: set[int] = set()
    for entry in ranked:
        if len(seeds) >= max_regions:
            break
        for node in sorted(mapper(entry)):
            if node not in seen:
                seen.add(node)
                seeds.append(node)
                if len(seeds) >= max_regions:
                    break

    if not seeds:
        return RegionSelection(seeds=(cfg.entry,), case=SelectionCase.NO_MALICIOUS)
    case = SelectionCase.TEN_OR_MORE if len(seeds) >= max_regions else SelectionCase.ONE_TO_NINE
    return RegionSelection(seeds=tuple(seeds), case=case)
