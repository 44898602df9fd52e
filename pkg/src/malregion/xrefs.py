"""Mapping imported APIs and ranked strings to CFG nodes.

Direct references are call instructions (or string references) that land
inside a block of the entry function's CFG.  Indirect references travel
through the cross-reference graph: starting from the function that touches
the API's PLT slot (or the string), every simple path to ``entry()`` is
enumerated and the functions sitting immediately before ``entry()`` on
those paths are collected; CFG blocks calling any of them receive the
mapping.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .snapshot import Cfg, DisassemblySnapshot, FUNCTION_LIMIT, ImportedApi, Stage
from .strings import RankedString


class FunctionLimitError(ValueError):
    """Raised when a binary has too many functions for path enumeration."""


@dataclass(frozen=True)
class CallXrefGraph:
    """Directed cross-reference graph over function entry addresses.

    An edge F -> G means function G contains a call (cross-reference) to F,
    so walking edges moves from callee toward caller.  ``entry_addr`` is the
    entry() function's node.
    """

    nodes: frozenset[int]
    succ: dict[int, tuple[int, ...]]
    entry_addr: int

    def successors(self, n: int) -> tuple[int, ...]:
        return self.succ.get(n, ())


def build_xref_graph(snapshot: DisassemblySnapshot) -> CallXrefGraph:
    """One node per function plus entry(); an edge callee -> caller per call site.

    Call sites whose callee is not a known function entry (e.g. direct PLT
    calls) contribute no edge; they are the anchors used to find an API's
    source functions instead.
    """
    if len(snapshot.functions) > FUNCTION_LIMIT:
        raise FunctionLimitError(
            f"{snapshot.binary_id}: {len(snapshot.functions)} functions exceed the "
            f"{FUNCTION_LIMIT}-function limit for cross-reference path enumeration"
        )
    fn_addrs = {fn.entry_addr for fn in snapshot.functions}
    fn_addrs.add(snapshot.entry_addr)
    succ: dict[int, set[int]] = {a: set() for a in fn_addrs}
    for fn in snapshot.functions:
        for _caller_addr, callee_addr in fn.call_sites:
            if callee_addr in fn_addrs:
                succ[callee_addr].add(fn.entry_addr)
    return CallXrefGraph(
        nodes=frozenset(fn_addrs),
        succ={a: tuple(sorted(s)) for a, s in succ.items()},
        entry_addr=snapshot.entry_addr,
    )


def simple_paths(xg: CallXrefGraph, source: int, target: int) -> list[list[int]]:
    """All simple paths source -> target, DFS order, no node revisited."""
    if source not in xg.nodes or target not in xg.nodes:
        return []
    paths: list[list[int]] = []
    path = [source]
    on_path = {source}

    def walk(node: int) -> None:
        if node == target:
            paths.append(list(path))
            return
        for nxt in xg.successors(node):
            if nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                walk(nxt)
                path.pop()
                on_path.discard(nxt)

    walk(source)
    return paths


def pre_entry_functions(xg: CallXrefGraph, source: int) -> set[int]:
    """Functions appearing immediately before entry() on any simple path."""
    hops: set[int] = set()
    for path in simple_paths(xg, source, xg.entry_addr):
        if len(path) >= 2:
            hops.add(path[-2])
    return hops


def _blocks_calling(cfg: Cfg, target_addrs: Iterable[int]) -> set[int]:
    targets = set(target_addrs)
    if not targets:
        return set()
    hit: set[int] = set()
    for nid, block in cfg.nodes.items():
        for ins in block.instructions:
            if ins.is_call and ins.call_target in targets:
                hit.add(nid)
                break
    return hit


def _functions_referencing(snapshot: DisassemblySnapshot, addrs: Iterable[int]) -> set[int]:
    """Entry addresses of functions whose extent contains any of ``addrs``."""
    sources: set[int] = set()
    for addr in addrs:
        fn = snapshot.function_at(addr)
        if fn is not None:
            sources.add(fn.entry_addr)
    return sources


def _map_sources_to_nodes(
    snapshot: DisassemblySnapshot, cfg: Cfg, xg: CallXrefGraph, sources: Iterable[int]
) -> set[int]:
    hops: set[int] = set()
    for src in sorted(set(sources)):
        if src == xg.entry_addr:
            continue  # reference already inside entry(); direct route covers it
        hops |= pre_entry_functions(xg, src)
    return _blocks_calling(cfg, hops)


def map_api_to_nodes(
    api: ImportedApi,
    snapshot: DisassemblySnapshot,
    cfg: Cfg,
    xg: CallXrefGraph,
) -> set[int]:
    """CFG nodes an imported API belongs to (direct calls plus xref paths)."""
    if cfg.stage is not Stage.PARTIAL:
        raise ValueError("API mapping runs on the partially preprocessed CFG")
    direct = _blocks_calling(cfg, {api.plt_addr})
    xref_sources = {
        fn.entry_addr
        for fn in snapshot.functions
        if any(callee == api.plt_addr for _caller, callee in fn.call_sites)
    }
    return direct | _map_sources_to_nodes(snapshot, cfg, xg, xref_sources)


def map_string_to_nodes(
    s: RankedString,
    snapshot: DisassemblySnapshot,
    cfg: Cfg,
    xg: CallXrefGraph,
) -> set[int]:
    """Same contract as API mapping, with ref_addrs playing the PLT role."""
    if cfg.stage is not Stage.PARTIAL:
        raise ValueError("string mapping runs on the partially preprocessed CFG")
    direct = {
        nid
        for nid, block in cfg.nodes.items()
        if any(block.contains(addr) for addr in s.ref_addrs)
    }
    outside = [
        addr
        for addr in s.ref_addrs
        if not any(block.contains(addr) for block in cfg.nodes.values())
    ]
    sources = _functions_referencing(snapshot, outside)
    return direct | _map_sources_to_nodes(snapshot, cfg, xg, sources)
