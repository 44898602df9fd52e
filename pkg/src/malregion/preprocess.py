"""CFG preprocessing: loop removal and single-child chain merging.

Two rewrites harden the graph against small hacker-induced edits:

* ``remove_loops`` deletes the back edges of a canonical depth-first
  traversal, leaving an acyclic graph with the node set unchanged.
* ``merge_chains`` repeatedly fuses a parent with its only child when that
  child has no other parent, concatenating their instruction lists.
"""
from __future__ import annotations

from .snapshot import BasicBlock, Cfg, Stage, make_adjacency


def find_back_edges(cfg: Cfg) -> set[tuple[int, int]]:
    """Back edges of the canonical DFS.

    The traversal starts at the entry node and restarts from the remaining
    unvisited nodes in ascending NodeId, so unreachable components are
    covered too.  Successors are expanded in ascending NodeId, which makes
    the edge classification deterministic.  Self-loops are always back
    edges.
    """
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in cfg.nodes}
    back: set[tuple[int, int]] = set()

    def visit(root: int) -> None:
        stack: list[tuple[int, int]] = [(root, 0)]
        color[root] = GRAY
        while stack:
            node, i = stack[-1]
            succs = cfg.succ[node]
            if i < len(succs):
                stack[-1] = (node, i + 1)
                child = succs[i]
                if color[child] == GRAY:
                    back.add((node, child))
                elif color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, 0))
            else:
                color[node] = BLACK
                stack.pop()

    visit(cfg.entry)
    for n in sorted(cfg.nodes):
        if color[n] == WHITE:
            visit(n)
    return back


def remove_loops(cfg: Cfg) -> Cfg:
    """Raw -> Partial: drop DFS back edges so the graph becomes acyclic."""
    if cfg.stage is not Stage.RAW:
        raise ValueError(f"remove_loops expects a raw CFG, got stage {cfg.stage}")
    back = find_back_edges(cfg)
    kept = [e for e in cfg.edges() if e not in back]
    succ, pred = make_adjacency(cfg.nodes, kept)
    return Cfg(nodes=dict(cfg.nodes), succ=succ, pred=pred, entry=cfg.entry, stage=Stage.PARTIAL)


def merge_chains(cfg: Cfg) -> Cfg:
    """Partial -> Complete: collapse single-child/single-parent pairs.

    Scans nodes in ascending NodeId and merges until fixpoint.  A merged
    node keeps the parent's NodeId and start address; its instruction list
    is the parent's followed by the child's.  The rewrite system is
    confluent, the fixed scan order just makes outputs reproducible.
    """
    if cfg.stage is not Stage.PARTIAL:
        raise ValueError(f"merge_chains expects a partial CFG, got stage {cfg.stage}")

    nodes = dict(cfg.nodes)
    succ = {n: set(s) for n, s in cfg.succ.items()}
    pred = {n: set(p) for n, p in cfg.pred.items()}
    entry = cfg.entry

    changed = True
    while changed:
        changed = False
        for p in sorted(nodes):
            if p not in nodes:
                continue  # absorbed earlier in this pass
            while True:
                out = succ[p]
                if len(out) != 1:
                    break
                (c,) = out
                if c == p or len(pred[c]) != 1:
                    break
                nodes[p] = BasicBlock(
                    id=p,
                    start_addr=nodes[p].start_addr,
                    instructions=nodes[p].instructions + nodes[c].instructions,
                )
                succ[p] = set(succ[c])
                for g in succ[c]:
                    pred[g].discard(c)
                    pred[g].add(p)
                del nodes[c], succ[c], pred[c]
                if entry == c:
                    entry = p
                changed = True

    fsucc = {n: tuple(sorted(s)) for n, s in succ.items()}
    fpred = {n: tuple(sorted(ps)) for n, ps in pred.items()}
    return Cfg(nodes=nodes, succ=fsucc, pred=fpred, entry=entry, stage=Stage.COMPLETE)


def preprocess(cfg: Cfg) -> tuple[Cfg, Cfg]:
    """Convenience: (partial, complete) preprocessed forms of a raw CFG."""
    partial = remove_loops(cfg)
    return partial, merge_chains(partial)
