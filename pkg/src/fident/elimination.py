"""Functional elimination, latent projection and functional projection on DAGs."""

from __future__ import annotations

from typing import Iterable

from .graph import CausalGraph, GraphError, bidirected_name

__all__ = ["felim_dag", "project", "fproject", "elimination_order"]


def elimination_order(g: CausalGraph, targets: Iterable[str]) -> list[str]:
    targets = set(targets)
    return [n for n in reversed(g.order) if n in targets]


def _eliminate_one(g: CausalGraph, w: str) -> CausalGraph:
    pa, ch = g.parents(w), g.children(w)
    edges = {(p, c) for p, c in g.edges if w not in (p, c)}
    edges |= {(p, c) for p in pa for c in ch}
    return CausalGraph(
        nodes=g.nodes - {w},
        edges=edges,
        observed=g.observed - {w},
        functional=g.functional - {w},
    )


def felim_dag(g: CausalGraph, targets: Iterable[str], order: Iterable[str] | None = None) -> CausalGraph:
    """Wire every parent of each target to each of its children, then drop the target.

    The result does not depend on ``order``; by default targets go in reverse
    topological order.
    """
    targets = g.check_vars(targets)
    bad = targets - g.functional
    if bad:
        raise GraphError(f"cannot functionally eliminate non-functional {sorted(bad)}")
    seq = list(order) if order is not None else elimination_order(g, targets)
    if set(seq) != targets or len(seq) != len(targets):
        raise GraphError("order must be a permutation of the targets")
    for w in seq:
        g = _eliminate_one(g, w)
    return g


def _observed_reach(g: CausalGraph, start: str, keep: frozenset[str]) -> set[str]:
    """Observed nodes reachable from ``start`` along directed paths with hidden interiors."""
    out, stack, seen = set(), list(g.children(start)), set()
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if n in keep:
            out.add(n)
        else:
            stack.extend(g.children(n))
    return out


def project(g: CausalGraph, v: Iterable[str] | None = None) -> CausalGraph:
    """Latent projection onto ``v`` (default: the observed variables).

    Directed ``a -> b`` when a directed path from a to b has no interior node in ``v``;
    ``a <-> b`` when a divergent path with hidden source and hidden interiors joins them.
    """
    keep = g.check_vars(g.observed if v is None else v)
    if keep != g.observed:
        raise GraphError("projection target must be exactly the observed variables")
    edges: set[tuple[str, str]] = set()
    for a in keep:
        edges |= {(a, b) for b in _observed_reach(g, a, keep)}
    pairs: set[tuple[str, str]] = set()
    for h in g.nodes - keep:
        reach = sorted(_observed_reach(g, h, keep))
        pairs |= {(a, b) for i, a in enumerate(reach) for b in reach[i + 1:]}
    nodes = set(keep)
    for a, b in pairs:
        u = bidirected_name(a, b)
        nodes.add(u)
        edges |= {(u, a), (u, b)}
    return CausalGraph(
        nodes=nodes,
        edges=edges,
        observed=keep,
        functional={w for w in g.functional & keep if any(c == w for _, c in edges)},
    )


def fproject(g: CausalGraph, v: Iterable[str] | None = None, hidden_functional: Iterable[str] = ()) -> CausalGraph:
    """Eliminate hidden functional variables, then project onto ``v``."""
    wh = g.check_vars(hidden_functional)
    keep = g.check_vars(g.observed if v is None else v)
    if wh & keep:
        raise GraphError(f"functional projection targets must be hidden: {sorted(wh & keep)}")
    return project(felim_dag(g, wh), keep)
