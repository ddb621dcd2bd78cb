"""d-separation, the functional closure of a conditioning set, and D-separation."""

from __future__ import annotations

from collections import deque
from typing import Iterable

from .graph import CausalGraph, GraphError, ancestors

__all__ = ["d_separated", "functional_closure", "D_separated", "check_query"]


def check_query(g: CausalGraph, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()):
    x, y, z = g.check_vars(x), g.check_vars(y), g.check_vars(z)
    if not x or not y:
        raise GraphError("separation query needs non-empty X and Y")
    if x & y or x & z or y & z:
        raise GraphError("X, Y and Z must be pairwise disjoint")
    return x, y, z


def _reachable(g: CausalGraph, x: frozenset[str], z: frozenset[str]) -> set[str]:
    """Nodes connected to ``x`` by an active trail given ``z`` (Bayes-ball traversal)."""
    anc_z = ancestors(g, z)
    up, down = True, False
    queue = deque((n, up) for n in x)
    visited: set[tuple[str, bool]] = set()
    reached = set()
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in z:
            reached.add(node)
        if direction is up and node not in z:
            queue.extend((p, up) for p in g.parents(node))
            queue.extend((c, down) for c in g.children(node))
        elif direction is down:
            if node not in z:
                queue.extend((c, down) for c in g.children(node))
            if node in anc_z:
                queue.extend((p, up) for p in g.parents(node))
    return reached


def d_separated(g: CausalGraph, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()) -> bool:
    x, y, z = check_query(g, x, y, z)
    return not (_reachable(g, x, z) & y)


def functional_closure(g: CausalGraph, w: Iterable[str], z: Iterable[str]) -> frozenset[str]:
    """Least superset of ``z`` containing every ``w`` member whose parents it contains."""
    w, closed = g.check_vars(w), set(g.check_vars(z))
    changed = True
    while changed:
        changed = False
        for v in sorted(w - closed):
            if set(g.parents(v)) <= closed:
                closed.add(v)
                changed = True
    return frozenset(closed)


def D_separated(g: CausalGraph, w: Iterable[str], x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()) -> bool:
    """d-separation given the functional closure ``Z'`` of ``z``.

    Members of X or Y inside ``Z'`` are functions of Z, hence constants given Z, and
    drop out of the query; the statement holds trivially once X or Y is exhausted.
    """
    x, y, z = check_query(g, x, y, z)
    w = g.check_vars(w)
    if not w <= g.functional:
        raise GraphError(f"not functional: {sorted(w - g.functional)}")
    closed = functional_closure(g, w, z)
    x, y = x - closed, y - closed
    if not x or not y:
        return True
    return not (_reachable(g, x, closed) & y)
