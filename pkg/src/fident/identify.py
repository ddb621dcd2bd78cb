"""The recursive ID algorithm on semi-Markovian graphs.

Returns either an identifying formula together with the positivity it relies on,
or a hedge witnessing failure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

from .formula import (
    Formula,
    One,
    Quotient,
    Sum,
    Product,
    Term,
    canonicalize,
    conditional,
    free_symbols,
    product,
    rename,
    simplify,
    summation,
    term,
)
from .graph import CausalGraph, GraphError
from .positivity import ConstraintSet, PositivityConstraint, minimize

__all__ = ["Identified", "Fail", "Hedge", "id_algorithm", "districts", "Admg"]


@dataclass(frozen=True)
class Admg:
    """Observed nodes with directed edges and bidirected pairs."""

    nodes: frozenset[str]
    directed: frozenset[tuple[str, str]]
    bidirected: frozenset[tuple[str, str]]
    order: tuple[str, ...]  # topological, restricted to ``nodes``

    @classmethod
    def from_graph(cls, g: CausalGraph) -> "Admg":
        if not g.is_semi_markovian():
            raise GraphError("ID needs a semi-Markovian graph: every hidden node a root with two children")
        for h in g.hidden:
            if not set(g.children(h)) <= g.observed:
                raise GraphError(f"hidden root {h} must point into observed variables")
        directed = frozenset((p, c) for p, c in g.edges if p in g.observed)
        return cls(g.observed, directed, frozenset(g.bidirected_pairs()), tuple(n for n in g.order if n in g.observed))

    def sub(self, keep: Iterable[str]) -> "Admg":
        k = frozenset(keep)
        return Admg(
            k,
            frozenset(e for e in self.directed if e[0] in k and e[1] in k),
            frozenset(e for e in self.bidirected if e[0] in k and e[1] in k),
            tuple(n for n in self.order if n in k),
        )

    def parents(self, v: str) -> set[str]:
        return {p for p, c in self.directed if c == v}

    def ancestors(self, s: Iterable[str], cut: frozenset[str] = frozenset()) -> frozenset[str]:
        """Reflexive ancestors, ignoring edges into ``cut``."""
        out, stack = set(), list(s)
        while stack:
            n = stack.pop()
            if n in out:
                continue
            out.add(n)
            if n not in cut:
                stack.extend(p for p, c in self.directed if c == n)
        return frozenset(out)

    def predecessors(self, v: str) -> list[str]:
        return list(self.order[: self.order.index(v)])


def districts(g: Admg) -> list[frozenset[str]]:
    """C-components: connected components of the bidirected part, sorted."""
    adj = {n: set() for n in g.nodes}
    for a, b in g.bidirected:
        adj[a].add(b)
        adj[b].add(a)
    seen, out = set(), []
    for n in sorted(g.nodes):
        if n in seen:
            continue
        comp, stack = set(), [n]
        while stack:
            m = stack.pop()
            if m in comp:
                continue
            comp.add(m)
            stack.extend(adj[m])
        seen |= comp
        out.append(frozenset(comp))
    return out


@dataclass(frozen=True)
class Hedge:
    """Two C-forests over the same root set: ``big`` meets X, ``small`` does not."""

    roots: frozenset[str]
    big: frozenset[str]
    small: frozenset[str]
    big_edges: frozenset[tuple[str, str]]
    small_edges: frozenset[tuple[str, str]]
    bidirected: frozenset[tuple[str, str]]

    def validate(self, x: Iterable[str], g: Admg | None = None) -> bool:
        """Structural check: shared roots, nesting, forest shape, C-connectivity, X placement."""
        x = set(x)
        if not (self.roots <= self.small < self.big):
            return False
        if not (self.big & x) or (self.small & x):
            return False
        for nodes, edges in ((self.big, self.big_edges), (self.small, self.small_edges)):
            if not all(a in nodes and b in nodes for a, b in edges):
                return False
            if g is not None and not edges <= g.directed:
                return False
            outdeg: dict[str, int] = {}
            for a, _ in edges:
                outdeg[a] = outdeg.get(a, 0) + 1
            if any(outdeg.get(r, 0) for r in self.roots):
                return False
            if any(outdeg.get(n, 0) != 1 for n in nodes - self.roots):
                return False
            sub = Admg(nodes, frozenset(edges), frozenset(e for e in self.bidirected if set(e) <= nodes), ())
            if len(districts(sub)) != 1:
                return False
        return True


@dataclass(frozen=True)
class Identified:
    formula: Formula  # simplified, canonical symbols
    raw: Formula  # unsimplified ID output
    required: ConstraintSet

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class Fail:
    hedge: Hedge

    @property
    def ok(self) -> bool:
        return False


class _Failure(Exception):
    def __init__(self, g: Admg, s: frozenset[str]):
        self.g, self.s = g, s


@dataclass
class _Ctx:
    counter: itertools.count = field(default_factory=lambda: itertools.count(1))

    def fresh(self, var: str) -> str:
        return f"{var}#{next(self.counter)}"

    def sum_out(self, vs: Iterable[str], expr: Formula) -> Formula:
        vs = sorted(vs)
        if not vs:
            return expr
        mapping = {v: self.fresh(v) for v in vs}
        return summation({(v, mapping[v]) for v in vs}, rename(expr, mapping))


@dataclass(frozen=True)
class _Dist:
    """A distribution over ``vars``; ``joint`` marks the plain observed joint."""

    vars: frozenset[str]
    expr: Formula
    joint: bool = False

    def marginal(self, keep: Iterable[str], ctx: _Ctx) -> "_Dist":
        keep = frozenset(keep)
        if keep == self.vars:
            return self
        if self.joint:
            return _Dist(keep, term(keep), True)
        return _Dist(keep, ctx.sum_out(self.vars - keep, self.expr))

    def conditional(self, v: str, given: Iterable[str], ctx: _Ctx) -> Formula:
        given = frozenset(given)
        num = self.marginal(given | {v}, ctx).expr
        if not given:
            return num
        return Quotient(num, self.marginal(given, ctx).expr)


def _forest(g: Admg, nodes: frozenset[str], roots: frozenset[str]) -> frozenset[tuple[str, str]]:
    """Directed edges giving each non-root in ``nodes`` one path toward ``roots``."""
    edges, reached, frontier = set(), set(roots), sorted(roots)
    while frontier:
        nxt = []
        for r in frontier:
            for p in sorted(g.parents(r) & nodes):
                if p not in reached:
                    reached.add(p)
                    edges.add((p, r))
                    nxt.append(p)
        frontier = nxt
    return frozenset(edges)


def _hedge(fail: _Failure) -> Hedge:
    g, s = fail.g, fail.s
    small_g = g.sub(s)
    roots = frozenset(n for n in s if not any(p == n for p, _ in small_g.directed))
    return Hedge(
        roots=roots,
        big=g.nodes,
        small=s,
        big_edges=_forest(g, g.nodes, roots),
        small_edges=_forest(small_g, s, roots),
        bidirected=g.bidirected,
    )


def _id(y: frozenset[str], x: frozenset[str], p: _Dist, g: Admg, ctx: _Ctx) -> Formula:
    v = g.nodes
    if not x:  # line 1
        return p.marginal(y, ctx).expr
    anc = g.ancestors(y)
    if anc != v:  # line 2
        return _id(y, x & anc, p.marginal(anc, ctx), g.sub(anc), ctx)
    w = (v - x) - g.ancestors(y, cut=x)
    if w:  # line 3
        return _id(y, x | w, p, g, ctx)
    comps = districts(g.sub(v - x))
    if len(comps) > 1:  # line 4
        parts = [_id(s, v - s, p, g, ctx) for s in comps]
        return ctx.sum_out(v - y - x, product(*parts))
    s = comps[0]
    whole = districts(g)
    if whole == [v]:  # line 5
        raise _Failure(g, s)
    if s in whole:  # line 6
        factors = [p.conditional(n, g.predecessors(n), ctx) for n in g.order if n in s]
        return ctx.sum_out(s - y, product(*factors))
    s2 = next(d for d in whole if s < d)  # line 7
    q = product(*(p.conditional(n, g.predecessors(n), ctx) for n in g.order if n in s2))
    return _id(y, x & s2, _Dist(s2, q), g.sub(s2), ctx)


def _denominators(f: Formula) -> list[frozenset[str]]:
    if isinstance(f, (Term, One)):
        return []
    if isinstance(f, Sum):
        return _denominators(f.body)
    if isinstance(f, Product):
        return [d for g in f.factors for d in _denominators(g)]
    den_vars = frozenset(free_symbols(f.den).values())
    return _denominators(f.num) + _denominators(f.den) + ([den_vars] if den_vars else [])


def required_positivity(g: Admg, x: Iterable[str], raw: Formula) -> ConstraintSet:
    """``Pr(X | Pa(X)\\X) > 0`` plus positivity of each quotient's denominator scope."""
    x = frozenset(x)
    pa = frozenset().union(*(g.parents(t) for t in x)) - x if x else frozenset()
    out = {PositivityConstraint(x, pa)} if x else set()
    out |= {PositivityConstraint(d) for d in _denominators(raw)}
    return minimize(out)


def id_algorithm(g: CausalGraph, x: Iterable[str], y: Iterable[str]) -> Identified | Fail:
    """Identify ``Pr_x(y)`` on a semi-Markovian graph."""
    x, y = g.check_vars(x), g.check_vars(y)
    if not y:
        raise GraphError("outcome set must be non-empty")
    if x & y:
        raise GraphError(f"treatments and outcomes overlap: {sorted(x & y)}")
    if not (x | y) <= g.observed:
        raise GraphError(f"treatments and outcomes must be observed: {sorted((x | y) - g.observed)}")
    a = Admg.from_graph(g)
    ctx = _Ctx()
    try:
        raw = _id(y, x, _Dist(a.nodes, term(a.nodes), True), a, ctx)
    except _Failure as e:
        return Fail(_hedge(e))
    # treatments pruned by line 3 at the top level are free; average them out
    stray = {s: v for s, v in free_symbols(raw).items() if s not in x | y or s != v}
    if stray:
        pw = _Dist(a.nodes, term(a.nodes), True).marginal(set(stray.values()), ctx).expr
        raw = ctx.sum_out(stray.values(), product(pw, raw))
    raw = canonicalize(raw)
    return Identified(simplify(raw), raw, required_positivity(a, x, raw))
