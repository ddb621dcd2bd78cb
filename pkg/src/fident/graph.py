"""Causal DAGs with observed/hidden/functional roles and the line-oriented graph DSL."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "CausalGraph",
    "GraphError",
    "DSLSyntaxError",
    "CycleError",
    "FunctionalRootError",
    "DuplicateNodeError",
    "UnknownVariableError",
    "parse_graph",
    "serialize_graph",
    "bidirected_name",
    "ancestors",
    "descendants",
    "first_ancestor",
    "mutilate",
]

_TOKEN = re.compile(r"[A-Za-z0-9_]+")


class GraphError(ValueError):
    """Base class for invalid graphs and graph queries."""


class DSLSyntaxError(GraphError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(GraphError):
    pass


class FunctionalRootError(GraphError):
    pass


class DuplicateNodeError(GraphError):
    pass


class UnknownVariableError(GraphError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


def bidirected_name(a: str, b: str) -> str:
    """Name of the auxiliary hidden root standing for ``a <-> b``."""
    lo, hi = sorted((a, b))
    return f"U__{lo}__{hi}"


def _is_aux_name(name: str, children: tuple[str, ...]) -> bool:
    return len(children) == 2 and name == bidirected_name(*children)


@dataclass(frozen=True)
class CausalGraph:
    """Immutable DAG. Nodes are compared by exact name; iteration order is lexicographic."""

    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    observed: frozenset[str]
    functional: frozenset[str] = frozenset()
    _parents: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _children: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = frozenset(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "observed", frozenset(self.observed))
        object.__setattr__(self, "functional", frozenset(self.functional))
        for name in nodes:
            if not _TOKEN.fullmatch(name):
                raise GraphError(f"invalid variable name {name!r}")
        for extra, what in ((self.observed - nodes, "observed"), (self.functional - nodes, "functional")):
            if extra:
                raise UnknownVariableError(f"{what} variables not in graph: {sorted(extra)}")
        parents: dict[str, list[str]] = {n: [] for n in nodes}
        children: dict[str, list[str]] = {n: [] for n in nodes}
        for p, c in self.edges:
            if p not in nodes or c not in nodes:
                raise UnknownVariableError(f"edge {p}->{c} mentions an unknown variable")
            if p == c:
                raise CycleError(f"self-edge on {p}")
            parents[c].append(p)
            children[p].append(c)
        object.__setattr__(self, "_parents", {n: tuple(sorted(v)) for n, v in parents.items()})
        object.__setattr__(self, "_children", {n: tuple(sorted(v)) for n, v in children.items()})
        object.__setattr__(self, "_order", self._toposort())
        roots = sorted(w for w in self.functional if not self._parents[w])
        if roots:
            raise FunctionalRootError(f"root variables cannot be functional: {roots}")

    def _toposort(self) -> tuple[str, ...]:
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            n = heapq.heappop(heap)
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.nodes):
            stuck = sorted(n for n, d in indeg.items() if d > 0)
            raise CycleError(f"cycle detected among {stuck}")
        return tuple(order)

    # -- structural accessors -------------------------------------------------
    @property
    def hidden(self) -> frozenset[str]:
        return self.nodes - self.observed

    @property
    def order(self) -> tuple[str, ...]:
        """Topological order with lexicographic tie-breaking."""
        return self._order

    def sorted_nodes(self) -> list[str]:
        return sorted(self.nodes)

    def parents(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._children[node]

    def _check(self, *names: str) -> None:
        for n in names:
            if n not in self.nodes:
                raise UnknownVariableError(f"unknown variable {n!r}")

    def check_vars(self, names: Iterable[str]) -> frozenset[str]:
        names = frozenset(names)
        self._check(*sorted(names))
        return names

    # -- derived graphs -------------------------------------------------------
    def replace(self, **changes) -> "CausalGraph":
        fields = dict(nodes=self.nodes, edges=self.edges, observed=self.observed, functional=self.functional)
        fields.update(changes)
        return CausalGraph(**fields)

    def subgraph(self, keep: Iterable[str]) -> "CausalGraph":
        keep = self.check_vars(keep)
        return CausalGraph(
            nodes=keep,
            edges={(p, c) for p, c in self.edges if p in keep and c in keep},
            observed=self.observed & keep,
            functional={w for w in self.functional & keep if any(p in keep for p in self._parents[w])},
        )

    def bidirected_pairs(self) -> set[tuple[str, str]]:
        """Pairs of observed nodes sharing a hidden root parent with exactly two children."""
        pairs = set()
        for h in self.hidden:
            ch = self._children[h]
            if not self._parents[h] and len(ch) == 2:
                pairs.add(ch)
        return pairs

    def is_semi_markovian(self) -> bool:
        return all(not self._parents[h] and len(self._children[h]) == 2 for h in self.hidden)

    def canonical(self) -> "CausalGraph":
        """Rename auxiliary hidden roots to their endpoint-pair names."""
        rename = {}
        for h in self.hidden:
            ch = self._children[h]
            if not self._parents[h] and len(ch) == 2 and h not in self.functional:
                rename[h] = bidirected_name(*ch)
        if all(k == v for k, v in rename.items()):
            return self
        f = lambda n: rename.get(n, n)
        return CausalGraph(
            nodes={f(n) for n in self.nodes},
            edges={(f(p), f(c)) for p, c in self.edges},
            observed=self.observed,
            functional=self.functional,
        )

    def __str__(self) -> str:
        return serialize_graph(self)


# -- DSL -----------------------------------------------------------------------

def parse_graph(text: str) -> CausalGraph:
    """Parse the graph DSL.

    Lines are ``node <name> [observed|hidden] [functional]``, ``edge <parent> <child>``
    and ``bidir <a> <b>``; ``#`` starts a comment. Bidirected edges become fresh hidden
    roots named ``U__<a>__<b>``.
    """
    nodes: dict[str, tuple[bool, bool]] = {}
    edges: list[tuple[str, str, int]] = []
    bidirs: list[tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]
        if not toks:
            continue
        for tok, col in toks:
            if not _TOKEN.fullmatch(tok):
                raise DSLSyntaxError(f"invalid token {tok!r}", lineno, col)
        kw, kcol = toks[0]
        args = toks[1:]
        if kw == "node":
            if not args:
                raise DSLSyntaxError("node needs a name", lineno, kcol)
            name, ncol = args[0]
            observed, functional = True, False
            seen_role = False
            for flag, fcol in args[1:]:
                if flag in ("observed", "hidden") and not seen_role:
                    observed, seen_role = flag == "observed", True
                elif flag == "functional" and not functional:
                    functional = True
                else:
                    raise DSLSyntaxError(f"unexpected node flag {flag!r}", lineno, fcol)
            if name in nodes:
                raise DuplicateNodeError(f"line {lineno}: duplicate node {name!r}")
            nodes[name] = (observed, functional)
        elif kw in ("edge", "bidir"):
            if len(args) != 2:
                raise DSLSyntaxError(f"{kw} needs exactly two names", lineno, kcol)
            (a, _), (b, _) = args
            if a == b:
                raise CycleError(f"line {lineno}: self-edge on {a!r}")
            (edges if kw == "edge" else bidirs).append((a, b, lineno))
        else:
            raise DSLSyntaxError(f"unknown statement {kw!r}", lineno, kcol)

    edge_set: set[tuple[str, str]] = set()
    for a, b, lineno in edges:
        for n in (a, b):
            if n not in nodes:
                raise UnknownVariableError(f"line {lineno}: undeclared variable {n!r}")
        if (a, b) in edge_set:
            raise GraphError(f"line {lineno}: duplicate edge {a}->{b}")
        edge_set.add((a, b))
    for a, b, lineno in bidirs:
        for n in (a, b):
            if n not in nodes:
                raise UnknownVariableError(f"line {lineno}: undeclared variable {n!r}")
        u = bidirected_name(a, b)
        if u in nodes:
            raise DuplicateNodeError(f"line {lineno}: duplicate node {u!r}")
        nodes[u] = (False, False)
        edge_set |= {(u, a), (u, b)}
    return CausalGraph(
        nodes=frozenset(nodes),
        edges=frozenset(edge_set),
        observed=frozenset(n for n, (o, _) in nodes.items() if o),
        functional=frozenset(n for n, (_, f) in nodes.items() if f),
    )


def serialize_graph(g: CausalGraph) -> str:
    """Canonical DSL text: nodes, then edges, then bidirected sugar, each sorted."""
    aux = {h for h in g.hidden if not g.parents(h) and h not in g.functional and _is_aux_name(h, g.children(h))}
    lines = []
    for n in g.sorted_nodes():
        if n in aux:
            continue
        role = "observed" if n in g.observed else "hidden"
        lines.append(f"node {n} {role}" + (" functional" if n in g.functional else ""))
    for p, c in sorted(g.edges):
        if p not in aux:
            lines.append(f"edge {p} {c}")
    for h in sorted(aux, key=lambda h: g.children(h)):
        a, b = g.children(h)
        lines.append(f"bidir {a} {b}")
    return "\n".join(lines) + "\n"


# -- structural queries ----------------------------------------------------------

def ancestors(g: CausalGraph, s: Iterable[str]) -> frozenset[str]:
    """Reflexive-transitive closure of the parent relation."""
    stack = list(g.check_vars(s))
    seen = set(stack)
    while stack:
        for p in g.parents(stack.pop()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return frozenset(seen)


def descendants(g: CausalGraph, s: Iterable[str]) -> frozenset[str]:
    stack = list(g.check_vars(s))
    seen = set(stack)
    while stack:
        for c in g.children(stack.pop()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return frozenset(seen)


def first_ancestor(g: CausalGraph, x: Iterable[str], y: Iterable[str]) -> frozenset[str]:
    """Treatments with a directed path to some outcome that avoids the other treatments."""
    x, y = g.check_vars(x), g.check_vars(y)
    if x & y:
        raise GraphError("treatments and outcomes must be disjoint")
    found = set()
    for t in x:
        blocked = x - {t}
        stack, seen = [t], {t}
        while stack:
            n = stack.pop()
            if n in y:
                found.add(t)
                break
            for c in g.children(n):
                if c not in seen and c not in blocked:
                    seen.add(c)
                    stack.append(c)
    return frozenset(found)


def mutilate(g: CausalGraph, x: Iterable[str]) -> CausalGraph:
    """Cut edges into ``x``; treated variables are constants afterwards, so never functional."""
    x = g.check_vars(x)
    if not x:
        return g
    return g.replace(
        edges={(p, c) for p, c in g.edges if c not in x},
        functional=g.functional - x,
    )
