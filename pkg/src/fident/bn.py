"""Discrete Bayesian networks: exact inference, interventions and functional elimination."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._kernels import JointKernel
from .elimination import _eliminate_one, elimination_order
from .graph import CausalGraph, GraphError, UnknownVariableError, ancestors, mutilate, parse_graph, serialize_graph

__all__ = [
    "STRUCTURAL_TOL",
    "BEHAVIORAL_TOL",
    "DEFAULT_STATE_CAP",
    "StateSpaceOverflow",
    "Factor",
    "Cpt",
    "DiscreteBN",
    "joint_marginal",
    "interventional",
    "mutilate_bn",
    "felim_bn",
    "random_parameterization",
    "full_joint",
    "brute_force_marginal",
    "format_bn",
    "parse_bn",
]

STRUCTURAL_TOL = 1e-12
BEHAVIORAL_TOL = 1e-9
DEFAULT_STATE_CAP = 2**22


class StateSpaceOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class Factor:
    scope: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != len(self.scope):
            raise ValueError(f"factor over {self.scope} has {vals.ndim} axes")
        if len(set(self.scope)) != len(self.scope):
            raise ValueError(f"repeated variable in scope {self.scope}")
        object.__setattr__(self, "values", vals)

    def __mul__(self, other: "Factor") -> "Factor":
        union = tuple(dict.fromkeys(self.scope + other.scope))
        ids = {v: i for i, v in enumerate(union)}
        vals = np.einsum(self.values, [ids[v] for v in self.scope],
                         other.values, [ids[v] for v in other.scope], list(range(len(union))))
        return Factor(union, vals)

    def sum_out(self, names: Iterable[str]) -> "Factor":
        names = set(names)
        axes = tuple(i for i, v in enumerate(self.scope) if v in names)
        return Factor(tuple(v for v in self.scope if v not in names), self.values.sum(axis=axes))

    def transpose(self, order: Sequence[str]) -> "Factor":
        order = tuple(order)
        if set(order) != set(self.scope):
            raise ValueError(f"{order} is not a permutation of {self.scope}")
        return Factor(order, self.values.transpose([self.scope.index(v) for v in order]))

    def __getitem__(self, assignment: Mapping[str, int]) -> float:
        return float(self.values[tuple(assignment[v] for v in self.scope)])


@dataclass(frozen=True)
class Cpt:
    """``table[*parent_states, child_state]``; parents in lexicographic order."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", np.asarray(self.table, dtype=np.float64))

    def factor(self) -> Factor:
        return Factor(self.parents + (self.child,), self.table)

    def is_functional(self) -> bool:
        return bool(np.all((self.table == 0.0) | (self.table == 1.0)))

    def check(self) -> None:
        t = self.table
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError(f"CPT for {self.child} has entries outside [0, 1]")
        if not np.allclose(t.sum(axis=-1), 1.0, rtol=0, atol=STRUCTURAL_TOL):
            raise ValueError(f"CPT for {self.child} has a column not summing to 1")


@dataclass(frozen=True)
class DiscreteBN:
    graph: CausalGraph
    cards: Mapping[str, int]
    cpts: Mapping[str, Cpt]
    _kernel: JointKernel | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        g = self.graph
        object.__setattr__(self, "cards", {n: int(self.cards[n]) for n in sorted(g.nodes)})
        if set(self.cpts) != set(g.nodes):
            raise ValueError("need exactly one CPT per node")
        for n in g.nodes:
            cpt = self.cpts[n]
            if cpt.child != n or cpt.parents != g.parents(n):
                raise ValueError(f"CPT for {n} does not match its graph parents {g.parents(n)}")
            shape = tuple(self.cards[p] for p in cpt.parents) + (self.cards[n],)
            if cpt.table.shape != shape:
                raise ValueError(f"CPT for {n} has shape {cpt.table.shape}, expected {shape}")
            cpt.check()
            if n in g.functional and not cpt.is_functional():
                raise ValueError(f"functional variable {n} has a non-0/1 CPT")

    @property
    def nodes(self) -> list[str]:
        return self.graph.sorted_nodes()

    def kernel(self) -> JointKernel:
        if self._kernel is None:
            nodes = self.nodes
            idx = {n: i for i, n in enumerate(nodes)}
            k = JointKernel([self.cards[n] for n in nodes], [[idx[p] for p in self.graph.parents(n)] for n in nodes])
            object.__setattr__(self, "_kernel", k)
        return self._kernel

    def replace_cpts(self, cpts: Mapping[str, Cpt], graph: CausalGraph | None = None) -> "DiscreteBN":
        merged = dict(self.cpts)
        merged.update(cpts)
        g = graph or self.graph
        return DiscreteBN(g, {n: self.cards[n] for n in g.nodes}, {n: merged[n] for n in g.nodes})


# -- inference -------------------------------------------------------------------

def _min_degree_order(factors: list[Factor], targets: set[str]) -> list[str]:
    neigh: dict[str, set[str]] = {v: set() for v in targets}
    for f in factors:
        for v in f.scope:
            if v in neigh:
                neigh[v] |= set(f.scope) - {v}
    order = []
    while neigh:
        v = min(neigh, key=lambda n: (len(neigh[n]), n))
        order.append(v)
        nb = neigh.pop(v)
        for u in nb:
            if u in neigh:
                neigh[u] |= nb - {u}
                neigh[u].discard(v)
    return order


def _size(scope: Iterable[str], cards: Mapping[str, int]) -> int:
    out = 1
    for v in scope:
        out *= cards[v]
    return out


def joint_marginal(m: DiscreteBN, s: Iterable[str], cap: int = DEFAULT_STATE_CAP) -> Factor:
    """Exact ``Pr(S)`` by variable elimination (min-degree order, name tie-break)."""
    s = m.graph.check_vars(s)
    relevant = ancestors(m.graph, s)
    factors = [m.cpts[n].factor() for n in sorted(relevant)]
    for v in _min_degree_order(factors, set(relevant - s)):
        touching = [f for f in factors if v in f.scope]
        factors = [f for f in factors if v not in f.scope]
        scope = set().union(*(f.scope for f in touching))
        if _size(scope, m.cards) > cap:
            raise StateSpaceOverflow(f"intermediate factor over {len(scope)} variables exceeds cap {cap}")
        prod = touching[0]
        for f in touching[1:]:
            prod = prod * f
        factors.append(prod.sum_out([v]))
    if _size(s, m.cards) > cap:
        raise StateSpaceOverflow(f"result over {sorted(s)} exceeds cap {cap}")
    result = Factor((), np.array(1.0))
    for f in factors:
        result = result * f
    # a variable of S can be missing only if S is empty
    return result.transpose(sorted(s))


def mutilate_bn(m: DiscreteBN, x: Mapping[str, int]) -> DiscreteBN:
    """Cut edges into the treated variables and replace their CPTs by point masses."""
    for v, state in x.items():
        if v not in m.graph.nodes:
            raise UnknownVariableError(f"unknown variable {v!r}")
        if not 0 <= state < m.cards[v]:
            raise ValueError(f"state {state} out of range for {v}")
    g = mutilate(m.graph, x)
    cpts = {}
    for v, state in x.items():
        t = np.zeros(m.cards[v])
        t[state] = 1.0
        cpts[v] = Cpt(v, (), t)
    return m.replace_cpts(cpts, graph=g)


def interventional(m: DiscreteBN, x: Mapping[str, int], y: Iterable[str], cap: int = DEFAULT_STATE_CAP) -> Factor:
    """``Pr_x(Y)`` computed on the mutilated network."""
    return joint_marginal(mutilate_bn(m, x), y, cap=cap)


# -- brute force (oracle route) ------------------------------------------------------

def full_joint(m: DiscreteBN, cap: int = DEFAULT_STATE_CAP) -> Factor:
    """Joint table over all nodes (lexicographic axis order) by direct enumeration."""
    nodes = m.nodes
    if _size(nodes, m.cards) > cap:
        raise StateSpaceOverflow(f"joint over {len(nodes)} variables exceeds cap {cap}")
    k = m.kernel()
    return Factor(tuple(nodes), k(k.pack([m.cpts[n].table for n in nodes])))


def brute_force_marginal(m: DiscreteBN, s: Iterable[str], cap: int = DEFAULT_STATE_CAP) -> Factor:
    s = m.graph.check_vars(s)
    j = full_joint(m, cap)
    return j.sum_out(set(j.scope) - s).transpose(sorted(s))


# -- functional elimination ---------------------------------------------------------------

def felim_bn(m: DiscreteBN, targets: Iterable[str], order: Iterable[str] | None = None) -> DiscreteBN:
    """Absorb each functional target into its children: ``f_C <- sum_X f_X f_C``."""
    targets = m.graph.check_vars(targets)
    for w in sorted(targets):
        if not m.cpts[w].is_functional():
            raise GraphError(f"cannot functionally eliminate {w}: its CPT is not 0/1")
        if not m.graph.parents(w):
            raise GraphError(f"cannot functionally eliminate root {w}")
    seq = list(order) if order is not None else elimination_order(m.graph, targets)
    if set(seq) != targets or len(seq) != len(targets):
        raise GraphError("order must be a permutation of the targets")
    g = m.graph.replace(functional=m.graph.functional | targets)
    cpts = dict(m.cpts)
    for w in seq:
        fw = cpts[w].factor()
        new_g = _eliminate_one(g, w)
        for c in g.children(w):
            pa = new_g.parents(c)
            f = (fw * cpts[c].factor()).sum_out([w]).transpose(pa + (c,))
            cpts[c] = Cpt(c, pa, f.values)
        del cpts[w]
        g = new_g
    g = g.replace(functional=m.graph.functional & g.nodes)
    return DiscreteBN(g, {n: m.cards[n] for n in g.nodes}, cpts)


# -- parameter generation ------------------------------------------------------------------

def random_parameterization(
    g: CausalGraph,
    functional: Iterable[str] | None = None,
    seed: int | np.random.Generator = 0,
    cards: Mapping[str, int] | int = 2,
) -> DiscreteBN:
    """Dirichlet(1,..,1) columns for ordinary nodes, uniformly drawn functions for ``functional``."""
    w = g.check_vars(g.functional if functional is None else functional)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(cards, int):
        cards = {n: cards for n in g.nodes}
    else:
        cards = {n: int(cards.get(n, 2)) for n in g.nodes}
    cpts = {}
    for n in g.order:
        pa = g.parents(n)
        cols = _size(pa, cards)
        k = cards[n]
        if n in w:
            table = np.zeros((cols, k))
            table[np.arange(cols), rng.integers(k, size=cols)] = 1.0
        else:
            table = rng.dirichlet(np.ones(k), size=cols)
        cpts[n] = Cpt(n, pa, table.reshape(tuple(cards[p] for p in pa) + (k,)))
    return DiscreteBN(g.replace(functional=w), cards, cpts)


# -- fixture format ---------------------------------------------------------------------------

def format_bn(m: DiscreteBN) -> str:
    """Graph DSL followed by one ``cpt <child> | <parents>`` block per node."""
    out = [serialize_graph(m.graph).rstrip("\n"), ""]
    for n in m.nodes:
        cpt = m.cpts[n]
        out.append(f"cpt {n} | {' '.join(cpt.parents)}".rstrip())
        for states in itertools.product(*(range(m.cards[p]) for p in cpt.parents)):
            probs = " ".join(repr(float(p)) for p in cpt.table[states])
            out.append(f"{' '.join(map(str, states))} : {probs}".lstrip())
    return "\n".join(out) + "\n"


def parse_bn(text: str) -> DiscreteBN:
    graph_lines: list[str] = []
    blocks: dict[str, tuple[tuple[str, ...], list[tuple[tuple[int, ...], list[float]]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("cpt ") or line == "cpt":
            head, _, tail = line[3:].partition("|")
            if not _:
                raise ValueError(f"line {lineno}: expected 'cpt <child> | <parents>'")
            child = head.strip()
            if child in blocks:
                raise ValueError(f"line {lineno}: duplicate CPT for {child}")
            current = child
            blocks[child] = (tuple(tail.split()), [])
        elif current is None:
            graph_lines.append(raw)
        elif line:
            lhs, sep, rhs = line.partition(":")
            if not sep:
                raise ValueError(f"line {lineno}: expected '<parent states> : <probabilities>'")
            blocks[current][1].append((tuple(int(t) for t in lhs.split()), [float(t) for t in rhs.split()]))
    g = parse_graph("\n".join(graph_lines))
    if set(blocks) != set(g.nodes):
        raise ValueError(f"CPT blocks {sorted(blocks)} do not match nodes {g.sorted_nodes()}")
    cards = {n: len(rows[0][1]) for n, (_, rows) in blocks.items() if rows}
    cpts = {}
    for n, (pa, rows) in blocks.items():
        if tuple(sorted(pa)) != g.parents(n) or tuple(pa) != g.parents(n):
            raise ValueError(f"CPT parents for {n} must be {g.parents(n)}")
        shape = tuple(cards[p] for p in pa) + (cards[n],)
        table = np.full(shape, np.nan)
        for states, probs in rows:
            if len(states) != len(pa) or len(probs) != cards[n]:
                raise ValueError(f"malformed row in CPT for {n}")
            table[states] = probs
        if np.isnan(table).any():
            raise ValueError(f"CPT for {n} is missing rows")
        cpts[n] = Cpt(n, pa, table)
    return DiscreteBN(g, cards, cpts)
