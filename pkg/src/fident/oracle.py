"""Numeric ground truth: formula validation, elimination soundness and a falsifier.

The falsifier searches for two parameterizations that agree on the observed
joint yet disagree on a causal effect. Success is a certified counterexample;
failure to find one is never evidence of identifiability.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import softmax

from ._kernels import JointKernel
from .bn import (
    STRUCTURAL_TOL,
    Cpt,
    DiscreteBN,
    StateSpaceOverflow,
    brute_force_marginal,
    felim_bn,
    full_joint,
    interventional,
    joint_marginal,
    mutilate_bn,
    random_parameterization,
)
from .elimination import felim_dag
from .formula import Formula, PositivityViolation, evaluate, free_symbols
from .graph import CausalGraph, GraphError
from .positivity import PositivityConstraint, satisfied_by

__all__ = [
    "ValidationReport",
    "validate_formula",
    "FalsifierConfig",
    "Counterexample",
    "FalsifyResult",
    "falsify",
    "SoundnessReport",
    "elimination_soundness_suite",
    "random_dag",
    "random_functional",
]


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _instantiations(names: Sequence[str], cards) -> list[dict[str, int]]:
    return [dict(zip(names, s)) for s in itertools.product(*(range(cards[n]) for n in names))]


def _query_graph(g: CausalGraph, v: Iterable[str], w: Iterable[str]) -> CausalGraph:
    return g.replace(observed=g.check_vars(v), functional=g.check_vars(w))


# -- validation ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    max_error: float
    checked: int
    skipped: int
    violations: list[str] = field(default_factory=list)

    @property
    def conclusive(self) -> bool:
        return self.checked > 0

    def to_dict(self) -> dict:
        return {"max_error": self.max_error, "checked": self.checked, "skipped": self.skipped,
                "conclusive": self.conclusive, "violations": list(self.violations)}


def validate_formula(
    g: CausalGraph,
    v: Iterable[str],
    w: Iterable[str],
    c: Iterable[PositivityConstraint],
    f: Formula,
    x: Iterable[str],
    y: Iterable[str],
    n_seeds: int = 100,
    seed: int = 0,
) -> ValidationReport:
    """Compare ``f`` against mutilation on random parameterizations satisfying ``c``."""
    gq = _query_graph(g, v, w)
    x, y, c = sorted(x), sorted(y), list(c)
    syms = free_symbols(f)
    if set(syms) - set(x) - set(y):
        raise GraphError(f"formula has free symbols beyond treatments and outcomes: {sorted(set(syms) - set(x) - set(y))}")
    rep = ValidationReport(0.0, 0, 0)
    for s in range(n_seeds):
        m = random_parameterization(gq, gq.functional, seed=_rng(seed, s))
        if not satisfied_by(c, m):
            rep.skipped += 1
            continue
        try:
            val = evaluate(f, joint_marginal(m, sorted(gq.observed)))
        except PositivityViolation as e:
            rep.violations.append(f"seed {s}: {e}")
            rep.max_error = float("inf")
            continue
        rep.checked += 1
        for xi in _instantiations(x, m.cards):
            truth = interventional(m, xi, y)
            for yi in _instantiations(y, m.cards):
                assign = {**xi, **yi}
                got = val.values[tuple(assign[sv] for sv in val.scope)] if val.scope else val.values
                rep.max_error = max(rep.max_error, abs(float(got) - truth[yi]))
    return rep


# -- falsifier --------------------------------------------------------------------------------

@dataclass(frozen=True)
class FalsifierConfig:
    seed: int = 0
    eps_match: float = 1e-6
    delta: float = 1e-2
    restarts: int = 50
    iterations: int = 2000  # function evaluations per restart
    gap_target: float = 3.0  # aimed gap, in units of delta
    init_noise: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if not (0 < self.eps_match < self.delta):
            raise ValueError("need 0 < eps_match < delta")
        if self.restarts <= 0 or self.iterations <= 0 or self.gap_target < 1:
            raise ValueError("restarts and iterations must be positive, gap_target at least 1")


@dataclass
class Counterexample:
    m1: DiscreteBN
    m2: DiscreteBN
    x: dict[str, int]
    y: dict[str, int]
    match: float  # sup-norm observed-joint difference
    gap: float  # |Pr1_x(y) - Pr2_x(y)|
    restart: int


@dataclass
class FalsifyResult:
    counterexample: Counterexample | None
    restarts_run: int

    @property
    def found(self) -> bool:
        return self.counterexample is not None

    @property
    def label(self) -> str:
        return "counterexample" if self.found else "none-found (not conclusive)"

    def to_dict(self) -> dict:
        out = {"result": self.label, "restarts_run": self.restarts_run}
        ce = self.counterexample
        if ce is not None:
            out.update({"x": ce.x, "y": ce.y, "match": ce.match, "gap": ce.gap, "restart": ce.restart})
        return out


class _Model:
    """Fixed-structure evaluator of observed joints and effects from packed CPTs."""

    def __init__(self, m: DiscreteBN, x: Sequence[str], y: Sequence[str]):
        self.m = m
        self.nodes = m.nodes
        self.idx = {n: i for i, n in enumerate(self.nodes)}
        self.kernel = JointKernel([m.cards[n] for n in self.nodes],
                                  [[self.idx[p] for p in m.graph.parents(n)] for n in self.nodes])
        self.hidden_axes = tuple(self.idx[n] for n in self.nodes if n not in m.graph.observed)
        self.x, self.y = list(x), list(y)
        self.keep_y = tuple(i for i, n in enumerate(self.nodes) if n not in self.y)
        self.x_insts = _instantiations(self.x, m.cards)
        self.free = [n for n in self.nodes if n not in m.graph.functional]

    def tables(self, m: DiscreteBN) -> list[np.ndarray]:
        return [m.cpts[n].table for n in self.nodes]

    def observed(self, tables: list[np.ndarray]) -> np.ndarray:
        return self.kernel(self.kernel.pack(tables)).sum(axis=self.hidden_axes)

    def effects(self, tables: list[np.ndarray]) -> np.ndarray:
        """``Pr_x(y)`` for every treatment instantiation (rows) and outcome cell (flattened)."""
        out = []
        for xi in self.x_insts:
            t = list(tables)
            for n, s in xi.items():
                k = self.idx[n]
                pt = np.zeros_like(t[k])
                pt[..., s] = 1.0
                t[k] = pt
            out.append(self.kernel(self.kernel.pack(t)).sum(axis=self.keep_y).ravel())
        return np.array(out)


def _unpack(model: _Model, theta: np.ndarray, fixed: list[np.ndarray]) -> list[np.ndarray]:
    tables, pos = list(fixed), 0
    for n in model.free:
        k = model.idx[n]
        size = fixed[k].size
        tables[k] = softmax(theta[pos:pos + size].reshape(fixed[k].shape), axis=-1)
        pos += size
    return tables


def _as_bn(model: _Model, tables: list[np.ndarray]) -> DiscreteBN:
    m = model.m
    cpts = {n: Cpt(n, m.graph.parents(n), tables[model.idx[n]]) for n in model.nodes}
    return DiscreteBN(m.graph, m.cards, cpts)


def _restart(args) -> Counterexample | None:
    m1, x, y, c, cfg, r = args
    model = _Model(m1, x, y)
    rng = _rng(cfg.seed, 1, r)
    t1 = model.tables(m1)
    p1 = model.observed(t1)
    e1 = model.effects(t1)
    fixed = list(t1)
    for n in model.m.graph.functional:
        if rng.random() < 0.5:
            k = model.idx[n]
            cols = fixed[k].reshape(-1, fixed[k].shape[-1]).shape[0]
            card = fixed[k].shape[-1]
            tab = np.zeros((cols, card))
            tab[np.arange(cols), rng.integers(card, size=cols)] = 1.0
            fixed[k] = tab.reshape(fixed[k].shape)
    theta0 = np.concatenate([np.log(np.clip(t1[model.idx[n]], 1e-12, None)).ravel() for n in model.free]) \
        if model.free else np.zeros(0)
    if theta0.size == 0:
        return None
    theta0 = theta0 + cfg.init_noise * rng.standard_normal(theta0.size)
    row = int(rng.integers(e1.shape[0]))
    col = int(rng.integers(e1.shape[1]))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    target = cfg.gap_target * cfg.delta
    scale = np.sqrt(p1.size)

    def residual(theta):
        t = _unpack(model, theta, fixed)
        r_match = (model.observed(t) - p1).ravel() * scale
        gap = sign * (model.effects(t)[row, col] - e1[row, col])
        return np.append(r_match, max(0.0, target - gap))

    sol = least_squares(residual, theta0, method="trf", max_nfev=cfg.iterations,
                        ftol=1e-15, xtol=1e-15, gtol=1e-15)
    m2 = _as_bn(model, _unpack(model, sol.x, fixed))
    return _certify(m1, m2, x, y, c, cfg, r)


def _certify(m1: DiscreteBN, m2: DiscreteBN, x, y, c, cfg: FalsifierConfig, r: int) -> Counterexample | None:
    """Independent re-check by variable elimination: joint match, effect gap, constraints."""
    obs = sorted(m1.graph.observed)
    match = float(np.max(np.abs(joint_marginal(m1, obs).values - joint_marginal(m2, obs).values)))
    if match > cfg.eps_match or not satisfied_by(c, m1) or not satisfied_by(c, m2):
        return None
    best = None
    for xi in _instantiations(x, m1.cards):
        a, b = interventional(m1, xi, y), interventional(m2, xi, y)
        diff = np.abs(a.values - b.values)
        k = np.unravel_index(int(np.argmax(diff)), diff.shape)
        if best is None or diff[k] > best[0]:
            best = (float(diff[k]), xi, {n: int(s) for n, s in zip(a.scope, k)})
    if best is None or best[0] < cfg.delta:
        return None
    return Counterexample(m1, m2, best[1], best[2], match, best[0], r)


def falsify(
    g: CausalGraph,
    v: Iterable[str],
    w: Iterable[str],
    c: Iterable[PositivityConstraint],
    x: Iterable[str],
    y: Iterable[str],
    cfg: FalsifierConfig = FalsifierConfig(),
    cap: int = 2**16,
) -> FalsifyResult:
    """Search for two models agreeing on ``Pr(V)`` but not on ``Pr_x(y)``."""
    gq = _query_graph(g, v, w)
    x, y, c = sorted(gq.check_vars(x)), sorted(gq.check_vars(y)), list(c)
    if 2 ** len(gq.nodes) > cap:
        raise StateSpaceOverflow(f"falsifier limited to {cap} joint states")
    m1 = None
    for s in range(100):
        cand = random_parameterization(gq, gq.functional, seed=_rng(cfg.seed, 0, s))
        if satisfied_by(c, cand):
            m1 = cand
            break
    if m1 is None:
        return FalsifyResult(None, 0)
    jobs = [(m1, x, y, c, cfg, r) for r in range(cfg.restarts)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_restart, jobs))
        for r, ce in enumerate(results):
            if ce is not None:
                return FalsifyResult(ce, cfg.restarts)
        return FalsifyResult(None, cfg.restarts)
    for r, job in enumerate(jobs):
        ce = _restart(job)
        if ce is not None:
            return FalsifyResult(ce, r + 1)
    return FalsifyResult(None, cfg.restarts)


# -- elimination soundness -------------------------------------------------------------------

def random_dag(rng: np.random.Generator, n: int, p_edge: float = 0.4, prefix: str = "V") -> CausalGraph:
    names = [f"{prefix}{i}" for i in range(n)]
    perm = rng.permutation(n)
    edges = {(names[perm[a]], names[perm[b]]) for a in range(n) for b in range(a + 1, n) if rng.random() < p_edge}
    return CausalGraph(frozenset(names), frozenset(edges), frozenset(names), frozenset())


def random_functional(rng: np.random.Generator, g: CausalGraph, p: float = 0.4) -> frozenset[str]:
    return frozenset(n for n in g.sorted_nodes() if g.parents(n) and rng.random() < p)


@dataclass
class SoundnessReport:
    instances: int
    marginal_error: float = 0.0
    interventional_error: float = 0.0
    order_error: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return dict(instances=self.instances, marginal_error=self.marginal_error,
                    interventional_error=self.interventional_error, order_error=self.order_error,
                    violations=list(self.violations))


def _exact_cpt_valid(cpt: Cpt) -> bool:
    t = cpt.table
    return bool(np.all(t >= 0) and np.all(np.abs(t.sum(axis=-1) - 1.0) <= STRUCTURAL_TOL))


def elimination_soundness_suite(n_graphs: int = 200, seed: int = 0, max_nodes: int = 8,
                                tol: float = 1e-9, order_tol: float = 1e-12) -> SoundnessReport:
    """Check BN-level functional elimination against brute-force enumeration.

    Per instance: marginal and interventional preservation, CPT validity, preserved
    functionality of surviving functional variables, agreement with graph-level
    elimination and invariance under two random elimination orders.
    """
    rep = SoundnessReport(n_graphs)
    for i in range(n_graphs):
        rng = _rng(seed, i)
        g = random_dag(rng, int(rng.integers(2, max_nodes + 1)))
        w = random_functional(rng, g)
        gq = g.replace(functional=w)
        m = random_parameterization(gq, w, seed=rng)
        targets = frozenset(t for t in w if rng.random() < 0.7)
        m2 = felim_bn(m, targets)
        rest = sorted(m2.graph.nodes)
        tag = f"instance {i}"
        if m2.graph != felim_dag(gq, targets):
            rep.violations.append(f"{tag}: BN graph differs from graph-level elimination")
        for n in rest:
            if not _exact_cpt_valid(m2.cpts[n]):
                rep.violations.append(f"{tag}: invalid CPT for {n}")
            if n in w and not m2.cpts[n].is_functional():
                rep.violations.append(f"{tag}: {n} lost functionality")
        err = float(np.max(np.abs(brute_force_marginal(m, rest).values - full_joint(m2).values)))
        rep.marginal_error = max(rep.marginal_error, err)
        if err > tol:
            rep.violations.append(f"{tag}: marginal error {err:.3g}")
        k = int(rng.integers(1, min(2, len(rest)) + 1))
        xs = sorted(rng.choice(rest, size=k, replace=False).tolist())
        xi = {n: int(rng.integers(m.cards[n])) for n in xs}
        others = [n for n in rest if n not in xi] or rest
        a = brute_force_marginal(mutilate_bn(m, xi), others).values
        b = brute_force_marginal(mutilate_bn(m2, xi), others).values
        err = float(np.max(np.abs(a - b)))
        rep.interventional_error = max(rep.interventional_error, err)
        if err > tol:
            rep.violations.append(f"{tag}: interventional error {err:.3g}")
        for _ in range(2):
            order = [str(t) for t in rng.permutation(sorted(targets))]
            m3 = felim_bn(m, targets, order=order)
            for n in rest:
                d = float(np.max(np.abs(m3.cpts[n].table - m2.cpts[n].table))) if m3.cpts[n].parents == m2.cpts[n].parents else np.inf
                rep.order_error = max(rep.order_error, d)
                if d > order_tol:
                    rep.violations.append(f"{tag}: order {order} changes CPT of {n}")
    return rep
