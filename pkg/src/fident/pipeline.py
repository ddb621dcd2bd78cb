"""Deciding F-identifiability by reduction to classical identifiability.

Order of reductions: first-ancestor positivity check, elimination of hidden
functional variables, elimination of qualifying observed functional variables,
the hidden-parent reduction, and finally promotion of hidden functional
variables whose parents are all (pretend-)observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .bn import StateSpaceOverflow, random_parameterization
from .elimination import elimination_order, felim_dag, project
from .formula import Formula, render, to_json, variables
from .graph import CausalGraph, GraphError, first_ancestor, serialize_graph
from .identify import Fail, Hedge, Identified, id_algorithm
from .positivity import (
    GUARANTEED,
    ConstraintSet,
    PositivityConstraint,
    consistency_sufficient,
    implies,
    satisfied_by,
    separable,
)

__all__ = [
    "FQuery",
    "Verdict",
    "TraceStep",
    "Prop1Witness",
    "ApplicabilityReport",
    "FunctionalStatus",
    "reduce_hidden",
    "reduce_observed",
    "reduce_hidden_parent",
    "promote_closure",
    "prop1_witness",
    "decide",
    "replay",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = "1"

F_IDENTIFIABLE = "F-identifiable"
NOT_F_IDENTIFIABLE = "not-F-identifiable"
IDENTIFIABLE = "identifiable"
NOT_IDENTIFIABLE = "not-identifiable"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class FQuery:
    """``<G, V, C_V, W>`` with treatments ``x`` and outcomes ``y``.

    The stored graph carries ``V`` as its observed set and ``W`` as its functional set.
    """

    graph: CausalGraph
    x: frozenset[str]
    y: frozenset[str]
    constraints: ConstraintSet = ConstraintSet()
    observed: frozenset[str] | None = None
    functional: frozenset[str] | None = None

    def __post_init__(self):
        g = self.graph
        v = g.check_vars(g.observed if self.observed is None else self.observed)
        w = g.check_vars(g.functional if self.functional is None else self.functional)
        x, y = g.check_vars(self.x), g.check_vars(self.y)
        if not y:
            raise GraphError("outcome set must be non-empty")
        if x & y:
            raise GraphError(f"treatments and outcomes overlap: {sorted(x & y)}")
        if not (x | y) <= v:
            raise GraphError(f"treatments and outcomes must be observed: {sorted((x | y) - v)}")
        c = ConstraintSet(self.constraints)
        if not c.vars() <= v:
            raise GraphError(f"constraints mention non-observed variables {sorted(c.vars() - v)}")
        object.__setattr__(self, "graph", g.replace(observed=v, functional=w))
        object.__setattr__(self, "observed", v)
        object.__setattr__(self, "functional", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "constraints", c)

    def with_graph(self, g: CausalGraph) -> "FQuery":
        return FQuery(g, self.x, self.y, self.constraints, g.observed, g.functional)


@dataclass(frozen=True)
class TraceStep:
    """One reduction; ``op`` is ``felim``, ``observe``, ``forget`` or ``project``."""

    rule: str
    op: str
    args: tuple[str, ...]
    before: CausalGraph
    after: CausalGraph

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "op": self.op,
            "args": list(self.args),
            "before": serialize_graph(self.before),
            "after": serialize_graph(self.after),
        }


def _apply(op: str, args: tuple[str, ...], g: CausalGraph) -> CausalGraph:
    if op == "felim":
        return felim_dag(g, args, order=args)
    if op == "observe":
        return g.replace(observed=frozenset(args))
    if op == "forget":
        return g.replace(functional=g.functional - frozenset(args))
    if op == "project":
        return project(g)
    raise ValueError(f"unknown trace op {op!r}")


def replay(step: TraceStep) -> CausalGraph:
    """Recompute a step's output graph from its input."""
    return _apply(step.op, step.args, step.before)


@dataclass(frozen=True)
class Prop1Witness:
    treatment: str
    outcome: str

    def __str__(self) -> str:
        return (f"{self.treatment} is a first ancestor of {self.outcome} and the constraints "
                f"do not imply P({self.treatment})>0")


@dataclass(frozen=True)
class FunctionalStatus:
    variable: str
    not_treatment_or_outcome: bool
    separable: bool
    observed_parents: bool
    eliminated: bool
    hidden_parent: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ApplicabilityReport:
    entries: tuple[FunctionalStatus, ...]
    complete: bool

    def to_dict(self) -> dict:
        return {"complete": self.complete, "variables": [e.to_dict() for e in self.entries]}


@dataclass
class Verdict:
    status: str
    certificate: Any = None  # Formula | Hedge | Prop1Witness | ApplicabilityReport
    assumptions: list[str] = field(default_factory=list)
    required: ConstraintSet | None = None
    trace: list[TraceStep] = field(default_factory=list)
    report: ApplicabilityReport | None = None
    removable: frozenset[str] = frozenset()
    promoted: frozenset[str] = frozenset()
    consistency: str = GUARANTEED
    warnings: list[str] = field(default_factory=list)
    rule: str = ""
    id_invoked: bool = False
    formula: Formula | None = None  # also set when the formula holds only under extra assumptions

    @property
    def definitive(self) -> bool:
        return self.status != INCONCLUSIVE

    def to_dict(self) -> dict:
        cert = self.certificate
        if isinstance(cert, Hedge):
            c = {"kind": "hedge", "roots": sorted(cert.roots), "big": sorted(cert.big), "small": sorted(cert.small),
                 "big_edges": sorted(map(list, cert.big_edges)), "small_edges": sorted(map(list, cert.small_edges))}
        elif isinstance(cert, Prop1Witness):
            c = {"kind": "first-ancestor", "treatment": cert.treatment, "outcome": cert.outcome}
        elif isinstance(cert, ApplicabilityReport):
            c = {"kind": "applicability", **cert.to_dict()}
        elif cert is not None:
            c = {"kind": "formula", "plain": render(cert), "ast": to_json(cert)}
        else:
            c = None
        return {
            "schema": SCHEMA_VERSION,
            "status": self.status,
            "rule": self.rule,
            "certificate": c,
            "formula": render(self.formula) if self.formula is not None else None,
            "required_positivity": str(self.required) if self.required is not None else None,
            "assumptions": list(self.assumptions),
            "removable": sorted(self.removable),
            "promoted": sorted(self.promoted),
            "consistency": self.consistency,
            "warnings": list(self.warnings),
            "id_invoked": self.id_invoked,
            "report": self.report.to_dict() if self.report else None,
            "trace": [s.to_dict() for s in self.trace],
        }


# -- reductions ----------------------------------------------------------------------------

def reduce_hidden(q: FQuery, trace: list[TraceStep] | None = None) -> FQuery:
    """Functionally eliminate the hidden functional variables."""
    wh = q.functional - q.observed
    if not wh:
        return q
    order = tuple(elimination_order(q.graph, wh))
    g = felim_dag(q.graph, wh, order=order)
    if trace is not None:
        trace.append(TraceStep("hidden-functional", "felim", order, q.graph, g))
    return q.with_graph(g)


def _observed_candidates(q: FQuery) -> dict[str, tuple[bool, bool]]:
    out = {}
    for z in q.functional & q.observed:
        out[z] = (z not in q.x | q.y, separable(q.constraints, {z}))
    return out


def reduce_observed(q: FQuery, trace: list[TraceStep] | None = None) -> tuple[FQuery, tuple[str, ...], dict]:
    """Eliminate observed functional variables that are neither treatments nor outcomes,
    are separable from the constraints and have only observed parents when eliminated.

    Returns the reduced query, the eliminated variables (in order) and per-variable
    observed-parent findings.
    """
    cand = _observed_candidates(q)
    eliminated: list[str] = []
    obs_parents: dict[str, bool] = {}
    changed = True
    while changed:
        changed = False
        g = q.graph
        for z in reversed(g.order):
            if z not in cand or z in eliminated or not all(cand[z]):
                continue
            ok = all(p in g.observed for p in g.parents(z))
            obs_parents[z] = ok
            if not ok:
                continue
            g2 = felim_dag(g, {z})
            g2 = g2.replace(observed=g2.observed - {z})
            if trace is not None:
                trace.append(TraceStep("observed-functional", "felim", (z,), g, g2))
            eliminated.append(z)
            q = q.with_graph(g2)
            changed = True
            break
    for z in cand:
        if z not in obs_parents:
            obs_parents[z] = all(p in q.graph.observed for p in q.graph.parents(z)) if z in q.graph.nodes else True
    return q, tuple(eliminated), obs_parents


def reduce_hidden_parent(q: FQuery) -> bool:
    """Whether every remaining functional variable has a hidden parent."""
    g = q.graph
    return all(any(p not in g.observed for p in g.parents(w)) for w in q.functional)


def promote_closure(q: FQuery) -> frozenset[str]:
    """Least ``V' >= V`` closed under adding functional variables whose parents are in ``V'``."""
    g = q.graph
    vp = set(q.observed)
    changed = True
    while changed:
        changed = False
        for w in sorted(q.functional - vp):
            if set(g.parents(w)) <= vp:
                vp.add(w)
                changed = True
    return frozenset(vp)


def prop1_witness(q: FQuery) -> Prop1Witness | None:
    """First-ancestor treatment whose positivity the constraints provably leave open.

    Fires only when the treatment appears in no constraint's ``S`` part and, with
    functional variables present, no functional variable does either; a model with
    ``Pr(X=x)=0`` satisfying the constraints then exists.
    """
    c = q.constraints
    s_vars = frozenset().union(*(con.s for con in c)) if c else frozenset()
    if q.functional and s_vars & q.functional:
        return None
    for t in sorted(first_ancestor(q.graph, q.x, q.y)):
        if t in s_vars or implies(c, PositivityConstraint(frozenset([t]))):
            continue
        for o in sorted(q.y):
            if t in first_ancestor(q.graph, q.x, {o}):
                return Prop1Witness(t, o)
    return None


def _treatment_positivity(q: FQuery) -> ConstraintSet:
    return ConstraintSet(PositivityConstraint(frozenset([t])) for t in q.x)


def _project_id(q: FQuery, rule: str, trace: list[TraceStep]) -> tuple[CausalGraph, Identified | Fail]:
    g = q.graph
    if g.functional:
        g2 = _apply("forget", tuple(sorted(g.functional)), g)
        trace.append(TraceStep(rule, "forget", tuple(sorted(g.functional)), g, g2))
        g = g2
    gp = project(g)
    trace.append(TraceStep(rule, "project", (), g, gp))
    return gp, id_algorithm(gp, q.x, q.y)


def _consistency(q: FQuery, samples: int = 20) -> tuple[str, list[str]]:
    verdict = consistency_sufficient(q.graph, q.constraints, q.functional)
    warnings = []
    if verdict != GUARANTEED:
        try:
            hits = sum(satisfied_by(q.constraints, random_parameterization(q.graph, q.functional, seed=s))
                       for s in range(samples))
        except StateSpaceOverflow:
            hits = 1
        if hits == 0:
            warnings.append(f"constraints may be inconsistent with the functional variables: "
                            f"none of {samples} sampled models satisfied them")
    return verdict, warnings


def decide(q: FQuery) -> Verdict:
    """Decide (F-)identifiability of ``Pr_x(y)``; inconclusive when no reduction settles it."""
    functional_query = bool(q.functional)
    yes = F_IDENTIFIABLE if functional_query else IDENTIFIABLE
    no = NOT_F_IDENTIFIABLE if functional_query else NOT_IDENTIFIABLE
    consistency, warnings = _consistency(q)
    promoted = promote_closure(q)

    wit = prop1_witness(q)
    if wit is not None:
        return Verdict(no, wit, consistency=consistency, warnings=warnings, rule="first-ancestor",
                       promoted=promoted)

    trace: list[TraceStep] = []
    q1 = reduce_hidden(q, trace)
    q2, removed, obs_parents = reduce_observed(q1, trace)
    cand = _observed_candidates(q1)
    entries = []
    for z in sorted(cand):
        hidden_parent = z in q2.graph.nodes and any(p not in q2.graph.observed for p in q2.graph.parents(z))
        entries.append(FunctionalStatus(z, cand[z][0], cand[z][1], obs_parents.get(z, False), z in removed,
                                        hidden_parent))
    report = ApplicabilityReport(tuple(entries), all(e.eliminated or e.hidden_parent for e in entries))
    base = dict(trace=trace, report=report, removable=frozenset(removed), promoted=promoted,
                consistency=consistency, warnings=warnings)

    def finish(rule: str, strict_target: frozenset[str], q_id: FQuery) -> Verdict:
        _, res = _project_id(q_id, rule, trace)
        if isinstance(res, Fail):
            return Verdict(no, res.hedge, rule=rule, id_invoked=True,
                           assumptions=["ID failure holds under strict positivity, hence under any weaker constraints"],
                           **base)
        needed = [PositivityConstraint(strict_target)] + sorted(res.required)
        missing = [c for c in needed if not implies(q.constraints, c)]
        assumptions = [f"latent projection taken under P({','.join(sorted(strict_target))})>0",
                       f"formula requires {res.required}"]
        if missing:
            return Verdict(INCONCLUSIVE, report, rule=rule, id_invoked=True, required=res.required,
                           formula=res.formula,
                           assumptions=assumptions + ["constraints do not imply " + "; ".join(map(str, missing))],
                           **base)
        return Verdict(yes, res.formula, rule=rule, id_invoked=True, required=res.required, formula=res.formula,
                       assumptions=assumptions, **base)

    if not q2.functional:
        return finish("project-id", q2.observed, q2)
    if reduce_hidden_parent(q2):
        return finish("hidden-parent", q2.observed, q2)

    # promotion runs on the original query: hidden functional variables are pretended observed
    tp = _treatment_positivity(q)
    if all(implies(q.constraints, c) for c in tp):
        exact = set(q.constraints) == set(tp)
        g = q.graph
        g_obs = _apply("observe", tuple(sorted(promoted)), g)
        trace.append(TraceStep("promote", "observe", tuple(sorted(promoted)), g, g_obs))
        q_v = FQuery(g_obs, q.x, q.y, ConstraintSet(), promoted, q.functional)
        _, res = _project_id(q_v, "promote", trace)
        if isinstance(res, Fail):
            if exact:
                return Verdict(no, res.hedge, rule="promote", id_invoked=True,
                               assumptions=["equivalence holds under treatment positivity only"], **base)
            return Verdict(INCONCLUSIVE, report, rule="promote", id_invoked=True,
                           assumptions=["constraints stronger than treatment positivity: a failure is not conclusive"],
                           **base)
        note = "identifiable => F-identifiable (one-sided)" if not exact else "equivalence under treatment positivity"
        needed = [PositivityConstraint(promoted)] + sorted(res.required)
        missing = [c for c in needed if not implies(q.constraints, c)]
        if not missing:
            return Verdict(yes, res.formula, rule="promote", id_invoked=True, required=res.required,
                           formula=res.formula, assumptions=[note], **base)
        return Verdict(INCONCLUSIVE, report, rule="promote", id_invoked=True, required=res.required,
                       assumptions=[note, "constraints do not imply " + "; ".join(map(str, missing))], **base)
    return Verdict(INCONCLUSIVE, report, rule="none", **base)


def formula_mentions(f: Formula, names: Iterable[str]) -> bool:
    return bool(variables(f) & set(names))
