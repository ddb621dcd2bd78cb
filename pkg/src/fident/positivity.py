"""Positivity constraints ``Pr(S|Z) > 0``: parsing, satisfaction, implication and consistency."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .bn import STRUCTURAL_TOL, DiscreteBN, joint_marginal
from .graph import CausalGraph, GraphError, first_ancestor

__all__ = [
    "PositivityConstraint",
    "ConstraintSet",
    "parse_constraints",
    "satisfied_by",
    "separable",
    "consistency_sufficient",
    "positive_sets",
    "implies",
    "implies_positive",
    "check_prop1",
    "minimize",
    "GUARANTEED",
    "UNKNOWN",
]

GUARANTEED = "guaranteed-consistent"
UNKNOWN = "unknown"


@dataclass(frozen=True, order=True)
class PositivityConstraint:
    s: frozenset[str]
    z: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "s", frozenset(self.s))
        object.__setattr__(self, "z", frozenset(self.z))
        if not self.s:
            raise ValueError("positivity constraint needs a non-empty S")
        if self.s & self.z:
            raise ValueError(f"S and Z overlap in {self}")

    @property
    def vars(self) -> frozenset[str]:
        return self.s | self.z

    def __str__(self) -> str:
        s = ",".join(sorted(self.s))
        return f"P({s}|{','.join(sorted(self.z))})>0" if self.z else f"P({s})>0"


class ConstraintSet(frozenset):
    """A frozenset of :class:`PositivityConstraint` with a stable text form."""

    def vars(self) -> frozenset[str]:
        return frozenset().union(*(c.vars for c in self)) if self else frozenset()

    def __str__(self) -> str:
        return "; ".join(str(c) for c in sorted(self, key=_key)) if self else "{}"

    def __repr__(self) -> str:
        return f"ConstraintSet({str(self)!r})"


def _key(c: PositivityConstraint):
    return (sorted(c.s), sorted(c.z))


_ATOM = re.compile(r"^P\(([^|)]*)(?:\|([^)]*))?\)>0$")


def parse_constraints(
    text: str,
    observed: Iterable[str] = (),
    functional: Iterable[str] = (),
    treatments: Iterable[str] = (),
) -> ConstraintSet:
    """Parse ``"P(A,B|C)>0; P(X)>0"`` or the macros ``strict``, ``strict-nonfunc``, ``treatments``."""
    observed, functional, treatments = set(observed), set(functional), set(treatments)
    out = set()
    for raw in (text or "").split(";"):
        item = re.sub(r"\s+", "", raw)
        if not item or item in ("{}", "none"):
            continue
        if item == "strict":
            out.add(PositivityConstraint(frozenset(observed)))
        elif item == "strict-nonfunc":
            out.add(PositivityConstraint(frozenset(observed - functional)))
        elif item == "treatments":
            out |= {PositivityConstraint(frozenset([x])) for x in treatments}
        else:
            m = _ATOM.match(item)
            if not m:
                raise ValueError(f"cannot parse positivity constraint {raw.strip()!r}")
            s = frozenset(filter(None, m.group(1).split(",")))
            z = frozenset(filter(None, (m.group(2) or "").split(",")))
            c = PositivityConstraint(s, z)
            if observed and not c.vars <= observed:
                raise GraphError(f"{c} mentions non-observed variables {sorted(c.vars - observed)}")
            out.add(c)
    return ConstraintSet(out)


def satisfied_by(c: Iterable[PositivityConstraint], m: DiscreteBN, tol: float = STRUCTURAL_TOL) -> bool:
    """Every instantiation ``(s, z)`` with ``Pr(z) > tol`` has ``Pr(s, z) > tol``."""
    for con in c:
        joint = joint_marginal(m, con.vars)
        s_axes = tuple(i for i, v in enumerate(joint.scope) if v in con.s)
        pz = joint.values.sum(axis=s_axes, keepdims=True)
        if np.any((pz > tol) & (joint.values <= tol)):
            return False
    return True


def separable(c: Iterable[PositivityConstraint], w: Iterable[str]) -> bool:
    return not (ConstraintSet(c).vars() & set(w))


def _reaches_nonfunctional(g: CausalGraph, w: str, blockers: frozenset[str], functional: frozenset[str]) -> bool:
    """Whether some non-functional variable has a directed path to ``w`` avoiding ``blockers``."""
    stack, seen = list(g.parents(w)), set()
    while stack:
        n = stack.pop()
        if n in seen or n in blockers:
            continue
        seen.add(n)
        if n not in functional:
            return True
        stack.extend(g.parents(n))
    return False


def consistency_sufficient(g: CausalGraph, c: Iterable[PositivityConstraint], w: Iterable[str]) -> str:
    """One-sided consistency test: ``GUARANTEED`` or ``UNKNOWN`` (never "inconsistent").

    A constraint mentioning a functional ``w`` must not also mention a set that cuts
    every directed path from non-functional variables into ``w``.
    """
    w = g.check_vars(w)
    for con in c:
        for v in con.vars & w:
            if not _reaches_nonfunctional(g, v, con.vars - {v}, w):
                return UNKNOWN
    return GUARANTEED


def positive_sets(c: Iterable[PositivityConstraint]) -> list[frozenset[str]]:
    """Variable sets whose joint is derivably positive.

    ``Pr(S|Z)>0`` gives ``Pr(S)>0``; together with a positive superset of ``Z`` it gives
    ``Pr(S,Z)>0``. Subsets of positive sets are positive by marginalization.
    """
    c = list(c)
    sets = {con.s for con in c}
    changed = True
    while changed:
        changed = False
        for con in c:
            if con.z and con.vars not in sets and any(con.z <= p for p in sets):
                sets.add(con.vars)
                changed = True
    return sorted(sets, key=lambda s: (-len(s), sorted(s)))


def implies(c: Iterable[PositivityConstraint], target: PositivityConstraint) -> bool:
    """Conservative: True only when ``target`` follows from ``c`` by the rules above."""
    c = list(c)
    if any(target.vars <= p for p in positive_sets(c)):
        return True
    return any(con.z == target.z and target.s <= con.s for con in c)


def implies_positive(c: Iterable[PositivityConstraint], x: str) -> bool:
    return implies(c, PositivityConstraint(frozenset([x])))


def check_prop1(g: CausalGraph, v: Iterable[str], c: Iterable[PositivityConstraint],
                x: Iterable[str], y: Iterable[str]) -> tuple[str, tuple[str, str] | None]:
    """First-ancestor necessity test.

    Returns ``("not-identifiable", (treatment, outcome))`` when a first-ancestor treatment
    lacks derivable ``Pr(X)>0``; otherwise ``("inconclusive", None)``.
    """
    x, y = g.check_vars(x), g.check_vars(y)
    c = list(c)
    for t in sorted(first_ancestor(g, x, y)):
        if not implies_positive(c, t):
            for o in sorted(y):
                if t in first_ancestor(g, x, {o}):
                    return "not-identifiable", (t, o)
    return "inconclusive", None


def minimize(c: Iterable[PositivityConstraint]) -> ConstraintSet:
    """Drop constraints implied by the remaining ones."""
    items = sorted(set(c), key=lambda k: (-len(k.vars), -len(k.s), _key(k)))
    kept: list[PositivityConstraint] = []
    for con in items:
        if not implies(kept, con):
            kept.append(con)
    for con in list(kept):
        others = [k for k in kept if k != con]
        if implies(others, con):
            kept = others
    return ConstraintSet(kept)
