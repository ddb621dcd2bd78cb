import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fident.bn import Cpt, DiscreteBN, joint_marginal, random_parameterization
from fident.graph import GraphError, parse_graph
from fident.positivity import (
    GUARANTEED,
    UNKNOWN,
    ConstraintSet,
    PositivityConstraint,
    check_prop1,
    consistency_sufficient,
    implies,
    implies_positive,
    minimize,
    parse_constraints,
    positive_sets,
    satisfied_by,
    separable,
)

from conftest import load

PC = PositivityConstraint


def test_parse_macros_and_atoms():
    obs = {"A", "B", "X", "Y"}
    assert parse_constraints("strict", obs) == {PC(obs)}
    assert parse_constraints("strict-nonfunc", obs, {"B"}) == {PC({"A", "X", "Y"})}
    assert parse_constraints("treatments", obs, (), {"X", "A"}) == {PC({"X"}), PC({"A"})}
    c = parse_constraints(" P(A, B | X) > 0 ; P(Y)>0 ", obs)
    assert c == {PC({"A", "B"}, {"X"}), PC({"Y"})}
    assert str(c) == "P(A,B|X)>0; P(Y)>0"
    assert parse_constraints("", obs) == frozenset()
    with pytest.raises(ValueError):
        parse_constraints("P(A>0", obs)
    with pytest.raises(GraphError):
        parse_constraints("P(H)>0", obs)
    with pytest.raises(ValueError):
        PC({"A"}, {"A"})
    with pytest.raises(ValueError):
        PC(set())


def test_satisfied_by_detects_zero_cells():
    g = parse_graph("node A\nnode B\nedge A B\n")
    m = DiscreteBN(g, {"A": 2, "B": 2}, {"A": Cpt("A", (), [0.5, 0.5]),
                                         "B": Cpt("B", ("A",), [[1.0, 0.0], [0.3, 0.7]])})
    assert satisfied_by([PC({"A"})], m)
    assert satisfied_by([PC({"B"})], m)
    assert not satisfied_by([PC({"B"}, {"A"})], m)
    assert not satisfied_by([PC({"A", "B"})], m)
    assert satisfied_by([PC({"A"}, {"B"})], m) is False  # P(A=1|B=0) = 0


def test_implication_rules():
    c = [PC({"X", "A"}, {"Z"}), PC({"Z"})]
    assert implies(c, PC({"X"}))
    assert implies(c, PC({"X", "A", "Z"}))
    assert implies(c, PC({"X"}, {"A", "Z"}))
    assert not implies([PC({"Y"}, {"X"})], PC({"X"}))
    assert implies_positive([PC({"X"}, {"A"})], "X")
    assert {"A", "X", "Z"} in positive_sets(c)


def test_minimize_keeps_meaning():
    c = [PC({"X", "Z"}), PC({"X"}, {"Z"}), PC({"Z"}), PC({"Y"})]
    m = minimize(c)
    assert m == {PC({"X", "Z"}), PC({"Y"})}
    assert all(implies(m, k) for k in c)


def test_separable_and_consistency():
    g = load("fig2a")
    c = [PC({"A", "G"})]
    assert separable(c, {"C", "D"})
    assert not separable([PC({"A"}, {"G"})], {"G"})
    assert consistency_sufficient(g, c, {"C", "D"}) == GUARANTEED
    h = parse_graph("node A\nnode B functional\nnode C functional\nedge A B\nedge B C\n")
    # B cuts every path from the non-functional A into C
    assert consistency_sufficient(h, [PC({"B", "C"})], {"B", "C"}) == UNKNOWN
    # C is a function of A, so P(A,C)>0 is unsatisfiable and must not be guaranteed
    assert consistency_sufficient(h, [PC({"A", "C"})], {"B", "C"}) == UNKNOWN
    assert consistency_sufficient(h, [PC({"C"})], {"B", "C"}) == GUARANTEED


def test_check_prop1():
    g = load("prop1")
    assert check_prop1(g, g.observed, [], {"X1", "X2"}, {"Y2"}) == ("not-identifiable", ("X2", "Y2"))
    assert check_prop1(g, g.observed, [PC({"X2"}, {"X1"})], {"X1", "X2"}, {"Y2"}) == ("inconclusive", None)
    strict = parse_constraints("strict", g.observed)
    assert check_prop1(g, g.observed, strict, {"X1", "X2"}, {"Y2"}) == ("inconclusive", None)


def _sparse_bn(g, rng):
    """Random CPTs where some entries are zero, so positivity often fails."""
    cpts, cards = {}, {n: 2 for n in g.nodes}
    for n in g.order:
        pa = g.parents(n)
        t = rng.dirichlet(np.ones(2), size=2 ** len(pa))
        mask = rng.random(t.shape) < 0.2
        t = np.where(mask, 0.0, t)
        t[t.sum(axis=1) == 0, 0] = 1.0
        t /= t.sum(axis=1, keepdims=True)
        cpts[n] = Cpt(n, pa, t.reshape((2,) * len(pa) + (2,)))
    return DiscreteBN(g, cards, cpts)


def _true_positive(m, target: PositivityConstraint) -> bool:
    return satisfied_by([target], m)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_implication_is_sound_against_exact_inference(seed):
    # oracle: exact marginals of a model satisfying the premises
    rng = np.random.default_rng(seed)
    names = ["A", "B", "C", "D"]
    edges = {(a, b) for i, a in enumerate(names) for b in names[i + 1:] if rng.random() < 0.5}
    g = parse_graph("".join(f"node {n}\n" for n in names) + "".join(f"edge {a} {b}\n" for a, b in sorted(edges)))
    m = _sparse_bn(g, rng)
    cons = []
    for _ in range(int(rng.integers(1, 4))):
        s = set(rng.choice(names, size=int(rng.integers(1, 3)), replace=False))
        z = set(rng.choice(sorted(set(names) - s), size=int(rng.integers(0, 2)), replace=False))
        cons.append(PC(s, z))
    if not satisfied_by(cons, m):
        return
    for k in range(1, 3):
        for s in itertools.combinations(names, k):
            for zs in itertools.combinations(sorted(set(names) - set(s)), 1):
                for target in (PC(set(s)), PC(set(s), set(zs))):
                    if implies(cons, target):
                        assert _true_positive(m, target)
