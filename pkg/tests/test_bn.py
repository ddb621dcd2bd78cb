import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fident.bn import (
    Cpt,
    DiscreteBN,
    Factor,
    StateSpaceOverflow,
    brute_force_marginal,
    felim_bn,
    format_bn,
    full_joint,
    interventional,
    joint_marginal,
    mutilate_bn,
    parse_bn,
    random_parameterization,
)
from fident.elimination import felim_dag
from fident.graph import GraphError, parse_graph

from conftest import FIXTURES, load
from strategies import dags


def _manual_joint(m: DiscreteBN) -> dict:
    """Reference joint by explicit product over every assignment."""
    nodes = m.nodes
    out = {}
    for states in itertools.product(*(range(m.cards[n]) for n in nodes)):
        a = dict(zip(nodes, states))
        p = 1.0
        for n in nodes:
            cpt = m.cpts[n]
            p *= cpt.table[tuple(a[q] for q in cpt.parents) + (a[n],)]
        out[states] = p
    return out


def test_factor_product_and_sum():
    f = Factor(("A",), np.array([0.2, 0.8]))
    g = Factor(("A", "B"), np.array([[0.5, 0.5], [0.1, 0.9]]))
    h = f * g
    assert h.scope == ("A", "B")
    assert np.allclose(h.sum_out({"A"}).values, [0.18, 0.82])
    assert h[{"A": 1, "B": 1}] == pytest.approx(0.72)
    with pytest.raises(ValueError):
        Factor(("A", "A"), np.ones((2, 2)))


def test_cpt_validation():
    g = parse_graph("node A\nnode B functional\nedge A B\n")
    ok = {"A": Cpt("A", (), [0.3, 0.7]), "B": Cpt("B", ("A",), [[1.0, 0.0], [0.0, 1.0]])}
    DiscreteBN(g, {"A": 2, "B": 2}, ok)
    with pytest.raises(ValueError):
        DiscreteBN(g, {"A": 2, "B": 2}, {**ok, "B": Cpt("B", ("A",), [[0.5, 0.5], [0.0, 1.0]])})
    with pytest.raises(ValueError):
        DiscreteBN(g, {"A": 2, "B": 2}, {**ok, "A": Cpt("A", (), [0.3, 0.6])})
    with pytest.raises(ValueError):
        DiscreteBN(g, {"A": 2, "B": 2}, {**ok, "B": Cpt("B", (), [1.0, 0.0])})


@settings(max_examples=60, deadline=None)
@given(dags(min_nodes=1, max_nodes=6), st.integers(0, 10**6))
def test_brute_force_matches_explicit_product(g, seed):
    m = random_parameterization(g, seed=seed, cards={n: 2 + (i % 2) for i, n in enumerate(g.sorted_nodes())})
    ref = _manual_joint(m)
    j = full_joint(m)
    for states, p in ref.items():
        assert j.values[states] == pytest.approx(p, abs=1e-15)
    assert j.values.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(dags(min_nodes=2, max_nodes=7), st.integers(0, 10**6), st.data())
def test_variable_elimination_matches_brute_force(g, seed, data):
    m = random_parameterization(g, seed=seed)
    s = data.draw(st.sets(st.sampled_from(g.sorted_nodes()), min_size=1))
    assert np.allclose(joint_marginal(m, s).values, brute_force_marginal(m, s).values, atol=1e-12)


def test_interventional_on_confounded_graph_differs_from_conditional():
    m = random_parameterization(load("fig3a"), seed=3)
    pxy = joint_marginal(m, {"X", "Y"}).values
    cond = pxy[1] / pxy[1].sum()
    do = interventional(m, {"X": 1}, {"Y"}).values
    assert abs(cond[1] - do[1]) > 1e-3
    mm = mutilate_bn(m, {"X": 1})
    assert mm.graph.parents("X") == ()
    with pytest.raises(ValueError):
        mutilate_bn(m, {"X": 5})


def test_state_cap():
    g = parse_graph("".join(f"node V{i}\n" for i in range(6)))
    m = random_parameterization(g, seed=0)
    with pytest.raises(StateSpaceOverflow):
        full_joint(m, cap=32)
    with pytest.raises(StateSpaceOverflow):
        joint_marginal(m, g.nodes, cap=32)


def test_functional_parameterization_is_deterministic():
    g = load("fig2a")
    m = random_parameterization(g, seed=1)
    assert m.graph.functional == {"C", "D"}
    assert m.cpts["C"].is_functional() and m.cpts["D"].is_functional()
    assert not m.cpts["G"].is_functional()
    m2 = random_parameterization(g, seed=1)
    assert all(np.array_equal(m.cpts[n].table, m2.cpts[n].table) for n in g.nodes)


@settings(max_examples=80, deadline=None)
@given(dags(min_nodes=2, max_nodes=7, hidden=False), st.integers(0, 10**6))
def test_felim_bn_preserves_marginal_and_interventions(g, seed):
    m = random_parameterization(g, seed=seed)
    w = sorted(g.functional)
    m2 = felim_bn(m, w)
    assert m2.graph == felim_dag(g, w)
    rest = sorted(m2.graph.nodes)
    assert np.allclose(brute_force_marginal(m, rest).values, full_joint(m2).values, atol=1e-12)
    x = {rest[0]: 1}
    a = brute_force_marginal(mutilate_bn(m, x), rest).values
    b = full_joint(mutilate_bn(m2, x)).values
    assert np.allclose(a, b, atol=1e-12)
    for n in rest:
        if n in g.functional:
            assert m2.cpts[n].is_functional()


def test_felim_bn_rejects_non_functional_or_root():
    m = random_parameterization(load("fig3a"), seed=0)
    with pytest.raises(GraphError):
        felim_bn(m, {"B"})
    with pytest.raises(GraphError):
        felim_bn(random_parameterization(load("fig3a"), {"B"}, seed=0), {"A"})


def test_bn_format_round_trip_and_fixtures():
    for path in sorted(FIXTURES.glob("*.bn")):
        m = parse_bn(path.read_text())
        again = parse_bn(format_bn(m))
        assert format_bn(again) == format_bn(m)
        assert np.array_equal(full_joint(m).values, full_joint(again).values)
    m = random_parameterization(load("fig1c"), seed=4)
    assert np.array_equal(full_joint(parse_bn(format_bn(m))).values, full_joint(m).values)


def test_bn_parse_errors():
    with pytest.raises(ValueError):
        parse_bn("node A\ncpt A |\n: 0.5 0.5\ncpt A |\n: 0.5 0.5\n")
    with pytest.raises(ValueError):
        parse_bn("node A\nnode B\nedge A B\ncpt A |\n: 0.5 0.5\n")
    with pytest.raises(ValueError):
        parse_bn("node A\ncpt A |\n0.5 0.5\n")
