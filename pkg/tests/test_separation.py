import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fident.bn import brute_force_marginal, random_parameterization
from fident.elimination import felim_dag
from fident.graph import GraphError, parse_graph
from fident.separation import D_separated, d_separated, functional_closure

from conftest import load
from strategies import dags


def test_fig2_separations():
    g = load("fig2a")
    assert not d_separated(g, {"G"}, {"I"}, {"A"})
    assert D_separated(g, {"C", "D"}, {"G"}, {"I"}, {"A"})
    assert functional_closure(g, {"C", "D"}, {"A", "B"}) == {"A", "B", "C", "D"}
    assert not D_separated(g, {"C", "D"}, {"G"}, {"I"})


def test_chain_fork_collider():
    g = parse_graph("node A\nnode B\nnode C\nnode D\nnode E\nedge A B\nedge B C\nedge D B\nedge B E\n")
    assert not d_separated(g, {"A"}, {"C"})
    assert d_separated(g, {"A"}, {"C"}, {"B"})
    assert d_separated(g, {"A"}, {"D"})
    assert not d_separated(g, {"A"}, {"D"}, {"B"})
    assert not d_separated(g, {"A"}, {"D"}, {"E"})  # descendant of the collider


def test_query_validation():
    g = load("fig2a")
    with pytest.raises(GraphError):
        d_separated(g, {"G"}, {"G"})
    with pytest.raises(GraphError):
        d_separated(g, set(), {"G"})
    with pytest.raises(GraphError):
        D_separated(g, {"A"}, {"G"}, {"I"})  # A is not functional


def test_determined_query_members_are_trivially_separated():
    g = parse_graph("node A\nnode B functional\nnode C\nedge A B\nedge B C\nedge A C\n")
    assert D_separated(g, {"B"}, {"B"}, {"C"}, {"A"})
    assert not d_separated(g, {"B"}, {"C"}, {"A"})


def _independent(m, x, y, z, tol=1e-9) -> bool:
    names = sorted(set(x) | set(y) | set(z))
    j = brute_force_marginal(m, names)
    ax = {n: i for i, n in enumerate(j.scope)}
    p = j.values
    pxz = p.sum(axis=tuple(ax[n] for n in y), keepdims=True)
    pyz = p.sum(axis=tuple(ax[n] for n in x), keepdims=True)
    pz = p.sum(axis=tuple(ax[n] for n in list(x) + list(y)), keepdims=True)
    return bool(np.all(np.abs(p * pz - pxz * pyz) <= tol))


@settings(max_examples=60, deadline=None)
@given(dags(min_nodes=3, max_nodes=7, hidden=False), st.integers(0, 2**31 - 1))
def test_D_separation_implies_independence_in_functional_models(g, seed):
    # oracle: numeric conditional independence in random models with W functional
    rng = np.random.default_rng(seed)
    nodes = g.sorted_nodes()
    perm = list(rng.permutation(nodes))
    x, y, z = {perm[0]}, {perm[1]}, set(perm[2:2 + int(rng.integers(0, len(perm) - 1))])
    for s in range(3):
        m = random_parameterization(g, g.functional, seed=seed + s)
        if D_separated(g, g.functional, x, y, z):
            assert _independent(m, x, y, z)
        if d_separated(g, x, y, z):
            assert D_separated(g, g.functional, x, y, z)


@settings(max_examples=100, deadline=None)
@given(dags(min_nodes=2, max_nodes=8, hidden=False), st.data())
def test_closure_properties(g, data):
    z = data.draw(st.sets(st.sampled_from(g.sorted_nodes())))
    extra = data.draw(st.sets(st.sampled_from(g.sorted_nodes())))
    c = functional_closure(g, g.functional, z)
    assert z <= c
    assert functional_closure(g, g.functional, c) == c
    assert c <= functional_closure(g, g.functional, z | extra)
    assert c - z <= g.functional


@settings(max_examples=80, deadline=None)
@given(dags(min_nodes=3, max_nodes=9, hidden=False), st.data())
def test_elimination_preserves_D_separation(g, data):
    wp = data.draw(st.sets(st.sampled_from(sorted(g.functional)))) if g.functional else set()
    g2 = felim_dag(g, wp)
    rest = sorted(g2.nodes)
    if len(rest) < 2:
        return
    perm = data.draw(st.permutations(rest))
    a = data.draw(st.integers(1, len(rest) - 1))
    b = data.draw(st.integers(a + 1, len(rest)))
    c = data.draw(st.integers(b, len(rest)))
    x, y, z = set(perm[:a]), set(perm[a:b]), set(perm[b:c])
    assert D_separated(g, g.functional, x, y, z) == D_separated(g2, g.functional - wp, x, y, z)
