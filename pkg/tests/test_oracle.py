import pytest

from fident.bn import StateSpaceOverflow
from fident.formula import parse_formula
from fident.graph import parse_graph
from fident.oracle import (
    FalsifierConfig,
    elimination_soundness_suite,
    falsify,
    validate_formula,
)
from fident.positivity import parse_constraints

from conftest import load


def test_validate_correct_and_wrong_formula():
    g = load("fig3a")
    v, w = g.observed, {"B"}
    c = parse_constraints("strict", v, w)
    good = parse_formula("sum_{a} P(a) P(y|a,x)", "AXY")
    rep = validate_formula(g, v, w, c, good, {"X"}, {"Y"}, n_seeds=20)
    assert rep.conclusive and rep.max_error <= 1e-9 and not rep.violations
    bad = parse_formula("P(y|x)", "XY")
    assert validate_formula(g, v, w, c, bad, {"X"}, {"Y"}, n_seeds=20).max_error > 1e-3


def test_validate_rejects_stray_free_symbols():
    g = load("fig3a")
    with pytest.raises(Exception):
        validate_formula(g, g.observed, {"B"}, [], parse_formula("P(a,y|x)", "AXY"), {"X"}, {"Y"}, n_seeds=1)


def test_validate_skips_models_violating_constraints():
    g = parse_graph("node A\nnode C functional\nnode X\nnode Y\nedge A C\nedge C X\nedge X Y\n")
    c = parse_constraints("P(A,C)>0", g.observed, {"C"})
    rep = validate_formula(g, g.observed, {"C"}, c, parse_formula("P(y|x)", "XY"), {"X"}, {"Y"}, n_seeds=5)
    assert rep.skipped == 5 and not rep.conclusive


def test_falsifier_finds_counterexample_without_functional_confounder():
    g = load("fig3a")
    res = falsify(g, g.observed, set(), [], {"X"}, {"Y"}, FalsifierConfig(seed=0, restarts=10))
    assert res.found and res.label == "counterexample"
    ce = res.counterexample
    assert ce.match <= 1e-6 and ce.gap >= 1e-2


def test_falsifier_none_found_when_identifiable():
    g = load("fig3a")
    cfg = FalsifierConfig(seed=0, restarts=4, iterations=300)
    res = falsify(g, g.observed, {"B"}, parse_constraints("strict", g.observed, {"B"}), {"X"}, {"Y"}, cfg)
    assert not res.found and res.label == "none-found (not conclusive)"
    g = load("pos-classic")
    assert not falsify(g, g.observed, set(), [], {"X"}, {"Y"}, cfg).found


def test_falsifier_parallel_matches_serial_verdict():
    g = load("fig3a")
    cfg = FalsifierConfig(seed=0, restarts=3, workers=2)
    assert falsify(g, g.observed, set(), [], {"X"}, {"Y"}, cfg).found


def test_falsifier_config_and_cap():
    with pytest.raises(ValueError):
        FalsifierConfig(eps_match=1e-1, delta=1e-2)
    with pytest.raises(ValueError):
        FalsifierConfig(restarts=0)
    g = load("fig1a")
    with pytest.raises(StateSpaceOverflow):
        falsify(g, g.observed, set(), [], {"X1"}, {"Y"}, cap=8)


def test_soundness_suite_small():
    rep = elimination_soundness_suite(n_graphs=30, seed=3)
    assert rep.ok, rep.violations
    assert rep.marginal_error <= 1e-9 and rep.order_error <= 1e-12
