import itertools

import numpy as np
import pytest

from fident.bn import interventional, random_parameterization
from fident.formula import evaluate_formula, render, variables
from fident.graph import GraphError, parse_graph
from fident.identify import Hedge
from fident.pipeline import (
    F_IDENTIFIABLE,
    IDENTIFIABLE,
    INCONCLUSIVE,
    NOT_F_IDENTIFIABLE,
    NOT_IDENTIFIABLE,
    FQuery,
    Prop1Witness,
    decide,
    promote_closure,
    prop1_witness,
    reduce_hidden,
    reduce_observed,
    replay,
)
from fident.positivity import parse_constraints

from conftest import load


def query(name, w="", c="", x="X", y="Y", v=None):
    g = load(name)
    v = frozenset(v) if v is not None else g.observed
    w = frozenset(filter(None, w.split(",")))
    xs, ys = frozenset(x.split(",")), frozenset(y.split(","))
    return FQuery(g, xs, ys, parse_constraints(c, v, w, xs), v, w)


def _check_formula(v, q, seeds=5):
    g = q.graph.replace(functional=q.functional)
    x, y = sorted(q.x), sorted(q.y)
    for s in range(seeds):
        m = random_parameterization(g, q.functional, seed=s)
        for xs in itertools.product(*(range(m.cards[t]) for t in x)):
            xi = dict(zip(x, xs))
            truth = interventional(m, xi, y)
            for ys in itertools.product(*(range(m.cards[t]) for t in y)):
                yi = dict(zip(y, ys))
                assert evaluate_formula(v.formula, m, xi, yi) == pytest.approx(truth[yi], abs=1e-9)


def _replays(v):
    for step in v.trace:
        assert replay(step) == step.after


def test_fig3_unconstrained_stops_at_first_ancestor():
    v = decide(query("fig3a"))
    assert v.status == NOT_IDENTIFIABLE and v.certificate == Prop1Witness("X", "Y") and not v.id_invoked


def test_fig3_without_functional_is_not_identifiable():
    v = decide(query("fig3a", c="strict"))
    assert v.status == NOT_IDENTIFIABLE and isinstance(v.certificate, Hedge)
    assert v.definitive and v.id_invoked


def test_fig3_with_functional_confounder():
    q = query("fig3a", w="B", c="strict")
    v = decide(q)
    assert v.status == F_IDENTIFIABLE
    assert render(v.formula) == "sum_{a} P(a) P(y|a,x)"
    assert v.trace[0].op == "felim" and v.trace[0].args == ("B",)
    _replays(v)
    _check_formula(v, q)


def test_fig4_matrix():
    q = query("fig4a", w="D,E", c="strict")
    v = decide(q)
    assert v.status == F_IDENTIFIABLE
    _check_formula(v, q, seeds=3)

    v = decide(query("fig4a", w="D,E,F", c="P(A,B,C,X,Y)>0"))
    assert v.status == NOT_F_IDENTIFIABLE and v.removable == {"F"}
    assert isinstance(v.certificate, Hedge)

    q = query("fig4a", w="B,D,E", c="P(A,C,F,X,Y)>0")
    v = decide(q)
    assert v.status == F_IDENTIFIABLE and v.removable == {"B"}
    assert render(v.formula) == "sum_{a,f} P(f|a,x) sum_{c,x'} P(y|a,c,f,x') P(a,c,x')"
    assert not variables(v.formula) & v.removable
    _check_formula(v, q, seeds=3)
    _replays(v)

    v = decide(query("fig4a", w="D,E,F", c="P(X)>0"))
    assert v.status == NOT_F_IDENTIFIABLE
    assert v.promoted == {"A", "B", "C", "D", "E", "F", "X", "Y"}


def test_insufficient_positivity_is_inconclusive():
    v = decide(query("pos-classic", c="treatments"))
    assert v.status == INCONCLUSIVE and not v.definitive
    assert v.formula is not None and any("do not imply" in a for a in v.assumptions)
    v = decide(query("pos-classic", c="strict"))
    assert v.status == IDENTIFIABLE


def test_first_ancestor_shortcut():
    q = query("prop1", x="X1,X2", y="Y2")
    w = prop1_witness(q)
    assert w == Prop1Witness("X2", "Y2")  # X1 reaches Y2 only through X2
    v = decide(q)
    assert v.status == NOT_IDENTIFIABLE and not v.id_invoked and v.rule == "first-ancestor"
    for c in ("P(X1)>0", "P(Y2|X2)>0"):
        assert decide(query("prop1", x="X1,X2", y="Y2", c=c)).rule == "first-ancestor"
    assert decide(query("prop1", x="X1,X2", y="Y2", c="P(X2)>0")).rule != "first-ancestor"
    v = decide(query("prop1", x="X1,X2", y="Y2", c="strict"))
    assert v.status == IDENTIFIABLE and render(v.formula) == "P(y2|x1,x2)"


def test_reductions():
    q = query("fig3a", w="B")
    trace = []
    q1 = reduce_hidden(q, trace)
    assert "B" not in q1.graph.nodes and q1.functional == frozenset()
    assert len(trace) == 1 and replay(trace[0]) == q1.graph

    q = query("fig4a", w="B,D,E", c="P(A,C,F,X,Y)>0")
    q2, removed, obs_parents = reduce_observed(reduce_hidden(q))
    assert removed == ("B",) and obs_parents["B"]
    assert "B" not in q2.observed

    # not separable: B appears in a constraint
    q = query("fig4a", w="B,D,E", c="strict")
    _, removed, _ = reduce_observed(reduce_hidden(q))
    assert removed == ()


def test_treatments_and_outcomes_are_never_eliminated():
    q = query("fig4a", w="D,E,F", c="P(A,B,C,X,Y)>0", y="F")
    _, removed, _ = reduce_observed(reduce_hidden(q))
    assert "F" not in removed


def test_promote_closure():
    g = parse_graph("node A\nnode B hidden functional\nnode C hidden functional\nnode H hidden\n"
                    "node X\nnode Y\nedge A B\nedge B C\nedge H C\nedge B X\nedge X Y\nedge C Y\n")
    q = FQuery(g, frozenset({"X"}), frozenset({"Y"}))
    assert promote_closure(q) == {"A", "B", "X", "Y"}


def test_applicability_report_lists_blocked_variables():
    v = decide(query("fig4a", w="B,D,E", c="strict"))
    entries = {e.variable: e for e in v.report.entries}
    assert not entries["B"].separable and not entries["B"].eliminated


def test_verdict_serializes_deterministically():
    v = decide(query("fig4a", w="B,D,E", c="P(A,C,F,X,Y)>0"))
    a, b = v.to_dict(), decide(query("fig4a", w="B,D,E", c="P(A,C,F,X,Y)>0")).to_dict()
    assert a == b and a["schema"] == "1" and a["certificate"]["kind"] == "formula"


def test_consistency_warning_for_unsatisfiable_constraints():
    g = parse_graph("node A\nnode C functional\nnode X\nnode Y\nedge A C\nedge C X\nedge X Y\n")
    q = FQuery(g, frozenset({"X"}), frozenset({"Y"}), parse_constraints("P(A,C)>0", g.observed, {"C"}))
    v = decide(q)
    assert v.warnings and "inconsistent" in v.warnings[0]


def test_query_validation():
    g = load("fig3a")
    with pytest.raises(GraphError):
        FQuery(g, frozenset({"X"}), frozenset({"X"}))
    with pytest.raises(GraphError):
        FQuery(g, frozenset({"B"}), frozenset({"Y"}))
    with pytest.raises(GraphError):
        FQuery(g, frozenset({"X"}), frozenset({"Y"}), parse_constraints("P(B)>0", {"A", "B", "X", "Y"}))
