"""Command-line front end: ``fident <subcommand> ...``.

Exit codes: 0 definitive result, 2 inconclusive, 1 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .bn import StateSpaceOverflow
from .elimination import felim_dag, fproject, project
from .formula import from_json, render, to_json
from .graph import CausalGraph, GraphError, parse_graph, serialize_graph
from .oracle import FalsifierConfig, elimination_soundness_suite, falsify, validate_formula
from .pipeline import SCHEMA_VERSION, FQuery, decide
from .positivity import parse_constraints
from .separation import D_separated, d_separated

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _names(text: str | None) -> list[str]:
    return [t for t in (text or "").replace(" ", ",").split(",") if t]


def _load(path: str) -> CausalGraph:
    return parse_graph(Path(path).read_text())


def _with_roles(g: CausalGraph, args) -> CausalGraph:
    """Merge ``--functional`` into the DSL flags and apply ``--observed`` if given."""
    w = g.functional | g.check_vars(_names(getattr(args, "functional", None)))
    obs = _names(getattr(args, "observed", None))
    v = g.check_vars(obs) if obs else g.observed
    return g.replace(observed=v, functional=w)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(json.dumps({"schema": SCHEMA_VERSION, **payload}, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _query(args) -> FQuery:
    g = _with_roles(_load(args.graph), args)
    x, y = _names(args.treat), _names(args.outcome)
    c = parse_constraints(args.constraints, g.observed, g.functional, x)
    return FQuery(g, frozenset(x), frozenset(y), c, g.observed, g.functional)


# -- subcommands -------------------------------------------------------------------------------

def _cmd_identify(args) -> int:
    q = _query(args)
    v = decide(q)
    d = v.to_dict()
    if v.formula is not None:
        d["latex"] = render(v.formula, "latex")
    lines = [f"status: {v.status}", f"rule: {v.rule}"]
    if v.formula is not None:
        lines.append(f"formula: P_{{{','.join(sorted(x.lower() for x in q.x))}}}"
                     f"({','.join(sorted(y.lower() for y in q.y))}) = {render(v.formula)}")
        if args.latex:
            lines.append(f"latex: {render(v.formula, 'latex')}")
        if args.ast:
            lines.append("ast: " + json.dumps(to_json(v.formula)))
    if d["certificate"] and d["certificate"]["kind"] == "hedge":
        c = d["certificate"]
        lines.append(f"hedge: roots {{{','.join(c['roots'])}}}, forests {{{','.join(c['big'])}}} "
                     f"and {{{','.join(c['small'])}}}")
    if d["certificate"] and d["certificate"]["kind"] == "first-ancestor":
        lines.append(f"witness: {v.certificate}")
    if v.required is not None:
        lines.append(f"required positivity: {v.required}")
    lines += [f"assumption: {a}" for a in v.assumptions]
    if v.removable:
        lines.append(f"removable observations: {','.join(sorted(v.removable))}")
    lines.append(f"promoted variables: {','.join(sorted(v.promoted))}")
    lines.append(f"consistency: {v.consistency}")
    lines += [f"warning: {w}" for w in v.warnings]
    if args.trace:
        for i, s in enumerate(v.trace, 1):
            lines.append(f"step {i}: {s.rule} {s.op} {','.join(s.args)}".rstrip())
            lines += ["  " + ln for ln in serialize_graph(s.after).splitlines()]
    if args.report and v.report is not None:
        lines.append("report: " + json.dumps(v.report.to_dict(), sort_keys=True))
    _emit(args, d, "\n".join(lines))
    return 0 if v.definitive else 2


def _cmd_dsep(args) -> int:
    g = _load(args.graph)
    res = d_separated(g, _names(args.x), _names(args.y), _names(args.z))
    _emit(args, {"d_separated": res}, f"d-separated: {str(res).lower()}")
    return 0


def _cmd_Dsep(args) -> int:
    g = _with_roles(_load(args.graph), args)
    res = D_separated(g, g.functional, _names(args.x), _names(args.y), _names(args.z))
    _emit(args, {"D_separated": res}, f"D-separated: {str(res).lower()}")
    return 0


def _graph_out(args, g: CausalGraph) -> int:
    text = serialize_graph(g)
    _emit(args, {"graph": text}, text)
    return 0


def _cmd_felim(args) -> int:
    g = _with_roles(_load(args.graph), args)
    targets = _names(args.targets) or sorted(g.functional)
    order = _names(args.order) or None
    return _graph_out(args, felim_dag(g, targets, order=order))


def _cmd_project(args) -> int:
    g = _with_roles(_load(args.graph), args)
    return _graph_out(args, project(g))


def _cmd_fproject(args) -> int:
    g = _with_roles(_load(args.graph), args)
    return _graph_out(args, fproject(g, hidden_functional=g.functional - g.observed))


def _cmd_validate(args) -> int:
    q = _query(args)
    if args.formula:
        f = from_json(json.loads(Path(args.formula).read_text()))
    else:
        v = decide(q)
        if v.formula is None:
            raise GraphError(f"no formula to validate: verdict is {v.status}")
        f = v.formula
    rep = validate_formula(q.graph, q.observed, q.functional, q.constraints, f, q.x, q.y,
                           n_seeds=args.seeds, seed=args.seed)
    passed = rep.conclusive and rep.max_error <= args.tol and not rep.violations
    d = {"formula": render(f), "passed": passed, **rep.to_dict()}
    text = (f"formula: {render(f)}\nseeds checked: {rep.checked}, skipped: {rep.skipped}\n"
            f"max error: {rep.max_error:.3e}\nresult: {'pass' if passed else 'fail' if rep.conclusive else 'inconclusive'}")
    _emit(args, d, text)
    return 0 if passed else 2


def _cmd_falsify(args) -> int:
    q = _query(args)
    cfg = FalsifierConfig(seed=args.seed, restarts=args.budget, iterations=args.iterations,
                          eps_match=args.eps_match, delta=args.delta, workers=args.workers)
    res = falsify(q.graph, q.observed, q.functional, q.constraints, q.x, q.y, cfg)
    d = res.to_dict()
    lines = [f"result: {res.label}", f"restarts run: {res.restarts_run}"]
    if res.found:
        ce = res.counterexample
        lines += [f"treatment: {ce.x}", f"outcome: {ce.y}", f"joint mismatch: {ce.match:.3e}",
                  f"effect gap: {ce.gap:.4f}"]
    _emit(args, d, "\n".join(lines))
    return 0 if res.found else 2


def _cmd_soundness(args) -> int:
    rep = elimination_soundness_suite(args.graphs, args.seed)
    text = (f"instances: {rep.instances}\nmarginal error: {rep.marginal_error:.3e}\n"
            f"interventional error: {rep.interventional_error:.3e}\norder error: {rep.order_error:.3e}\n"
            f"violations: {len(rep.violations)}")
    _emit(args, rep.to_dict(), text)
    return 0 if rep.ok else 2


# -- parser -----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    graph = _Parser(add_help=False)
    graph.add_argument("-g", "--graph", required=True, help="graph DSL file")
    roles = _Parser(add_help=False)
    roles.add_argument("--functional", help="functional variables, merged with DSL flags")
    roles.add_argument("--observed", help="override the observed set")
    query = _Parser(add_help=False)
    query.add_argument("--treat", required=True, help="treatment variables, comma separated")
    query.add_argument("--outcome", required=True, help="outcome variables, comma separated")
    query.add_argument("--constraints", default="", help="e.g. 'strict', 'treatments', 'P(A,B|C)>0; P(X)>0'")
    sep = _Parser(add_help=False)
    for name in ("--x", "--y"):
        sep.add_argument(name, required=True)
    sep.add_argument("--z", default="")

    p = _Parser(prog="fident", description="Causal effect identification with functional dependencies.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("identify", parents=[common, graph, roles, query], help="decide (F-)identifiability")
    s.add_argument("--trace", action="store_true")
    s.add_argument("--ast", action="store_true")
    s.add_argument("--latex", action="store_true")
    s.add_argument("--report", action="store_true")
    s.set_defaults(func=_cmd_identify)

    sub.add_parser("dsep", parents=[common, graph, sep], help="d-separation").set_defaults(func=_cmd_dsep)
    s = sub.add_parser("Dsep", parents=[common, graph, sep, roles], help="D-separation")
    s.set_defaults(func=_cmd_Dsep)

    s = sub.add_parser("felim", parents=[common, graph, roles], help="functional elimination")
    s.add_argument("--targets", help="variables to eliminate (default: all functional)")
    s.add_argument("--order", help="elimination order")
    s.set_defaults(func=_cmd_felim)
    sub.add_parser("project", parents=[common, graph, roles], help="latent projection").set_defaults(func=_cmd_project)
    sub.add_parser("fproject", parents=[common, graph, roles],
                   help="functional projection").set_defaults(func=_cmd_fproject)

    o = sub.add_parser("oracle", help="numeric checks")
    osub = o.add_subparsers(dest="oracle_cmd", required=True, parser_class=_Parser)
    s = osub.add_parser("validate", parents=[common, graph, roles, query], help="check a formula numerically")
    s.add_argument("--formula", help="json-ast file (default: the formula from identify)")
    s.add_argument("--seeds", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=_cmd_validate)
    s = osub.add_parser("falsify", parents=[common, graph, roles, query], help="search for a counterexample")
    s.add_argument("--seed", "--seeds", type=int, default=0, dest="seed")
    s.add_argument("--budget", type=int, default=50, help="restarts")
    s.add_argument("--iterations", type=int, default=2000)
    s.add_argument("--eps-match", type=float, default=1e-6)
    s.add_argument("--delta", type=float, default=1e-2)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_falsify)
    s = osub.add_parser("soundness", parents=[common], help="elimination soundness suite")
    s.add_argument("--graphs", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_soundness)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GraphError, ValueError, KeyError, OSError, StateSpaceOverflow) as e:
        msg = str(e) if not isinstance(e, KeyError) or not e.args else str(e.args[0])
        sys.stderr.write(f"fident: error: {msg}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
