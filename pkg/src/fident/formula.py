"""Symbolic identifying formulas over the observed joint distribution.

A formula is a tree of :class:`Term` (a joint probability ``P(V1=s1, ...)``),
:class:`Sum`, :class:`Product`, :class:`Quotient` and :class:`One`. Values are
carried by *symbols*; each symbol belongs to one variable, and the same variable
may appear under several symbols (``x`` and the summed ``x'``).
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .bn import DiscreteBN, Factor, joint_marginal

__all__ = [
    "Term",
    "One",
    "Sum",
    "Product",
    "Quotient",
    "Formula",
    "PositivityViolation",
    "term",
    "product",
    "summation",
    "conditional",
    "free_symbols",
    "variables",
    "rename",
    "canonicalize",
    "simplify",
    "evaluate",
    "evaluate_formula",
    "render",
    "parse_formula",
    "to_json",
    "from_json",
]

Pairs = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Term:
    assignment: Pairs  # sorted (variable, symbol)


@dataclass(frozen=True)
class One:
    pass


@dataclass(frozen=True)
class Sum:
    bound: Pairs  # sorted (variable, symbol)
    body: "Formula"


@dataclass(frozen=True)
class Product:
    factors: tuple["Formula", ...]


@dataclass(frozen=True)
class Quotient:
    num: "Formula"
    den: "Formula"


Formula = Union[Term, One, Sum, Product, Quotient]


class PositivityViolation(ValueError):
    """A denominator vanished where its numerator did not."""


# -- construction ------------------------------------------------------------------

def term(assignment: Mapping[str, str] | Iterable[str]) -> Formula:
    if not isinstance(assignment, Mapping):
        assignment = {v: v for v in assignment}
    if not assignment:
        return One()
    return Term(tuple(sorted(assignment.items())))


def product(*factors: Formula) -> Formula:
    flat: list[Formula] = []
    for f in factors:
        if isinstance(f, Product):
            flat.extend(f.factors)
        elif not isinstance(f, One):
            flat.append(f)
    if not flat:
        return One()
    return flat[0] if len(flat) == 1 else Product(tuple(flat))


def summation(bound: Mapping[str, str] | Iterable[tuple[str, str]], body: Formula) -> Formula:
    pairs = tuple(sorted(dict(bound).items()))
    if not pairs:
        return body
    if isinstance(body, Sum):
        return Sum(tuple(sorted(pairs + body.bound)), body.body)
    return Sum(pairs, body)


def conditional(num: Formula, den: Formula) -> Formula:
    return num if isinstance(den, One) else Quotient(num, den)


# -- symbol bookkeeping -----------------------------------------------------------------

def free_symbols(f: Formula) -> dict[str, str]:
    """Free symbol -> variable."""
    if isinstance(f, Term):
        return {s: v for v, s in f.assignment}
    if isinstance(f, One):
        return {}
    if isinstance(f, Sum):
        inner = free_symbols(f.body)
        for _, s in f.bound:
            inner.pop(s, None)
        return inner
    if isinstance(f, Product):
        out: dict[str, str] = {}
        for g in f.factors:
            out.update(free_symbols(g))
        return out
    return {**free_symbols(f.num), **free_symbols(f.den)}


def variables(f: Formula) -> set[str]:
    """Every variable mentioned anywhere in the formula."""
    if isinstance(f, Term):
        return {v for v, _ in f.assignment}
    if isinstance(f, One):
        return set()
    if isinstance(f, Sum):
        return variables(f.body) | {v for v, _ in f.bound}
    if isinstance(f, Product):
        return set().union(*(variables(g) for g in f.factors))
    return variables(f.num) | variables(f.den)


def rename(f: Formula, mapping: Mapping[str, str]) -> Formula:
    """Substitute free symbols; bound symbols shadow the mapping."""
    if not mapping:
        return f
    if isinstance(f, Term):
        return Term(tuple(sorted((v, mapping.get(s, s)) for v, s in f.assignment)))
    if isinstance(f, One):
        return f
    if isinstance(f, Sum):
        inner = {k: v for k, v in mapping.items() if k not in {s for _, s in f.bound}}
        return Sum(f.bound, rename(f.body, inner))
    if isinstance(f, Product):
        return Product(tuple(rename(g, mapping) for g in f.factors))
    return Quotient(rename(f.num, mapping), rename(f.den, mapping))


def _primed(var: str, n: int) -> str:
    return var + "'" * n


def canonicalize(f: Formula) -> Formula:
    """Give every bound symbol the least-primed name of its variable that does not clash."""

    def go(f: Formula, taken: frozenset[str]) -> Formula:
        if isinstance(f, (Term, One)):
            return f
        if isinstance(f, Product):
            return Product(tuple(go(g, taken) for g in f.factors))
        if isinstance(f, Quotient):
            return Quotient(go(f.num, taken), go(f.den, taken))
        body_free = set(free_symbols(f.body)) - {s for _, s in f.bound}
        used = set(taken) | body_free
        mapping, pairs = {}, []
        for v, s in f.bound:
            new = next(_primed(v, n) for n in itertools.count() if _primed(v, n) not in used)
            used.add(new)
            mapping[s] = new
            pairs.append((v, new))
        body = rename(f.body, mapping)
        return Sum(tuple(sorted(pairs)), go(body, frozenset(used)))

    return go(f, frozenset(free_symbols(f)))


# -- simplification ----------------------------------------------------------------------

def _factors(f: Formula) -> list[Formula]:
    return list(f.factors) if isinstance(f, Product) else ([] if isinstance(f, One) else [f])


def _drop_pair(t: Term, sym: str) -> Formula:
    return term({v: s for v, s in t.assignment if s != sym})


def _marginalize_factor(f: Formula, var: str, sym: str) -> Formula | None:
    """``sum_sym f`` when ``f`` is the only factor mentioning ``sym``, or None."""
    if isinstance(f, Term):
        return _drop_pair(f, sym)
    if isinstance(f, Quotient) and isinstance(f.num, Term) and isinstance(f.den, (Term, One)):
        if sym in free_symbols(f.den):
            return None
        rest = _drop_pair(f.num, sym)
        if rest == f.den:
            return One()
        return conditional(rest, f.den)
    return None


def _step(f: Formula) -> Formula:
    if isinstance(f, (Term, One)):
        return f
    if isinstance(f, Quotient):
        num, den = _step(f.num), _step(f.den)
        if num == den:
            return One()
        return conditional(num, den)
    if isinstance(f, Product):
        fs = _factors(product(*(_step(g) for g in f.factors)))
        # chain rule: P(n|d) * P(d) -> P(n)
        changed = True
        while changed:
            changed = False
            for i, q in enumerate(fs):
                if isinstance(q, Quotient) and q.den in fs:
                    j = fs.index(q.den)
                    fs[i] = q.num
                    del fs[j]
                    changed = True
                    break
            if changed:
                continue
            # push a joint term into a sum holding its conditional: d * sum(P(n|d) ...) -> sum(P(n) ...)
            for i, t in enumerate(fs):
                if not isinstance(t, Term):
                    continue
                tsyms = set(free_symbols(t))
                for j, s in enumerate(fs):
                    if not isinstance(s, Sum) or tsyms & {b for _, b in s.bound}:
                        continue
                    inner = _factors(s.body)
                    if any(isinstance(q, Quotient) and q.den == t for q in inner):
                        fs[j] = Sum(s.bound, product(t, s.body))
                        del fs[i]
                        changed = True
                        break
                if changed:
                    break
        return product(*fs)
    # Sum
    body = _step(f.body)
    if isinstance(body, Sum):
        return summation(f.bound + body.bound, body.body)
    bound = list(f.bound)
    fs = _factors(body)
    for v, s in list(bound):
        holding = [i for i, g in enumerate(fs) if s in free_symbols(g)]
        if len(holding) == 1 and isinstance(fs[holding[0]], Sum) and len(fs) > 1:
            inner = fs[holding[0]]
            fs[holding[0]] = Sum(tuple(sorted(inner.bound + ((v, s),))), inner.body)
            bound.remove((v, s))
        elif len(holding) == 1:
            red = _marginalize_factor(fs[holding[0]], v, s)
            if red is not None:
                fs[holding[0]] = red
                bound.remove((v, s))
    bsyms = {s for _, s in bound}
    outside = [g for g in fs if not (set(free_symbols(g)) & bsyms)]
    inside = [g for g in fs if set(free_symbols(g)) & bsyms]
    if not bound or not inside:
        # sum over symbols that no factor mentions keeps its cardinality multiplier
        if bound:
            return product(*outside, Sum(tuple(bound), One()))
        return product(*outside)
    return product(*outside, summation(bound, product(*inside)))


def simplify(f: Formula, max_rounds: int = 50) -> Formula:
    """Semantics-preserving normalization.

    Cancels ``P(t)/P(t)``, merges nested sums, collapses ``sum_x P(x|z)`` to 1,
    marginalizes joint terms, pulls sum-independent factors out and applies the
    chain rule ``P(n|d) P(d) = P(n)``. Values are preserved wherever the
    denominators are positive; at a zero denominator ``P(t)/P(t)`` reads 0 before
    and 1 after.
    """
    for _ in range(max_rounds):
        g = _step(f)
        if g == f:
            break
        f = g
    return canonicalize(f)


# -- evaluation -----------------------------------------------------------------------------

def _expand(f: Factor, scope: tuple[str, ...]) -> np.ndarray:
    order = [s for s in scope if s in f.scope]
    vals = f.transpose(order).values if order else f.values
    shape = [vals.shape[order.index(s)] if s in order else 1 for s in scope]
    return vals.reshape(shape)


def evaluate(f: Formula, joint: Factor, tol: float = 1e-12) -> Factor:
    """Evaluate against an observed joint; the result's scope is the free symbols."""
    cards = dict(zip(joint.scope, joint.values.shape))
    cache: dict[frozenset[str], Factor] = {}

    def marginal(vs: frozenset[str]) -> Factor:
        if vs not in cache:
            cache[vs] = joint.sum_out(set(joint.scope) - vs)
        return cache[vs]

    def go(f: Formula) -> Factor:
        if isinstance(f, One):
            return Factor((), np.array(1.0))
        if isinstance(f, Term):
            vs = frozenset(v for v, _ in f.assignment)
            missing = vs - set(cards)
            if missing:
                raise KeyError(f"formula mentions unobserved variables {sorted(missing)}")
            m = marginal(vs)
            sym = dict(f.assignment)
            return Factor(tuple(sym[v] for v in m.scope), m.values)
        if isinstance(f, Product):
            out = Factor((), np.array(1.0))
            for g in f.factors:
                out = out * go(g)
            return out
        if isinstance(f, Sum):
            body = go(f.body)
            mult = 1.0
            for v, s in f.bound:
                if s not in body.scope:
                    mult *= cards[v]
            out = body.sum_out({s for _, s in f.bound})
            return Factor(out.scope, out.values * mult)
        num, den = go(f.num), go(f.den)
        scope = tuple(dict.fromkeys(num.scope + den.scope))
        n, d = np.broadcast_arrays(_expand(num, scope), _expand(den, scope))
        bad = (d == 0.0) & (np.abs(n) > tol)
        if np.any(bad):
            raise PositivityViolation(f"zero denominator {render(f.den)} under a nonzero numerator")
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(d == 0.0, 0.0, n / np.where(d == 0.0, 1.0, d))
        return Factor(scope, vals)

    return go(f)


def evaluate_formula(f: Formula, m: DiscreteBN, x: Mapping[str, int], y: Mapping[str, int],
                     observed: Iterable[str] | None = None) -> float:
    """Value of ``f`` at treatment ``x`` and outcome ``y``, using only ``Pr(V)`` of ``m``."""
    obs = sorted(m.graph.observed if observed is None else observed)
    res = evaluate(f, joint_marginal(m, obs))
    values = {**x, **y}
    syms = free_symbols(f)
    missing = set(res.scope) - set(values)
    if missing:
        raise KeyError(f"no value for free symbols {sorted(missing)}")
    return float(res.values[tuple(values[s] for s in res.scope)]) if res.scope else float(res.values)


# -- rendering ------------------------------------------------------------------------------

def _display_map(f: Formula) -> dict[str, str]:
    vs = variables(f)
    lowered = {v.lower() for v in vs}
    return {v: (v.lower() if len(lowered) == len(vs) else v) for v in vs}


def _sym_text(var: str, sym: str, disp: Mapping[str, str], latex: bool) -> str:
    primes = len(sym) - len(sym.rstrip("'")) if sym.startswith(var) else 0
    base = disp[var]
    if latex:
        stem = base.rstrip("0123456789")
        digits = base[len(stem):]
        p = "'" * primes
        return f"{stem}{p}_{{{digits}}}" if digits and stem else f"{base}{p}"
    return base + "'" * primes


def _sort_key(f: Formula, disp) -> tuple:
    rank = 1 if isinstance(f, Sum) else 0
    return (rank, sorted(variables(f)), _render(f, disp, False))


def _render(f: Formula, disp: Mapping[str, str], latex: bool) -> str:
    P = r"\Pr" if latex else "P"
    bar = r" \mid " if latex else "|"
    names = lambda pairs: ",".join(_sym_text(v, s, disp, latex) for v, s in sorted(pairs, key=lambda p: disp[p[0]]))
    if isinstance(f, One):
        return "1"
    if isinstance(f, Term):
        return f"{P}({names(f.assignment)})"
    if isinstance(f, Quotient):
        if isinstance(f.num, Term) and isinstance(f.den, Term) and set(f.den.assignment) < set(f.num.assignment):
            head = [p for p in f.num.assignment if p not in f.den.assignment]
            return f"{P}({names(head)}{bar}{names(f.den.assignment)})"
        n, d = _render(f.num, disp, latex), _render(f.den, disp, latex)
        return rf"\frac{{{n}}}{{{d}}}" if latex else f"[{n}] / [{d}]"
    if isinstance(f, Sum):
        body = _render(f.body, disp, latex)
        sub = names(f.bound)
        return rf"\sum_{{{sub}}} {body}" if latex else f"sum_{{{sub}}} {body}"
    parts = sorted(f.factors, key=lambda g: _sort_key(g, disp))
    out = []
    for i, g in enumerate(parts):
        txt = _render(g, disp, latex)
        if isinstance(g, Sum) and i < len(parts) - 1:
            txt = (r"\left(" + txt + r"\right)") if latex else f"[{txt}]"
        out.append(txt)
    return " ".join(out)


def render(f: Formula, style: str = "plain") -> str:
    """``plain``, ``latex`` or ``json`` (the json-ast form)."""
    if style == "json":
        return json.dumps(to_json(f), sort_keys=False)
    if style not in ("plain", "latex"):
        raise ValueError(f"unknown style {style!r}")
    return _render(f, _display_map(f), style == "latex")


_TOKENS = re.compile(r"\s*(sum_\{[^}]*\}|P\(|\)|\||,|\[|\]|/|[A-Za-z_][A-Za-z0-9_]*'*)")


def parse_formula(text: str, names: Iterable[str]) -> Formula:
    """Parse the plain rendering, e.g. ``sum_{a} P(a) P(y|a,x)``.

    Names are matched case-insensitively against ``names``; primes mark distinct
    symbols of the same variable. A sum extends to the end of its bracket group.
    """
    lookup = {n.lower(): n for n in names}
    lookup.update({n: n for n in names})
    pos, toks = 0, []
    while pos < len(text.rstrip()):
        m = _TOKENS.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse formula at {text[pos:pos + 12]!r}")
        toks.append(m.group(1))
        pos = m.end()
    toks.append("")
    i = 0

    def sym(tok: str) -> tuple[str, str]:
        base = tok.rstrip("'")
        if base not in lookup:
            raise ValueError(f"unknown variable {base!r} in formula")
        var = lookup[base]
        return var, var + "'" * (len(tok) - len(base))

    def names_until(stop: set[str]) -> list[tuple[str, str]]:
        nonlocal i
        out = []
        while toks[i] not in stop:
            if toks[i] != ",":
                out.append(sym(toks[i]))
            i += 1
        return out

    def factor() -> Formula:
        nonlocal i
        t = toks[i]
        if t.startswith("sum_{"):
            i += 1
            bound = [sym(n) for n in t[5:-1].split(",") if n]
            return summation(bound, group())
        if t == "P(":
            i += 1
            head = names_until({"|", ")"})
            given: list[tuple[str, str]] = []
            if toks[i] == "|":
                i += 1
                given = names_until({")"})
            i += 1
            return conditional(term(dict(head + given)), term(dict(given)))
        if t == "[":
            i += 1
            num = group()
            i += 1  # ]
            if toks[i] == "/":
                i += 2  # / [
                den = group()
                i += 1
                return Quotient(num, den)
            return num
        if t == "1":
            i += 1
            return One()
        raise ValueError(f"unexpected token {t!r} in formula")

    def group() -> Formula:
        parts = []
        while toks[i] not in ("", "]"):
            parts.append(factor())
        return product(*parts)

    out = group()
    if toks[i] != "":
        raise ValueError(f"unexpected token {toks[i]!r} in formula")
    return out


def to_json(f: Formula) -> dict:
    if isinstance(f, Term):
        return {"kind": "term", "vars": [list(p) for p in f.assignment], "children": []}
    if isinstance(f, One):
        return {"kind": "one", "vars": [], "children": []}
    if isinstance(f, Sum):
        return {"kind": "sum", "vars": [list(p) for p in f.bound], "children": [to_json(f.body)]}
    if isinstance(f, Product):
        return {"kind": "product", "vars": [], "children": [to_json(g) for g in f.factors]}
    return {"kind": "quotient", "vars": [], "children": [to_json(f.num), to_json(f.den)]}


def from_json(d: Mapping) -> Formula:
    kind = d["kind"]
    pairs = tuple((str(v), str(s)) for v, s in d.get("vars", []))
    kids = [from_json(c) for c in d.get("children", [])]
    if kind == "term":
        return Term(pairs)
    if kind == "one":
        return One()
    if kind == "sum":
        return Sum(pairs, kids[0])
    if kind == "product":
        return Product(tuple(kids))
    if kind == "quotient":
        return Quotient(kids[0], kids[1])
    raise ValueError(f"unknown formula node kind {kind!r}")
