"""Symbolic operations on formulas.

Normalization is purely syntactic: every atom becomes ``poly <= k`` or
``poly = k`` over integers, with monomials sorted by variable name and the
coefficients divided by their gcd.  Predicate atoms additionally fix a
polarity (leading coefficient positive) so that ``x < 2`` and ``x >= 2``
denote the same predicate.
"""

from __future__ import annotations

from functools import lru_cache, reduce
from math import gcd
from typing import Mapping

from .syntax import (
    FALSE, TRUE, And, Atom, BinOp, BoolConst, Const, Expr, Formula, Implies,
    Neg, Not, Or, Transition, Var, conj, format_formula,
)


class NotConjunctive(ValueError):
    pass


class InputInWp(ValueError):
    pass


class UnboundVariable(LookupError):
    pass


# ---------------------------------------------------------------------------
# substitution and weakest precondition


def substitute_expr(e: Expr, sigma: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return sigma.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(substitute_expr(e.arg, sigma))
    return BinOp(e.op, substitute_expr(e.left, sigma), substitute_expr(e.right, sigma))


def substitute(phi: Formula, sigma: Mapping[str, Expr]) -> Formula:
    """Simultaneous substitution ``phi[sigma]``."""
    if isinstance(phi, Atom):
        return Atom(phi.op, substitute_expr(phi.left, sigma), substitute_expr(phi.right, sigma))
    if isinstance(phi, Not):
        return Not(substitute(phi.arg, sigma))
    if isinstance(phi, And):
        return And(tuple(substitute(a, sigma) for a in phi.args))
    if isinstance(phi, Or):
        return Or(tuple(substitute(a, sigma) for a in phi.args))
    if isinstance(phi, Implies):
        return Implies(substitute(phi.left, sigma), substitute(phi.right, sigma))
    return phi


def wp(phi: Formula, t: Transition) -> Formula:
    """Weakest precondition of a closed guarded command: ``g => phi[e/x]``."""
    if t.input_vars:
        raise InputInWp(f"transition {t.name} assigns input")
    return Implies(t.guard, substitute(phi, t.updates))


# ---------------------------------------------------------------------------
# polynomials: dict monomial -> coefficient, monomial = sorted tuple of names

Poly = dict


def _padd(a: Poly, b: Poly, sign: int = 1) -> Poly:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, 0) + sign * c
    return {m: c for m, c in out.items() if c}


def _pmul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = tuple(sorted(m1 + m2))
            out[m] = out.get(m, 0) + c1 * c2
    return {m: c for m, c in out.items() if c}


def to_poly(e: Expr) -> Poly:
    if isinstance(e, Const):
        return {(): e.value} if e.value else {}
    if isinstance(e, Var):
        return {(e.name,): 1}
    if isinstance(e, Neg):
        return {m: -c for m, c in to_poly(e.arg).items()}
    left, right = to_poly(e.left), to_poly(e.right)
    if e.op == "+":
        return _padd(left, right)
    if e.op == "-":
        return _padd(left, right, -1)
    return _pmul(left, right)


def _term(mono: tuple[str, ...], coeff: int) -> Expr:
    body: Expr = Var(mono[0])
    for v in mono[1:]:
        body = BinOp("*", body, Var(v))
    if coeff == 1:
        return body
    if coeff == -1:
        return Neg(body)
    return BinOp("*", Const(coeff), body)


def poly_to_expr(p: Poly) -> Expr:
    """Variable part of ``p`` as an expression, monomials in sorted order."""
    monos = sorted(m for m in p if m)
    if not monos:
        return Const(p.get((), 0))
    e = _term(monos[0], p[monos[0]])
    for m in monos[1:]:
        c = p[m]
        if c > 0:
            e = BinOp("+", e, _term(m, c))
        else:
            e = BinOp("-", e, _term(m, -c))
    if p.get((), 0):
        k = p[()]
        e = BinOp("+", e, Const(k)) if k > 0 else BinOp("-", e, Const(-k))
    return e


def _canonical_atom(op: str, p: Poly) -> Formula:
    """Atom ``p op 0`` with op in {<=, =}, gcd-reduced, constant on the right."""
    k = p.get((), 0)
    lin = {m: c for m, c in p.items() if m}
    if not lin:
        return TRUE if (k <= 0 if op == "<=" else k == 0) else FALSE
    g = reduce(gcd, (abs(c) for c in lin.values()))
    if op == "=":
        if k % g:
            return FALSE
        lin = {m: c // g for m, c in lin.items()}
        rhs = -k // g
        if lin[min(lin)] < 0:
            lin = {m: -c for m, c in lin.items()}
            rhs = -rhs
        return Atom("=", poly_to_expr(lin), Const(rhs))
    # sum(c*m) + k <= 0  <=>  sum(c/g*m) <= floor(-k/g)
    lin = {m: c // g for m, c in lin.items()}
    return Atom("<=", poly_to_expr(lin), Const((-k) // g))


def _normalize_atom(a: Atom) -> Formula:
    p = _padd(to_poly(a.left), to_poly(a.right), -1)
    op = a.op
    if op == "<=":
        return _canonical_atom("<=", p)
    if op == "<":
        return _canonical_atom("<=", _padd(p, {(): 1}))
    if op == ">=":
        return _canonical_atom("<=", {m: -c for m, c in p.items()})
    if op == ">":
        return _canonical_atom("<=", _padd({m: -c for m, c in p.items()}, {(): 1}))
    if op == "=":
        return _canonical_atom("=", p)
    if op == "!=":
        return _negate(_canonical_atom("=", p))
    raise ValueError(f"unknown relation {op!r}")


def _negate(f: Formula) -> Formula:
    if isinstance(f, BoolConst):
        return BoolConst(not f.value)
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def _sort_key(f: Formula) -> str:
    return format_formula(f)


@lru_cache(maxsize=1 << 16)
def normalize(phi: Formula) -> Formula:
    """Syntactic canonical form; idempotent."""
    if isinstance(phi, BoolConst):
        return phi
    if isinstance(phi, Atom):
        return _normalize_atom(phi)
    if isinstance(phi, Not):
        return _negate(normalize(phi.arg))
    if isinstance(phi, Implies):
        return normalize(Or((Not(phi.left), phi.right)))
    is_and = isinstance(phi, And)
    unit, zero = (TRUE, FALSE) if is_and else (FALSE, TRUE)
    parts: dict[Formula, None] = {}
    stack = list(reversed(phi.args))
    while stack:
        a = normalize(stack.pop())
        if a == zero:
            return zero
        if a == unit:
            continue
        if isinstance(a, And if is_and else Or):
            stack.extend(reversed(a.args))
            continue
        parts[a] = None
    items = sorted(parts, key=_sort_key)
    if not items:
        return unit
    if len(items) == 1:
        return items[0]
    return And(tuple(items)) if is_and else Or(tuple(items))


# ---------------------------------------------------------------------------
# predicate atoms


def _lead_negative(lhs: Expr) -> bool:
    p = to_poly(lhs)
    return p[min(m for m in p if m)] < 0


@lru_cache(maxsize=1 << 16)
def predicate_atom(f: Formula) -> tuple[Formula, bool]:
    """Split a literal into (canonical polarity-free atom, polarity).

    Returns ``(TRUE/FALSE, True)`` for literals that fold to constants.
    """
    f = normalize(f)
    positive = True
    if isinstance(f, Not):
        f = f.arg
        positive = False
    if isinstance(f, BoolConst):
        return (BoolConst(f.value == positive), True)
    if not isinstance(f, Atom):
        raise NotConjunctive(format_formula(f))
    if f.op == "<=" and _lead_negative(f.left):
        # -p <= k  <=>  not (p <= -k - 1)
        flipped = Atom("<=", poly_to_expr({m: -c for m, c in to_poly(f.left).items()}),
                       Const(-f.right.value - 1))
        return (flipped, not positive)
    return (f, positive)


def canonical_atom(f: Formula) -> Formula:
    return predicate_atom(f)[0]


def conjuncts(phi: Formula) -> list[Formula]:
    """Polarity-free canonical atoms of the literals of a conjunction."""
    n = normalize(phi)
    lits = n.args if isinstance(n, And) else (n,)
    out: dict[Formula, None] = {}
    for lit in lits:
        if isinstance(lit, (Or, And, Implies)):
            raise NotConjunctive(format_formula(phi))
        atom, _ = predicate_atom(lit)
        if not isinstance(atom, BoolConst):
            out[atom] = None
    return list(out)


def literals(phi: Formula) -> list[Formula]:
    """Normalized literals of a conjunction (constants dropped)."""
    n = normalize(phi)
    if n == TRUE:
        return []
    lits = n.args if isinstance(n, And) else (n,)
    for lit in lits:
        if isinstance(lit, (Or, And, Implies)):
            raise NotConjunctive(format_formula(phi))
    return list(lits)


def atoms(phi: Formula) -> list[Formula]:
    """All canonical atoms of an arbitrary formula, in order of appearance."""
    out: dict[Formula, None] = {}

    def walk(f: Formula):
        if isinstance(f, Atom):
            a, _ = predicate_atom(f)
            if not isinstance(a, BoolConst):
                out[a] = None
        elif isinstance(f, Not):
            walk(f.arg)
        elif isinstance(f, (And, Or)):
            for x in f.args:
                walk(x)
        elif isinstance(f, Implies):
            walk(f.left)
            walk(f.right)

    walk(phi)
    return list(out)


def cube(literal_pairs) -> Formula:
    """Conjunction of (atom, polarity) pairs."""
    return conj(*(a if pos else Not(a) for a, pos in literal_pairs))


# ---------------------------------------------------------------------------
# evaluation


def evaluate_expr(e: Expr, s: Mapping[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return s[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Neg):
        return -evaluate_expr(e.arg, s)
    a, b = evaluate_expr(e.left, s), evaluate_expr(e.right, s)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    return a * b


_REL = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def evaluate(phi: Formula, s: Mapping[str, int]) -> bool:
    if isinstance(phi, Atom):
        return _REL[phi.op](evaluate_expr(phi.left, s), evaluate_expr(phi.right, s))
    if isinstance(phi, BoolConst):
        return phi.value
    if isinstance(phi, Not):
        return not evaluate(phi.arg, s)
    if isinstance(phi, And):
        return all(evaluate(a, s) for a in phi.args)
    if isinstance(phi, Or):
        return any(evaluate(a, s) for a in phi.args)
    if isinstance(phi, Implies):
        return (not evaluate(phi.left, s)) or evaluate(phi.right, s)
    raise TypeError(f"not a formula: {phi!r}")
