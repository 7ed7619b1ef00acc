"""Expression and formula trees shared by guards, updates, predicates and properties.

All nodes are frozen dataclasses, so they compare structurally and can be
used as dictionary keys.  Integers are Python ints (unbounded).
"""

from __future__ import annotations

import builtins
from functools import lru_cache

from dataclasses import dataclass, field
from typing import Iterator, Union


def _cached_hash(self) -> int:
    # formula trees are hashed constantly (caches, sets); hash each node once
    h = self.__dict__.get("_hash")
    if h is None:
        h = hash((type(self).__name__,) + tuple(getattr(self, f) for f in self.__dataclass_fields__))
        object.__setattr__(self, "_hash", h)
    return h


class _Node:
    """Base of tree nodes; the cached hash is process-specific, so never pickle it."""

    def __getstate__(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


@dataclass(frozen=True)
class Const(_Node):
    value: int

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Var(_Node):
    name: str

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Neg(_Node):
    arg: "Expr"

    __hash__ = _cached_hash


@dataclass(frozen=True)
class BinOp(_Node):
    op: str  # one of + - *
    left: "Expr"
    right: "Expr"

    __hash__ = _cached_hash


Expr = Union[Const, Var, Neg, BinOp]

RELOPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class BoolConst(_Node):
    value: bool

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Atom(_Node):
    op: str
    left: Expr
    right: Expr

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Not(_Node):
    arg: "Formula"

    __hash__ = _cached_hash


@dataclass(frozen=True)
class And(_Node):
    args: tuple["Formula", ...]

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Or(_Node):
    args: tuple["Formula", ...]

    __hash__ = _cached_hash


@dataclass(frozen=True)
class Implies(_Node):
    left: "Formula"
    right: "Formula"

    __hash__ = _cached_hash


Formula = Union[BoolConst, Atom, Not, And, Or, Implies]

TRUE = BoolConst(True)
FALSE = BoolConst(False)


def conj(*parts: Formula) -> Formula:
    """Conjunction that avoids one-element and empty `And` nodes."""
    parts = tuple(p for p in parts if p != TRUE)
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return And(parts)


def disj(*parts: Formula) -> Formula:
    parts = tuple(p for p in parts if p != FALSE)
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Or(parts)


def expr_vars(e: Expr) -> Iterator[str]:
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, Neg):
        yield from expr_vars(e.arg)
    elif isinstance(e, BinOp):
        yield from expr_vars(e.left)
        yield from expr_vars(e.right)


def formula_vars(f: Formula) -> Iterator[str]:
    if isinstance(f, Atom):
        yield from expr_vars(f.left)
        yield from expr_vars(f.right)
    elif isinstance(f, Not):
        yield from formula_vars(f.arg)
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from formula_vars(a)
    elif isinstance(f, Implies):
        yield from formula_vars(f.left)
        yield from formula_vars(f.right)


@lru_cache(maxsize=1 << 16)
def free_vars(f: Formula) -> frozenset[str]:
    return frozenset(formula_vars(f))


# ---------------------------------------------------------------------------
# printing

_EXPR_PREC = {"+": 1, "-": 1, "*": 2}


def format_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = format_expr(e.arg, 3)
        if isinstance(e.arg, Var):
            return "-" + inner
        return "-(" + format_expr(e.arg) + ")"
    p = _EXPR_PREC[e.op]
    left = format_expr(e.left, p)
    # right operand binds tighter: a - (b - c) must keep its parentheses
    right = format_expr(e.right, p + 1)
    if e.op in "+-" and right.startswith("-"):
        right = "(" + right + ")"
    text = f"{left} {e.op} {right}"
    return f"({text})" if p < prec else text


# precedence: implication 1, or 2, and 3, not 4, atom 5
def format_formula(f: Formula, prec: int = 0) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"{format_expr(f.left)} {f.op} {format_expr(f.right)}"
    if isinstance(f, Not):
        return "!" + format_formula(f.arg, 5)
    if isinstance(f, And):
        text = " && ".join(format_formula(a, 4) for a in f.args)
        return f"({text})" if prec > 3 else text
    if isinstance(f, Or):
        text = " || ".join(format_formula(a, 3) for a in f.args)
        return f"({text})" if prec > 2 else text
    if isinstance(f, Implies):
        text = f"{format_formula(f.left, 2)} => {format_formula(f.right, 1)}"
        return f"({text})" if prec > 1 else text
    raise TypeError(f"not a formula: {f!r}")


@dataclass(frozen=True)
class Transition:
    name: str
    index: int  # 1-based, file order
    guard: Formula
    updates: dict[str, Expr] = field(default_factory=dict)
    input_vars: tuple[str, ...] = ()

    @property
    def assigned(self) -> tuple[str, ...]:
        return tuple(self.updates) + self.input_vars

    def __hash__(self) -> int:
        return hash((self.name, self.index, self.guard, tuple(self.updates.items()), self.input_vars))


@dataclass(frozen=True)
class Model:
    data_vars: tuple[str, ...]
    control_vars: tuple[str, ...] = ()
    init: dict[str, int] = field(default_factory=dict)
    transitions: tuple[Transition, ...] = ()
    assumes: tuple[Formula, ...] = ()
    property: Formula = FALSE
    property_name: str = "err"

    @builtins.property
    def variables(self) -> tuple[str, ...]:
        return self.control_vars + self.data_vars

    def transition(self, index: int) -> Transition:
        return self.transitions[index - 1]

    def __hash__(self) -> int:
        return hash((self.data_vars, self.control_vars, tuple(sorted(self.init.items())),
                     self.transitions, self.assumes, self.property))
