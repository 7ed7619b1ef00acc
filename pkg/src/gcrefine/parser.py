"""Textual model format: parsing, validation and pretty-printing.

Example::

    vars x y;            # data variables (abstracted)
    control pc;          # control variables (kept concrete)
    init pc = 1;         # overrides of the all-zero start state
    assume y >= 0;       # extra seed predicate
    trans t1: pc = 1 && x >= 0 -> x := x - 1, y := input;
    prop err: x < 0;
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    FALSE, RELOPS, TRUE, And, Atom, BinOp, BoolConst, Const, Expr, Formula,
    Implies, Model, Neg, Not, Or, Transition, Var, format_expr, format_formula,
    formula_vars, expr_vars,
)


class ModelError(Exception):
    """Syntax or well-formedness error in a model source."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class Diagnostic:
    def message(self) -> str:
        return repr(self)


@dataclass(frozen=True)
class UndeclaredVariable(Diagnostic):
    name: str
    where: str = ""

    def message(self) -> str:
        return f"undeclared variable {self.name!r}" + (f" in {self.where}" if self.where else "")


@dataclass(frozen=True)
class DuplicateDeclaration(Diagnostic):
    name: str

    def message(self) -> str:
        return f"variable {self.name!r} declared more than once"


@dataclass(frozen=True)
class DuplicateTransition(Diagnostic):
    name: str

    def message(self) -> str:
        return f"duplicate transition id {self.name!r}"


@dataclass(frozen=True)
class DuplicateAssignment(Diagnostic):
    transition: str
    name: str

    def message(self) -> str:
        return f"{self.name!r} assigned twice in transition {self.transition!r}"


@dataclass(frozen=True)
class BadTransitionIndex(Diagnostic):
    transition: str
    index: int

    def message(self) -> str:
        return f"transition {self.transition!r} has index {self.index}, expected file order"


def validate_model(m: Model) -> list[Diagnostic]:
    """Return one diagnostic per violated model invariant (empty when valid)."""
    out: list[Diagnostic] = []
    seen: set[str] = set()
    for v in m.control_vars + m.data_vars:
        if v in seen:
            out.append(DuplicateDeclaration(v))
        seen.add(v)
    declared = seen

    def check(names, where):
        for n in dict.fromkeys(names):
            if n not in declared:
                out.append(UndeclaredVariable(n, where))

    check(m.init, "init")
    for a in m.assumes:
        check(formula_vars(a), "assume")
    names: set[str] = set()
    for pos, t in enumerate(m.transitions, start=1):
        if t.name in names:
            out.append(DuplicateTransition(t.name))
        names.add(t.name)
        if t.index != pos:
            out.append(BadTransitionIndex(t.name, t.index))
        check(formula_vars(t.guard), t.name)
        lhs: set[str] = set()
        for v in t.assigned:
            if v in lhs:
                out.append(DuplicateAssignment(t.name, v))
            lhs.add(v)
        check(t.assigned, t.name)
        for e in t.updates.values():
            check(expr_vars(e), t.name)
    check(formula_vars(m.property), "prop")
    return out


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|->|=>|==|!=|<=|>=|&&|\|\||[-+*<>=!(),;:&|])
""", re.VERBOSE)

KEYWORDS = {"vars", "control", "init", "assume", "trans", "prop", "input",
            "true", "false", "and", "or", "not"}


@dataclass
class Token:
    kind: str  # int, id, op, kw, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ModelError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            word = m.group()
            if kind == "id" and word in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, word, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# recursive-descent parser

_REL_ALIASES = {"==": "="}


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise ModelError(f"{msg} (found {found!r})", tok.line, tok.col)

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text in texts

    def take(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.take()

    def ident(self) -> str:
        if self.tok.kind != "id":
            self.error("expected identifier")
        return self.take().text

    def integer(self) -> int:
        sign = 1
        if self.at("-"):
            self.take()
            sign = -1
        if self.tok.kind != "int":
            self.error("expected integer")
        return sign * int(self.take().text)

    # expressions ---------------------------------------------------------

    def expr(self) -> Expr:
        e = self.term()
        while self.at("+", "-"):
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.at("*"):
            self.take()
            e = BinOp("*", e, self.factor())
        return e

    def factor(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.take()
            return Const(int(t.text))
        if t.kind == "id":
            self.take()
            return Var(t.text)
        if self.at("-"):
            self.take()
            if self.tok.kind == "int":
                return Const(-int(self.take().text))
            return Neg(self.factor())
        if self.at("("):
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected expression")

    # formulas -------------------------------------------------------------

    def formula(self) -> Formula:
        left = self.disjunction()
        if self.at("=>"):
            self.take()
            return Implies(left, self.formula())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.at("||", "|", "or"):
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.negation()]
        while self.at("&&", "&", "and"):
            self.take()
            parts.append(self.negation())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def negation(self) -> Formula:
        if self.at("!", "not"):
            self.take()
            return Not(self.negation())
        return self.primary()

    def primary(self) -> Formula:
        if self.at("true"):
            self.take()
            return TRUE
        if self.at("false"):
            self.take()
            return FALSE
        if self.at("("):
            # either a parenthesised formula or an expression starting an atom
            save = self.i
            try:
                self.take()
                f = self.formula()
                self.expect(")")
                if not self.at(*RELOPS, "==", "+", "-", "*"):
                    return f
            except ModelError:
                pass
            self.i = save
        left = self.expr()
        if not self.at(*RELOPS, "=="):
            self.error("expected comparison operator")
        op = self.take().text
        return Atom(_REL_ALIASES.get(op, op), left, self.expr())

    # declarations ---------------------------------------------------------

    def model(self) -> Model:
        data: list[str] = []
        control: list[str] = []
        init: dict[str, int] = {}
        assumes: list[Formula] = []
        trans: list[Transition] = []
        prop: Formula | None = None
        prop_name = "err"
        while self.tok.kind != "eof":
            kw = self.tok
            if self.at("vars", "control"):
                self.take()
                target = data if kw.text == "vars" else control
                target.append(self.ident())
                while self.tok.kind == "id" or self.at(","):
                    if self.at(","):
                        self.take()
                    target.append(self.ident())
            elif self.at("init"):
                self.take()
                while True:
                    name_tok = self.tok
                    name = self.ident()
                    self.expect("=")
                    if name in init:
                        self.error(f"duplicate init for {name!r}", name_tok)
                    init[name] = self.integer()
                    if not self.at(","):
                        break
                    self.take()
            elif self.at("assume"):
                self.take()
                assumes.append(self.formula())
            elif self.at("trans"):
                self.take()
                trans.append(self.transition(len(trans) + 1))
            elif self.at("prop"):
                self.take()
                if prop is not None:
                    self.error("only one prop per model", kw)
                prop_name = self.ident()
                self.expect(":")
                prop = self.formula()
            else:
                self.error("expected declaration")
            self.expect(";")
        return Model(
            data_vars=tuple(data),
            control_vars=tuple(control),
            init=init,
            transitions=tuple(trans),
            assumes=tuple(assumes),
            property=FALSE if prop is None else prop,
            property_name=prop_name,
        )

    def transition(self, index: int) -> Transition:
        name = self.ident()
        self.expect(":")
        guard = self.formula()
        self.expect("->")
        updates: dict[str, Expr] = {}
        inputs: list[str] = []
        seen: set[str] = set()
        while True:
            tok = self.tok
            var = self.ident()
            if var in seen:
                self.error(f"{var!r} assigned twice in transition {name!r}", tok)
            seen.add(var)
            self.expect(":=")
            if self.at("input"):
                self.take()
                inputs.append(var)
            else:
                updates[var] = self.expr()
            if not self.at(","):
                break
            self.take()
        return Transition(name, index, guard, updates, tuple(inputs))


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        p.error("trailing input")
    return f


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error("trailing input")
    return e


def parse_model(text: str) -> Model:
    """Parse model source; raises ModelError on syntax or well-formedness errors."""
    m = _Parser(text).model()
    problems = validate_model(m)
    if problems:
        raise ModelError(problems[0].message())
    return m


def pretty_print(m: Model) -> str:
    lines = []
    if m.data_vars:
        lines.append("vars " + " ".join(m.data_vars) + ";")
    if m.control_vars:
        lines.append("control " + " ".join(m.control_vars) + ";")
    if m.init:
        lines.append("init " + ", ".join(f"{k} = {v}" for k, v in m.init.items()) + ";")
    for a in m.assumes:
        lines.append(f"assume {format_formula(a)};")
    for t in m.transitions:
        assigns = [f"{v} := {format_expr(e)}" for v, e in t.updates.items()]
        assigns += [f"{v} := input" for v in t.input_vars]
        lines.append(f"trans {t.name}: {format_formula(t.guard)} -> {', '.join(assigns)};")
    if m.property != FALSE or m.property_name != "err":
        lines.append(f"prop {m.property_name}: {format_formula(m.property)};")
    return "\n".join(lines) + "\n"
