"""Concrete operational semantics of guarded-command models."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .logic import evaluate, evaluate_expr, substitute
from .syntax import Const, Formula, Model, Not, Transition, conj, free_vars


class GuardFalse(ValueError):
    pass


class MissingInput(ValueError):
    pass


class State(Mapping[str, int]):
    """Immutable, hashable total valuation of a model's variables."""

    __slots__ = ("_vals", "_hash")

    def __init__(self, values: Mapping[str, int] | Sequence[tuple[str, int]] = ()):
        self._vals = dict(values)
        self._hash = None

    def __getitem__(self, key: str) -> int:
        return self._vals[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._vals)

    def __len__(self) -> int:
        return len(self._vals)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._vals.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, State):
            return self._vals == other._vals
        if isinstance(other, Mapping):
            return self._vals == dict(other)
        return NotImplemented

    def updated(self, changes: Mapping[str, int]) -> "State":
        vals = dict(self._vals)
        vals.update(changes)
        return State(vals)

    def __repr__(self) -> str:
        return "State(" + ", ".join(f"{k}={v}" for k, v in self._vals.items()) + ")"

    def short(self, names: Sequence[str] | None = None) -> str:
        names = names or list(self._vals)
        return "(" + ", ".join(f"{k}={self._vals[k]}" for k in names) + ")"


@dataclass(frozen=True)
class Step:
    index: int
    inputs: Mapping[str, int]
    state: State


@dataclass(frozen=True)
class Trace:
    initial: State
    steps: tuple[Step, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> State:
        return self.steps[-1].state if self.steps else self.initial


class ReplayError(Exception):
    def __init__(self, step: int, reason: str):
        self.step = step
        super().__init__(f"step {step}: {reason}")


def initial_state(m: Model) -> State:
    return State({v: m.init.get(v, 0) for v in m.variables})


def enabled(s: Mapping[str, int], m: Model) -> list[int]:
    return [t.index for t in m.transitions if evaluate(t.guard, s)]


def apply(s: State, t: Transition, inputs: Mapping[str, int] | None = None) -> State:
    """Fire ``t`` in ``s``: right-hand sides are evaluated in the pre-state."""
    if not evaluate(t.guard, s):
        raise GuardFalse(t.name)
    inputs = inputs or {}
    missing = [v for v in t.input_vars if v not in inputs]
    if missing:
        raise MissingInput(", ".join(missing))
    changes = {v: evaluate_expr(e, s) for v, e in t.updates.items()}
    for v in t.input_vars:
        changes[v] = inputs[v]
    return s.updated(changes)


@dataclass(frozen=True)
class InputConfig:
    """How ``x := input`` is driven.

    ``brute`` enumerates ``domain``; ``sat`` asks the solver for one witness
    per satisfiable combination of the input-dependent predicates.
    """

    mode: str = "brute"
    domain: tuple[int, int] = (-8, 8)


def _input_witnesses(s: State, t: Transition, predicates, solver) -> list[dict]:
    # predicates over the post-state, with only the input variables left free
    post_values = {v: Const(evaluate_expr(e, s)) for v, e in t.updates.items()}
    sigma = {v: post_values.get(v, Const(s[v])) for v in s if v not in t.input_vars}
    relevant = []
    for p in predicates:
        post = substitute(p, sigma)
        if free_vars(post) & set(t.input_vars):
            relevant.append(post)
    found: list[dict] = []
    for signs in itertools.product((True, False), repeat=len(relevant)):
        f = conj(*(p if pos else Not(p) for p, pos in zip(relevant, signs)))
        res = solver.check_sat(f)
        if res.status == "sat":
            w = {v: res.witness.get(v, 0) for v in t.input_vars}
            if w not in found:
                found.append(w)
    if not found:
        found.append({v: 0 for v in t.input_vars})
    return found


def transition_successors(s: State, t: Transition, inputs: InputConfig = InputConfig(),
                          predicates: Sequence[Formula] = (), solver=None) -> list[tuple[dict, State]]:
    """Successors of ``s`` under one enabled transition, ordered by input values."""
    if not t.input_vars:
        return [({}, apply(s, t))]
    if inputs.mode == "sat":
        if solver is None:
            raise ValueError("satisfiability input mode needs a solver")
        bindings = _input_witnesses(s, t, predicates, solver)
        bindings.sort(key=lambda b: tuple(b[v] for v in t.input_vars))
    else:
        lo, hi = inputs.domain
        bindings = [dict(zip(t.input_vars, vals))
                    for vals in itertools.product(range(lo, hi + 1), repeat=len(t.input_vars))]
    return [(b, apply(s, t, b)) for b in bindings]


def successors(s: State, m: Model, inputs: InputConfig = InputConfig(),
               predicates: Sequence[Formula] = (), solver=None) -> list[tuple[int, dict, State]]:
    """Ordered successors (transition index, input binding, state) of ``s``."""
    out = []
    for t in m.transitions:
        if evaluate(t.guard, s):
            out.extend((t.index, b, s2) for b, s2 in
                       transition_successors(s, t, inputs, predicates, solver))
    return out


def replay(m: Model, trace: Trace) -> State:
    """Re-execute a trace, checking guards and recorded states at every step."""
    s = initial_state(m)
    if trace.initial != s:
        raise ReplayError(0, "initial state differs from the model's")
    for n, step in enumerate(trace.steps, start=1):
        if not 1 <= step.index <= len(m.transitions):
            raise ReplayError(n, f"no transition with index {step.index}")
        t = m.transition(step.index)
        if not evaluate(t.guard, s):
            raise ReplayError(n, f"guard of {t.name} is false")
        try:
            s = apply(s, t, step.inputs)
        except MissingInput as exc:
            raise ReplayError(n, f"missing input {exc}") from None
        if s != step.state:
            raise ReplayError(n, "state mismatch")
    return s
