"""Concrete state exploration with matching on abstract states.

Successor states are computed concretely, but a successor is only explored
when its abstract counterpart has not been stored before.  For every
explored transition the search asks the solver whether the abstraction
lost precision on it; atoms from failed checks are collected as the next
predicate set.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Union

from .abstraction import (
    AbstractState, LabelSet, PredicateSet, abstract, abstract_formula,
    control_key, label,
)
from .logic import atoms, evaluate, literals, normalize, predicate_atom, substitute
from .semantics import InputConfig, State, Step, Trace, initial_state, transition_successors
from .solver import Solver
from .syntax import BoolConst, Const, Formula, Model, Not, Transition, Var, conj, free_vars


class ResourceLimit(RuntimeError):
    """The search gave up; distinct from proving the error unreachable."""

    def __init__(self, message: str, outcome: "SearchOutcome | None" = None):
        super().__init__(message)
        self.outcome = outcome


@dataclass(frozen=True)
class SearchConfig:
    order: str = "bfs"          # bfs | dfs
    mode: str = "prover"        # prover | lightweight
    inputs: InputConfig = InputConfig()
    max_states: int | None = 200_000
    time_limit: float | None = None
    early_exit: bool = False   # stop at the first property hit instead of finishing the search


ControlKey = tuple


class LocalPredicates:
    """Predicate sets attached to control locations (transition-dependent predicates)."""

    def __init__(self, default: PredicateSet, sets: Mapping[ControlKey, PredicateSet] | None = None):
        self.default = default
        self.sets: dict[ControlKey, PredicateSet] = dict(sets or {})

    def at(self, key: ControlKey) -> PredicateSet:
        return self.sets.get(key, self.default)

    def with_atoms(self, additions: Mapping[ControlKey, list[Formula]], m: Model) -> "LocalPredicates":
        sets = dict(self.sets)
        for key, new in additions.items():
            if new:
                sets[key] = PredicateSet.for_model(m, self.at(key).atoms + tuple(new))
        return LocalPredicates(self.default, sets)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LocalPredicates):
            return NotImplemented
        keys = set(self.sets) | set(other.sets)
        return self.default == other.default and all(self.at(k) == other.at(k) for k in keys)

    def total_atoms(self) -> int:
        return len(set(self.default.atoms).union(*(p.atoms for p in self.sets.values())))

    def __repr__(self) -> str:
        return f"LocalPredicates(default={self.default!r}, {len(self.sets)} locations)"


Precision = Union[PredicateSet, LocalPredicates]


@dataclass
class ExploredStructure:
    states: list[AbstractState]
    transitions: list[tuple[AbstractState, int, AbstractState]]
    initial: AbstractState
    labeling: dict[AbstractState, LabelSet]

    def reachable_labelings(self) -> set[LabelSet]:
        return set(self.labeling.values())


@dataclass(frozen=True)
class ExactnessResult:
    exact: bool
    new_atoms: tuple[Formula, ...] = ()


@dataclass
class SearchStats:
    concrete_states: int = 0      # states generated: initial + every computed successor
    visited_states: int = 0       # states put into the wait queue
    abstract_states: int = 0
    exactness_checks: int = 0
    failed_checks: int = 0
    elapsed: float = 0.0


@dataclass
class SearchOutcome:
    structure: ExploredStructure
    phi_new: Precision
    counterexample: Trace | None
    stats: SearchStats
    new_atoms: list[Formula]
    # (source control key, transition index) -> first concrete source state with a failed check
    failures: dict[tuple[ControlKey, int], State] = field(default_factory=dict)
    visited: list[State] = field(default_factory=list)
    unresolved: int = 0  # inexact checks that produced no new atoms (input transitions)


def ap_atoms(m: Model) -> list[Formula]:
    return atoms(m.property)


def _input_symbol(v: str) -> str:
    return v + "'in"


class _Checker:
    """Exactness checks of one search, sharing the cube cache."""

    def __init__(self, m: Model, solver: Solver | None, lightweight: bool):
        self.m = m
        self.solver = solver
        self.lightweight = lightweight
        self.control = set(m.control_vars)
        self.checks = 0
        self.failed = 0

    def _keep(self, atom: Formula) -> bool:
        return not isinstance(atom, BoolConst) and not free_vars(atom) <= self.control

    def _valid(self, antecedent: Formula, consequent: Formula) -> bool:
        self.checks += 1
        ok = bool(self.solver.check_valid(antecedent, consequent))
        if not ok:
            self.failed += 1
        return ok

    def guard(self, cube: Formula, t: Transition, enabled: bool, sigma=None) -> ExactnessResult:
        """``cube`` is the data part of an abstract state whose control values are ``sigma``."""
        target = t.guard if enabled else Not(t.guard)
        if self.lightweight:
            return ExactnessResult(True, tuple(a for a in atoms(t.guard) if self._keep(a)))
        if self._valid(cube, substitute(target, sigma or {})):
            return ExactnessResult(True)
        return ExactnessResult(False, tuple(a for a in atoms(t.guard) if self._keep(a)))

    def update(self, cube: Formula, t: Transition, post_cube: Formula,
               sigma=None) -> tuple[ExactnessResult, bool]:
        """Check ``cube => post_cube[e/x]`` literal by literal.

        Returns the result and whether an unresolvable (input-dependent)
        literal was met.
        """
        sub = dict(t.updates)
        fresh = {_input_symbol(v) for v in t.input_vars}
        for v in t.input_vars:
            sub[v] = Var(_input_symbol(v))
        post = substitute(post_cube, sub)
        if sigma:
            post = substitute(post, sigma)
        new: list[Formula] = []
        unresolved = False
        for lit in literals(post):
            names = free_vars(lit)
            if names & fresh:
                # the concrete input realises every input-only literal at once
                if not names <= fresh:
                    unresolved = True
                continue
            atom, _ = predicate_atom(lit)
            if not self._keep(atom):
                continue
            if self.lightweight or not self._valid(cube, lit):
                new.append(atom)
        if self.lightweight:
            return ExactnessResult(True, tuple(new)), False
        return ExactnessResult(not new and not unresolved, tuple(new)), unresolved


def split_cube(a: AbstractState, phi: PredicateSet) -> tuple[Formula, dict]:
    """Data part of the cube of ``a`` with control values substituted, plus that substitution.

    ``cube(a) => f`` is valid iff ``data => f[sigma]`` is, since the cube
    fixes every control variable.
    """
    sigma = {v: Const(val) for v, val in a.control}
    data = conj(*(p if b else Not(p) for p, b in zip(phi.atoms, a.bits)))
    return normalize(substitute(data, sigma)), sigma


def exactness_check_enabled(s: State, t: Transition, s_next: State, phi: PredicateSet,
                            m: Model, solver: Solver) -> ExactnessResult:
    """Guard and update exactness of the concrete step ``s -t-> s_next``."""
    chk = _Checker(m, solver, lightweight=False)
    cube, sigma = split_cube(abstract(s, phi, m), phi)
    g = chk.guard(cube, t, True, sigma)
    u, _ = chk.update(cube, t, abstract_formula(abstract(s_next, phi, m), phi), sigma)
    new = tuple(dict.fromkeys(a for a in g.new_atoms + u.new_atoms if a not in phi))
    return ExactnessResult(g.exact and u.exact, new)


def exactness_check_disabled(s: State, t: Transition, phi: PredicateSet,
                             m: Model, solver: Solver) -> ExactnessResult:
    """Is ``t`` disabled in every state sharing the abstract state of ``s``?"""
    chk = _Checker(m, solver, lightweight=False)
    cube, sigma = split_cube(abstract(s, phi, m), phi)
    res = chk.guard(cube, t, False, sigma)
    return ExactnessResult(res.exact, tuple(a for a in res.new_atoms if a not in phi))


def reconstruct_counterexample(parents: Mapping[State, tuple | None], hit: State) -> Trace:
    steps = []
    s = hit
    while parents[s] is not None:
        pred, index, inputs = parents[s]
        steps.append(Step(index, dict(inputs), s))
        s = pred
    return Trace(s, tuple(reversed(steps)))


def _check_ap(m: Model, phi: Precision):
    sets = [phi] if isinstance(phi, PredicateSet) else [phi.default, *phi.sets.values()]
    control = set(m.control_vars)
    for a in ap_atoms(m):
        if free_vars(a) <= control:
            continue
        for p in sets:
            if a not in p:
                raise ValueError("property atoms must be abstraction predicates (AP ⊆ Φ)")


def alpha_search(m: Model, phi: Precision, cfg: SearchConfig = SearchConfig(),
                 solver: Solver | None = None) -> SearchOutcome:
    """One exploration with abstract matching under a fixed predicate set."""
    if cfg.order not in ("bfs", "dfs"):
        raise ValueError(f"unknown search order {cfg.order!r}")
    if cfg.mode not in ("prover", "lightweight"):
        raise ValueError(f"unknown refinement mode {cfg.mode!r}")
    lightweight = cfg.mode == "lightweight"
    if solver is None and (not lightweight or cfg.inputs.mode == "sat"):
        solver = Solver()
    _check_ap(m, phi)
    local = isinstance(phi, LocalPredicates)
    checker = _Checker(m, solver, lightweight)
    ap = ap_atoms(m)
    started = time.monotonic()

    def preds(s) -> PredicateSet:
        return phi.at(control_key(s, m)) if local else phi

    cubes: dict[tuple[AbstractState, int], Formula] = {}
    split: dict[tuple[AbstractState, int], tuple[Formula, dict]] = {}

    def cube_of(a: AbstractState, p: PredicateSet) -> Formula:
        key = (a, id(p))
        f = cubes.get(key)
        if f is None:
            f = cubes[key] = abstract_formula(a, p)
        return f

    def data_cube(a: AbstractState, p: PredicateSet) -> tuple[Formula, dict]:
        key = (a, id(p))
        r = split.get(key)
        if r is None:
            r = split[key] = split_cube(a, p)
        return r

    s0 = initial_state(m)
    a0 = abstract(s0, preds(s0), m)
    stored: dict[AbstractState, None] = {a0: None}
    trans: dict[tuple, None] = {}
    labeling: dict[AbstractState, LabelSet] = {}
    parents: dict[State, tuple | None] = {s0: None}
    wait = deque([s0])
    visited = [s0]
    stats = SearchStats(concrete_states=1, visited_states=1)
    new_global: dict[Formula, None] = {}
    new_local: dict[ControlKey, dict[Formula, None]] = {}
    failures: dict[tuple[ControlKey, int], State] = {}
    unresolved = 0
    hit: State | None = None

    def outcome(counterexample):
        stats.abstract_states = len(stored)
        stats.exactness_checks = checker.checks
        stats.failed_checks = checker.failed
        stats.elapsed = time.monotonic() - started
        structure = ExploredStructure(list(stored), list(trans), a0, labeling)
        if local:
            phi_new = phi.with_atoms({k: list(v) for k, v in new_local.items()}, m)
            new = list(dict.fromkeys(a for v in new_local.values() for a in v))
        else:
            new = [a for a in new_global if a not in phi]
            phi_new = PredicateSet.for_model(m, phi.atoms + tuple(new))
        return SearchOutcome(structure, phi_new, counterexample, stats, new,
                             failures, visited, unresolved)

    def record(s: State, t: Transition, res: ExactnessResult):
        if res.exact and not res.new_atoms:
            return
        key = control_key(s, m)
        failures.setdefault((key, t.index), s)
        target = new_local.setdefault(key, {}) if local else new_global
        for a in res.new_atoms:
            target[a] = None

    while wait:
        s = wait.popleft() if cfg.order == "bfs" else wait.pop()
        p = preds(s)
        a = abstract(s, p, m)
        labeling[a] = label(s, ap)
        if hit is None and evaluate(m.property, s):
            hit = s
            if cfg.early_exit:
                break
        cube, sigma = data_cube(a, p)
        for t in m.transitions:
            if evaluate(t.guard, s):
                record(s, t, checker.guard(cube, t, True, sigma))
                for inputs, s2 in transition_successors(s, t, cfg.inputs, p.atoms, solver):
                    stats.concrete_states += 1
                    p2 = preds(s2)
                    a2 = abstract(s2, p2, m)
                    res, open_input = checker.update(cube, t, cube_of(a2, p2), sigma)
                    if open_input:
                        unresolved += 1
                    record(s, t, res)
                    if a2 not in stored:
                        stored[a2] = None
                        wait.append(s2)
                        visited.append(s2)
                        parents[s2] = (s, t.index, inputs)
                        stats.visited_states += 1
                    trans[(a, t.index, a2)] = None
            else:
                record(s, t, checker.guard(cube, t, False, sigma))
        if cfg.max_states is not None and len(stored) > cfg.max_states:
            raise ResourceLimit(f"more than {cfg.max_states} abstract states", outcome(None))
        if cfg.time_limit is not None and time.monotonic() - started > cfg.time_limit:
            raise ResourceLimit(f"time limit {cfg.time_limit}s exceeded", outcome(None))

    trace = reconstruct_counterexample(parents, hit) if hit is not None else None
    return outcome(trace)
