"""Iterative refinement around the abstract-matching search."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

from .abstraction import LabelSet, PredicateSet
from .logic import atoms
from .search import (
    ControlKey, ExactnessResult, ExploredStructure, LocalPredicates, Precision,
    ResourceLimit, SearchConfig, SearchOutcome, alpha_search, ap_atoms,
)
from .semantics import State, Trace
from .solver import Solver, SolverStats
from .syntax import Atom, Const, Formula, Model, Var, free_vars


@dataclass(frozen=True)
class RefineConfig:
    init_preds: str = "guards"       # guards | ap-only
    use_assumes: bool = True
    heuristic: int | None = None     # stuck-transition threshold, None = off
    transition_dependent: bool = False
    max_iterations: int = 50
    search: SearchConfig = SearchConfig()


@dataclass(frozen=True)
class ErrorFound:
    trace: Trace
    name = "error"


@dataclass(frozen=True)
class Unreachable:
    structure: ExploredStructure
    name = "unreachable"


@dataclass(frozen=True)
class Undecided:
    reason: str   # iteration-limit | resource-limit | inexact-input
    name = "undecided"


Verdict = Union[ErrorFound, Unreachable, Undecided]


@dataclass
class IterationRecord:
    iteration: int
    phi_size: int
    concrete_states: int
    visited_states: int
    abstract_states: int
    new_predicates: list[Formula]
    heuristic_predicates: list[Formula]
    exactness_checks: int
    failed_checks: int
    solver: SolverStats
    labelings: set[LabelSet]
    elapsed: float
    outcome: SearchOutcome | None = field(default=None, repr=False)


@dataclass
class VerificationReport:
    verdict: Verdict
    iterations: list[IterationRecord]
    phi: Precision
    elapsed: float

    @property
    def stabilized_at(self) -> int | None:
        """Iteration whose search produced no new predicates, if any."""
        if isinstance(self.verdict, Unreachable):
            return len(self.iterations)
        return None


class StuckTransitionHistory:
    """Consecutive exactness failures per (source control values, transition)."""

    def __init__(self):
        self.counts: dict[tuple[ControlKey, int], int] = {}

    def update(self, failures) -> None:
        self.counts = {k: self.counts.get(k, 0) + 1 for k in failures}

    def reset(self, key) -> None:
        self.counts.pop(key, None)


def state_predicates(s: State, m: Model) -> list[Formula]:
    return [Atom("=", Var(v), Const(s[v])) for v in m.data_vars]


def stuck_heuristic(history: StuckTransitionHistory, failures: dict, m: Model,
                    threshold: int) -> dict[ControlKey, list[Formula]]:
    """Equalities describing the source state of every transition stuck ``threshold`` times.

    ``failures`` maps (control key, transition index) to the concrete source
    state recorded during the latest search.  Keys are reset once they fire.
    """
    if threshold < 1:
        raise ValueError("heuristic threshold must be at least 1")
    out: dict[ControlKey, list[Formula]] = {}
    for key, count in list(history.counts.items()):
        if count >= threshold:
            out.setdefault(key[0], []).extend(state_predicates(failures[key], m))
            history.reset(key)
    return out


def transition_local_refine(phi_by_pc: LocalPredicates, failure: ExactnessResult,
                            at: ControlKey, m: Model) -> LocalPredicates:
    return phi_by_pc.with_atoms({at: list(failure.new_atoms)}, m)


def initial_predicates(m: Model, cfg: RefineConfig) -> PredicateSet:
    seed = list(ap_atoms(m))
    if cfg.init_preds == "guards":
        for t in m.transitions:
            seed += atoms(t.guard)
    elif cfg.init_preds != "ap-only":
        raise ValueError(f"unknown init-preds policy {cfg.init_preds!r}")
    if cfg.use_assumes:
        for a in m.assumes:
            seed += atoms(a)
    return PredicateSet.for_model(m, seed)


def _precision_size(phi: Precision) -> int:
    return len(phi) if isinstance(phi, PredicateSet) else phi.total_atoms()


def refinement_search(m: Model, cfg: RefineConfig = RefineConfig(),
                      solver: Solver | None = None) -> VerificationReport:
    own = solver is None and cfg.search.mode == "prover"
    if own:
        solver = Solver()
    started = time.monotonic()
    phi: Precision = initial_predicates(m, cfg)
    if cfg.transition_dependent:
        phi = LocalPredicates(phi)
    history = StuckTransitionHistory()
    records: list[IterationRecord] = []
    try:
        for j in range(1, cfg.max_iterations + 1):
            before = solver.stats() if solver is not None else SolverStats()
            t0 = time.monotonic()
            try:
                out = alpha_search(m, phi, cfg.search, solver)
            except ResourceLimit as exc:
                if exc.outcome is not None:
                    records.append(_record(j, phi, exc.outcome, [], solver, before, t0))
                return VerificationReport(Undecided("resource-limit"), records, phi,
                                          time.monotonic() - started)
            phi_next = out.phi_new
            extra: list[Formula] = []
            if cfg.heuristic is not None and out.counterexample is None:
                history.update(out.failures)
                fired = stuck_heuristic(history, out.failures, m, cfg.heuristic)
                if fired:
                    extra = list(dict.fromkeys(a for v in fired.values() for a in v))
                    if isinstance(phi_next, LocalPredicates):
                        phi_next = phi_next.with_atoms(fired, m)
                    else:
                        phi_next = PredicateSet.for_model(m, phi_next.atoms + tuple(extra))
            records.append(_record(j, phi, out, extra, solver, before, t0))
            if out.counterexample is not None:
                return VerificationReport(ErrorFound(out.counterexample), records, phi,
                                          time.monotonic() - started)
            if phi_next == phi:
                verdict = Unreachable(out.structure) if not out.unresolved \
                    else Undecided("inexact-input")
                return VerificationReport(verdict, records, phi, time.monotonic() - started)
            phi = phi_next
        return VerificationReport(Undecided("iteration-limit"), records, phi,
                                  time.monotonic() - started)
    finally:
        if own:
            solver.close()


def _record(j, phi, out: SearchOutcome, extra, solver, before, t0) -> IterationRecord:
    after = solver.stats() if solver is not None else SolverStats()
    return IterationRecord(
        iteration=j,
        phi_size=_precision_size(phi),
        concrete_states=out.stats.concrete_states,
        visited_states=out.stats.visited_states,
        abstract_states=out.stats.abstract_states,
        new_predicates=list(out.new_atoms),
        heuristic_predicates=list(extra),
        exactness_checks=out.stats.exactness_checks,
        failed_checks=out.stats.failed_checks,
        solver=after - before,
        labelings=out.structure.reachable_labelings(),
        elapsed=time.monotonic() - t0,
        outcome=out,
    )
