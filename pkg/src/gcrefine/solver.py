"""Validity and satisfiability checks over quantifier-free integer formulas.

Two backends share one interface:

* ``SmtProcess`` talks SMT-LIB 2 to an external solver (z3, cvc5, ...) over
  a pipe, one ``push``/``pop`` frame per query;
* ``LinearIntegerBackend`` runs in-process: linear formulas are split into
  DNF cubes and each cube is handed to the HiGHS MILP solver shipped with
  scipy; nonlinear formulas go to ``BoundedEvaluator``, which decides a
  query only when every variable is pinned to a finite range.

``Solver`` adds the tautology pre-check and the query caches on top.  Any
answer other than a proof of validity is treated as "not valid" by the
callers, so incomplete backends are safe.
"""

from __future__ import annotations

import itertools
import logging
import os
import random
import shutil
import subprocess
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

from .logic import evaluate, literals, normalize, predicate_atom, to_poly
from .syntax import (
    FALSE, TRUE, And, Atom, BinOp, BoolConst, Const, Expr, Formula, Implies,
    Neg, Not, Or, Var, free_vars,
)

log = logging.getLogger(__name__)

SOLVER_ENV = "GCREFINE_SMT"


class BackendUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str = ""  # "counterexample", "unknown", "timeout", "backend-unavailable"

    def __bool__(self) -> bool:
        return self.valid


VALID = Verdict(True)


@dataclass(frozen=True)
class SatResult:
    status: str  # "sat", "unsat", "unknown"
    witness: dict | None = None


@dataclass(frozen=True)
class SolverStats:
    queries: int = 0
    cache_hits: int = 0
    backend_calls: int = 0

    def __sub__(self, other: "SolverStats") -> "SolverStats":
        return SolverStats(self.queries - other.queries,
                           self.cache_hits - other.cache_hits,
                           self.backend_calls - other.backend_calls)


# ---------------------------------------------------------------------------
# SMT-LIB printing


def _smt_name(v: str) -> str:
    return "v_" + v


def smt_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value) if e.value >= 0 else f"(- {-e.value})"
    if isinstance(e, Var):
        return _smt_name(e.name)
    if isinstance(e, Neg):
        return f"(- {smt_expr(e.arg)})"
    return f"({e.op} {smt_expr(e.left)} {smt_expr(e.right)})"


def smt_formula(f: Formula) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        l, r = smt_expr(f.left), smt_expr(f.right)
        if f.op == "!=":
            return f"(not (= {l} {r}))"
        return f"({f.op} {l} {r})"
    if isinstance(f, Not):
        return f"(not {smt_formula(f.arg)})"
    if isinstance(f, And):
        return "(and " + " ".join(smt_formula(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(smt_formula(a) for a in f.args) + ")"
    return f"(=> {smt_formula(f.left)} {smt_formula(f.right)})"


def _parse_sexpr(text: str):
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    return stack[0]


def _sexpr_int(x) -> int:
    if isinstance(x, list):
        # (- n)
        return -_sexpr_int(x[1])
    return int(x)


# ---------------------------------------------------------------------------
# backends


class SmtProcess:
    """External SMT solver speaking SMT-LIB 2 on stdin/stdout."""

    name = "external"

    def __init__(self, command: list[str] | str | None = None, timeout: float = 5.0):
        if command is None:
            command = default_smt_command()
            if command is None:
                raise BackendUnavailable("no SMT solver found; set " + SOLVER_ENV)
        if isinstance(command, str):
            command = command.split()
        self.command = list(command)
        self.timeout = timeout
        self.proc: subprocess.Popen | None = None

    def _start(self):
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True,
            )
        except OSError as exc:
            raise BackendUnavailable(str(exc)) from exc
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        if os.path.basename(self.command[0]).startswith("z3"):
            self._send(f"(set-option :timeout {int(self.timeout * 1000)})")
        self._send("(set-logic QF_LIA)")
        self.proc.stdin.flush()

    def _send(self, line: str):
        assert self.proc and self.proc.stdin
        self.proc.stdin.write(line + "\n")

    def _read_reply(self) -> str:
        assert self.proc and self.proc.stdout
        lines = []
        depth = 0
        while True:
            line = self.proc.stdout.readline()
            if not line:
                raise BackendUnavailable("solver process closed its output")
            lines.append(line)
            depth += line.count("(") - line.count(")")
            if depth <= 0 and line.strip():
                return "".join(lines).strip()

    def _query(self, f: Formula, want_model: bool) -> SatResult:
        if not is_linear(f):
            return SatResult("unknown")
        if self.proc is None or self.proc.poll() is not None:
            self._start()
        names = sorted(free_vars(f))
        try:
            decls = "".join(f"(declare-const {_smt_name(v)} Int)" for v in names)
            self._send(f"(push 1){decls}(assert {smt_formula(f)})(check-sat)")
            self.proc.stdin.flush()
            status = self._read_reply()
            witness = None
            if status == "sat" and want_model:
                if names:
                    self._send("(get-value (" + " ".join(map(_smt_name, names)) + "))")
                    self.proc.stdin.flush()
                    pairs = _parse_sexpr(self._read_reply())[0]
                    witness = {p[0][2:]: _sexpr_int(p[1]) for p in pairs}
                else:
                    witness = {}
            self._send("(pop 1)")
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise BackendUnavailable(str(exc)) from exc
        except BackendUnavailable:
            self.close()
            raise
        if status not in ("sat", "unsat"):
            status = "timeout" if status == "timeout" else "unknown"
        return SatResult(status, witness)

    def check(self, f: Formula, want_model: bool = False) -> SatResult:
        return self._query(f, want_model)

    def close(self):
        if self.proc is not None:
            try:
                self.proc.kill()
                self.proc.wait(timeout=1)
            except Exception:  # noqa: BLE001 - best effort shutdown
                pass
            self.proc = None


@lru_cache(maxsize=1 << 16)
def is_linear(f: Formula) -> bool:
    if isinstance(f, Atom):
        return all(len(m) <= 1 for e in (f.left, f.right) for m in to_poly(e))
    if isinstance(f, Not):
        return is_linear(f.arg)
    if isinstance(f, (And, Or)):
        return all(is_linear(a) for a in f.args)
    if isinstance(f, Implies):
        return is_linear(f.left) and is_linear(f.right)
    return True


def default_smt_command() -> list[str] | None:
    env = os.environ.get(SOLVER_ENV)
    if env:
        return env.split()
    for exe, args in (("z3", ["-in", "-smt2"]), ("cvc5", ["--lang=smt2", "--incremental"]),
                      ("yices-smt2", ["--incremental"])):
        path = shutil.which(exe)
        if path:
            return [path, *args]
    return None


def _bounds(lits: Iterable[Formula]) -> dict[str, list]:
    """Per-variable [lo, hi] from top-level single-variable literals."""
    box: dict[str, list] = {}
    for lit in lits:
        atom, positive = predicate_atom(lit)
        if not isinstance(atom, Atom):
            continue
        p = to_poly(atom.left)
        if len(p) != 1:
            continue
        (mono, c), = p.items()
        if len(mono) != 1:
            continue
        v = mono[0]
        k = atom.right.value
        lo_hi = box.setdefault(v, [None, None])
        if atom.op == "=":
            if not positive:
                continue
            lo = hi = k // c if k % c == 0 else None
            if lo is None:
                lo_hi[:] = [1, 0]  # empty
                continue
        elif positive:
            # c*v <= k, c > 0
            lo, hi = None, k // c
        else:
            # c*v >= k + 1
            lo, hi = -((-(k + 1)) // c), None
        if lo is not None:
            lo_hi[0] = lo if lo_hi[0] is None else max(lo_hi[0], lo)
        if hi is not None:
            lo_hi[1] = hi if lo_hi[1] is None else min(lo_hi[1], hi)
    return box


_MAX_CUBES = 4096


def _dnf(f: Formula, positive: bool = True) -> list[list[tuple[dict, str, int]]] | None:
    """DNF of a linear formula as cubes of rows ``(coeffs, op, k)`` with op in {<=, =}.

    Returns None when the expansion exceeds ``_MAX_CUBES``.
    """
    if isinstance(f, BoolConst):
        return [[]] if f.value == positive else []
    if isinstance(f, Not):
        return _dnf(f.arg, not positive)
    if isinstance(f, Implies):
        return _dnf(Or((Not(f.left), f.right)), positive)
    if isinstance(f, Atom):
        n = normalize(f)
        if not isinstance(n, Atom):
            return _dnf(n, positive)
        coeffs = {m[0]: c for m, c in to_poly(n.left).items()}
        k = n.right.value
        neg = {v: -c for v, c in coeffs.items()}
        if n.op == "<=":
            return [[(coeffs, "<=", k)]] if positive else [[(neg, "<=", -k - 1)]]
        if positive:
            return [[(coeffs, "=", k)]]
        return [[(coeffs, "<=", k - 1)], [(neg, "<=", -k - 1)]]
    conjunctive = isinstance(f, And) == positive
    parts = []
    for a in f.args:
        d = _dnf(a, positive)
        if d is None:
            return None
        parts.append(d)
    if not conjunctive:
        out = [c for d in parts for c in d]
        return out if len(out) <= _MAX_CUBES else None
    out = [[]]
    for d in parts:
        out = [c1 + c2 for c1 in out for c2 in d]
        if len(out) > _MAX_CUBES:
            return None
    return out


class LinearIntegerBackend:
    """Exact integer feasibility for linear formulas via scipy's MILP solver.

    Witnesses are re-checked with exact integer arithmetic before a ``sat``
    answer is given; a witness that fails the re-check yields ``unknown``.
    HiGHS works in floating point, so an ``unsat`` answer is only trusted
    while every coefficient and constant stays below ``max_magnitude``;
    larger formulas go to the exact fallback.
    """

    name = "internal"
    max_magnitude = 1 << 20

    def __init__(self, fallback=None):
        self.fallback = fallback if fallback is not None else BoundedEvaluator()

    def _cube(self, rows, names: list[str]):
        import numpy as np
        from scipy.optimize import Bounds, LinearConstraint, milp

        col = {v: i for i, v in enumerate(names)}
        a = np.zeros((len(rows), len(names)))
        lb = np.empty(len(rows))
        ub = np.empty(len(rows))
        for r, (coeffs, op, k) in enumerate(rows):
            for v, c in coeffs.items():
                a[r, col[v]] = c
            ub[r] = k
            lb[r] = k if op == "=" else -np.inf
        res = milp(np.zeros(len(names)), constraints=LinearConstraint(a, lb, ub),
                   integrality=np.ones(len(names)), bounds=Bounds(-np.inf, np.inf))
        if res.status == 2:
            return "unsat", None
        if res.status != 0 or res.x is None:
            return "unknown", None
        return "sat", {v: int(round(x)) for v, x in zip(names, res.x)}

    def check(self, f: Formula, want_model: bool = False) -> SatResult:
        f = normalize(f)
        if f == FALSE:
            return SatResult("unsat")
        if f == TRUE:
            return SatResult("sat", {})
        if not is_linear(f):
            return self.fallback.check(f, want_model)
        cubes = _dnf(f)
        if cubes is None:
            return SatResult("unknown")
        if any(abs(k) > self.max_magnitude or any(abs(c) > self.max_magnitude for c in co.values())
               for rows in cubes for co, _, k in rows):
            return self.fallback.check(f, want_model)
        names = sorted(free_vars(f))
        undecided = False
        for rows in cubes:
            status, w = self._cube(rows, names)
            if status == "sat":
                if evaluate(f, w):
                    return SatResult("sat", w)
                undecided = True
            elif status == "unknown":
                undecided = True
        return SatResult("unknown" if undecided else "unsat")

    def close(self):
        self.fallback.close()


class BoundedEvaluator:
    """Decides a formula by enumeration when its top-level conjuncts bound every variable.

    For satisfiability with witnesses, unbounded variables range over
    ``witness_domain``; a witness found there is a genuine model, but a
    failure to find one is only ``unknown``.
    """

    name = "bounded"

    def __init__(self, max_points: int = 200_000, witness_domain: tuple[int, int] = (-32, 32)):
        self.max_points = max_points
        self.witness_domain = witness_domain

    def check(self, f: Formula, want_model: bool = False) -> SatResult:
        f = normalize(f)
        if f == FALSE:
            return SatResult("unsat")
        names = sorted(free_vars(f))
        if not names:
            return SatResult("sat", {}) if f == TRUE else SatResult("unsat")
        try:
            box = _bounds(literals(f))
        except ValueError:
            box = {}
        ranges = []
        exact = True
        for v in names:
            lo, hi = box.get(v, (None, None))
            if lo is not None and hi is not None and lo > hi:
                return SatResult("unsat")
            if lo is None or hi is None:
                exact = False
                wlo, whi = self.witness_domain
                if lo is None and hi is None:
                    lo, hi = wlo, whi
                elif lo is None:
                    lo = hi - (whi - wlo)
                else:
                    hi = lo + (whi - wlo)
            ranges.append(range(lo, hi + 1))
        size = 1
        for r in ranges:
            size *= len(r)
        if size > self.max_points:
            return SatResult("unknown")
        for values in itertools.product(*ranges):
            s = dict(zip(names, values))
            if evaluate(f, s):
                return SatResult("sat", s)
        return SatResult("unsat" if exact else "unknown")

    def close(self):
        pass


class FaultInjectingBackend:
    """Wraps a backend and randomly turns ``unsat`` answers into ``unknown``.

    Seen from the validity front end this downgrades some Valid verdicts to
    NotProven, which must never change a final verdict.
    """

    def __init__(self, inner, rate: float = 0.2, seed: int = 0):
        self.inner = inner
        self.rate = rate
        self.rng = random.Random(seed)
        self.name = f"faulty({getattr(inner, 'name', '?')})"
        self.injected = 0

    def check(self, f: Formula, want_model: bool = False) -> SatResult:
        res = self.inner.check(f, want_model)
        if res.status == "unsat" and self.rng.random() < self.rate:
            self.injected += 1
            return SatResult("unknown")
        return res

    def close(self):
        self.inner.close()


# ---------------------------------------------------------------------------
# front end with caches


class Solver:
    """Validity checker with tautology pre-check and query caches."""

    def __init__(self, backend=None, use_cache: bool = True):
        self.backend = backend if backend is not None else LinearIntegerBackend()
        self.use_cache = use_cache
        self._valid_cache: dict[tuple[Formula, Formula], Verdict] = {}
        self._taut_cache: dict[Formula, bool] = {}
        self._queries = 0
        self._hits = 0
        self._backend_calls = 0
        self.unavailable_events = 0

    def _unsat(self, f: Formula) -> Verdict:
        self._backend_calls += 1
        try:
            res = self.backend.check(f)
        except BackendUnavailable as exc:
            self.unavailable_events += 1
            log.warning("solver backend unavailable: %s", exc)
            return Verdict(False, "backend-unavailable")
        if res.status == "unsat":
            return VALID
        if res.status == "sat":
            return Verdict(False, "counterexample")
        return Verdict(False, res.status)

    def _tautology(self, b: Formula) -> tuple[bool, bool]:
        """(is ``b`` valid, was the answer taken from the cache)."""
        if b == TRUE:
            return True, False
        if b == FALSE:
            return False, False
        if self.use_cache and b in self._taut_cache:
            return self._taut_cache[b], True
        ok = bool(self._unsat(normalize(Not(b))))
        if self.use_cache:
            self._taut_cache[b] = ok
        return ok, False

    def check_valid(self, antecedent: Formula, consequent: Formula) -> Verdict:
        """Is ``antecedent => consequent`` valid?

        A query counts as one cache hit when a cache supplies its answer
        without any backend call.
        """
        self._queries += 1
        a, b = normalize(antecedent), normalize(consequent)
        taut, cached = self._tautology(b)
        if taut:
            self._hits += cached
            return VALID
        if a == FALSE:
            return VALID
        key = (a, b)
        if self.use_cache and key in self._valid_cache:
            self._hits += 1
            return self._valid_cache[key]
        verdict = self._unsat(normalize(And((a, Not(b)))))
        if self.use_cache:
            self._valid_cache[key] = verdict
        return verdict

    def check_sat(self, phi: Formula) -> SatResult:
        self._queries += 1
        self._backend_calls += 1
        try:
            return self.backend.check(normalize(phi), want_model=True)
        except BackendUnavailable as exc:
            self.unavailable_events += 1
            log.warning("solver backend unavailable: %s", exc)
            return SatResult("unknown")

    def stats(self) -> SolverStats:
        return SolverStats(self._queries, self._hits, self._backend_calls)

    def close(self):
        self.backend.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_solver(spec: str | None = "internal", timeout: float = 5.0, use_cache: bool = True) -> Solver:
    """Build a solver from a ``--solver`` value: ``internal``, ``external`` or ``external:<cmd>``."""
    spec = spec or "internal"
    if spec == "internal":
        return Solver(LinearIntegerBackend(), use_cache=use_cache)
    if spec == "external":
        return Solver(SmtProcess(None, timeout=timeout), use_cache=use_cache)
    if spec.startswith("external:"):
        cmd = spec.split(":", 1)[1]
        parts = cmd.split()
        if len(parts) == 1 and os.path.basename(parts[0]).startswith("z3"):
            parts += ["-in", "-smt2"]
        return Solver(SmtProcess(parts, timeout=timeout), use_cache=use_cache)
    raise ValueError(f"unknown solver {spec!r}")
