"""Command-line front end.

Exit codes: 0 error unreachable, 1 error found, 2 undecided (or an oracle
bound was hit), 3 usage or parse error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import importlib.resources
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from . import oracle as orc
from .abstraction import AbstractState, PredicateSet, format_label
from .parser import ModelError, parse_formula
from .parser import parse_model
from .refine import ErrorFound, RefineConfig, Undecided, Unreachable, VerificationReport, refinement_search
from .search import ExploredStructure, LocalPredicates, SearchConfig, alpha_search, ap_atoms
from .semantics import InputConfig, Trace
from .solver import BackendUnavailable, make_solver
from .syntax import Model, format_formula

SCHEMA_VERSION = 1
EXIT_UNREACHABLE, EXIT_ERROR, EXIT_UNDECIDED, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("gcrefine")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# model loading


def corpus_names() -> list[str]:
    root = importlib.resources.files("gcrefine") / "corpus"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".gcl"))


def read_model_source(path: str) -> str:
    """Read a model from disk, falling back to the bundled corpus by file stem."""
    p = Path(path)
    if p.is_file():
        return p.read_text()
    stem = p.name[:-4] if p.name.endswith(".gcl") else p.name
    bundled = importlib.resources.files("gcrefine") / "corpus" / f"{stem}.gcl"
    if (p.parent.name in ("corpus", "") or p == Path(stem)) and bundled.is_file():
        return bundled.read_text()
    raise UsageError(f"cannot read model {path!r}")


def load_model(path: str) -> Model:
    return parse_model(read_model_source(path))


def parse_preds(text: str | None) -> list:
    if not text:
        return []
    return [parse_formula(part) for part in text.split(",") if part.strip()]


def parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo..hi") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("empty range")
    return lo, hi


def parse_heuristic(text: str) -> int | None:
    if text == "off":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'off' or a positive integer") from None
    if n < 1:
        raise argparse.ArgumentTypeError("threshold must be positive")
    return n


# ---------------------------------------------------------------------------
# serialization


def _abs_id(a: AbstractState) -> str:
    return str(a)


def trace_to_json(trace: Trace, m: Model) -> dict:
    steps = []
    for st in trace.steps:
        t = m.transition(st.index)
        steps.append({"transition": t.name, "index": st.index,
                      "inputs": dict(sorted(st.inputs.items())),
                      "state": {v: st.state[v] for v in m.variables}})
    return {"initial": {v: trace.initial[v] for v in m.variables},
            "steps": steps, "transitions": len(trace.steps), "states": len(trace.steps) + 1}


def precision_to_json(phi) -> dict | list:
    if isinstance(phi, LocalPredicates):
        return {"default": phi.default.names(),
                "locations": [{"control": dict(k), "predicates": p.names()}
                              for k, p in sorted(phi.sets.items())]}
    return phi.names()


def labelings_to_json(labelings) -> list:
    return sorted(format_label(l) for l in labelings)


def config_to_json(cfg: RefineConfig, solver_name: str) -> dict:
    s = cfg.search
    return {
        "order": s.order, "mode": s.mode, "init_preds": cfg.init_preds,
        "assume": cfg.use_assumes, "heuristic": cfg.heuristic,
        "transition_dependent": cfg.transition_dependent,
        "max_iters": cfg.max_iterations, "max_states": s.max_states,
        "input_mode": s.inputs.mode, "input_domain": list(s.inputs.domain),
        "early_exit": s.early_exit, "solver": solver_name,
    }


def report_to_json(report: VerificationReport, m: Model, cfg: RefineConfig,
                   model_name: str, solver_name: str) -> dict:
    v = report.verdict
    verdict: dict = {"result": v.name}
    if isinstance(v, ErrorFound):
        verdict["counterexample"] = trace_to_json(v.trace, m)
    elif isinstance(v, Undecided):
        verdict["reason"] = v.reason
    elif isinstance(v, Unreachable):
        verdict["stabilized_at"] = report.stabilized_at
        verdict["labelings"] = labelings_to_json(v.structure.reachable_labelings())
    its = report.iterations
    new_total = list(dict.fromkeys(a for r in its for a in r.new_predicates + r.heuristic_predicates))
    iterations = []
    for r in its:
        iterations.append({
            "iteration": r.iteration, "phi_size": r.phi_size,
            "concrete_states": r.concrete_states, "visited_states": r.visited_states,
            "abstract_states": r.abstract_states,
            "new_predicates": [format_formula(a) for a in r.new_predicates],
            "heuristic_predicates": [format_formula(a) for a in r.heuristic_predicates],
            "exactness_checks": r.exactness_checks, "failed_checks": r.failed_checks,
            "queries": r.solver.queries, "cache_hits": r.solver.cache_hits,
            "backend_calls": r.solver.backend_calls,
            "labelings": labelings_to_json(r.labelings),
        })
    return {
        "schema": SCHEMA_VERSION,
        "tool": "gcrefine",
        "version": __version__,
        "model": model_name,
        "config": config_to_json(cfg, solver_name),
        "verdict": verdict,
        "summary": {
            "iterations": len(its),
            "concrete_states": [r.concrete_states for r in its],
            "abstract_states": [r.abstract_states for r in its],
            "new_predicates": len(new_total),
            "queries": sum(r.solver.queries for r in its),
            "cache_hits": sum(r.solver.cache_hits for r in its),
        },
        "iterations": iterations,
        "final_predicates": precision_to_json(report.phi),
        "timestamp": {
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "elapsed": round(report.elapsed, 3),
            "iteration_elapsed": [round(r.elapsed, 3) for r in its],
        },
    }


def structure_to_dot(a: ExploredStructure, m: Model) -> str:
    ids = {s: f"n{i}" for i, s in enumerate(a.states)}
    lines = ["digraph explored {", "  rankdir=LR;"]
    for s in a.states:
        lbl = s.bitstring()
        ctrl = ",".join(f"{k}={v}" for k, v in s.control)
        text = f"{ctrl}|{lbl}" if ctrl else lbl
        shape = "doublecircle" if s == a.initial else "circle"
        lines.append(f'  {ids[s]} [label="{text}", shape={shape}];')
    for src, i, dst in a.transitions:
        lines.append(f'  {ids[src]} -> {ids[dst]} [label="{m.transition(i).name}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# argument handling


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", choices=("bfs", "dfs"), default="bfs")
    p.add_argument("--mode", choices=("prover", "lightweight"), default="prover")
    p.add_argument("--input-domain", type=parse_range, default=(-8, 8), metavar="LO..HI")
    p.add_argument("--input-mode", choices=("brute", "sat"), default="brute")
    p.add_argument("--max-states", type=int, default=200_000)
    p.add_argument("--early-exit", action="store_true",
                   help="stop a search at the first property hit")
    p.add_argument("--solver", default="internal",
                   help="internal | external | external:<command>")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--dot", help="write the final explored structure as DOT")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcrefine", description="Abstract-matching refinement checker.")
    ap.add_argument("--version", action="version", version=f"gcrefine {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run the refinement loop on a model")
    c.add_argument("model")
    _add_run_flags(c)
    c.add_argument("--init-preds", choices=("guards", "ap-only"), default="guards")
    c.add_argument("--assume", choices=("on", "off"), default="on")
    c.add_argument("--heuristic", type=parse_heuristic, default=None, metavar="off|N")
    c.add_argument("--transition-dependent", action="store_true")
    c.add_argument("--max-iters", type=int, default=50)

    e = sub.add_parser("explore", help="one search under a fixed predicate set")
    e.add_argument("model")
    e.add_argument("--preds", default="", help="comma-separated predicates (property atoms are added)")
    _add_run_flags(e)

    o = sub.add_parser("oracle", help="brute-force reference computations")
    o.add_argument("op", choices=("rl", "quotient", "abstraction"))
    o.add_argument("model")
    o.add_argument("--bound", type=int, default=6, help="integer domain is [-bound, bound]")
    o.add_argument("--max-states", type=int, default=10_000)
    o.add_argument("--max-depth", type=int, default=None)
    o.add_argument("--preds", default="")
    o.add_argument("--universe", choices=("domain", "reachable"), default="domain")
    o.add_argument("--out")

    k = sub.add_parser("corpus", help="run the bundled benchmark configurations")
    k.add_argument("--table", action="store_true", help="print a comparison table")
    k.add_argument("--solver", default="internal")
    k.add_argument("--only", default="", help="comma-separated row names")
    k.add_argument("--out")
    return ap


def _refine_config(args) -> RefineConfig:
    if args.max_states is not None and args.max_states < 1:
        raise UsageError("--max-states must be positive")
    search = SearchConfig(order=args.order, mode=args.mode,
                          inputs=InputConfig(args.input_mode, args.input_domain),
                          max_states=args.max_states, early_exit=args.early_exit)
    if getattr(args, "max_iters", 1) < 1:
        raise UsageError("--max-iters must be positive")
    return RefineConfig(
        init_preds=getattr(args, "init_preds", "guards"),
        use_assumes=getattr(args, "assume", "on") == "on",
        heuristic=getattr(args, "heuristic", None),
        transition_dependent=getattr(args, "transition_dependent", False),
        max_iterations=getattr(args, "max_iters", 50),
        search=search,
    )


_EXIT = {"unreachable": EXIT_UNREACHABLE, "error": EXIT_ERROR, "undecided": EXIT_UNDECIDED}


def cmd_check(args) -> int:
    m = load_model(args.model)
    cfg = _refine_config(args)
    with make_solver(args.solver) as solver:
        report = refinement_search(m, cfg, solver)
    emit(report_to_json(report, m, cfg, Path(args.model).name, args.solver), args.out)
    if args.dot and report.iterations:
        Path(args.dot).write_text(structure_to_dot(report.iterations[-1].outcome.structure, m))
    return _EXIT[report.verdict.name]


def cmd_explore(args) -> int:
    m = load_model(args.model)
    cfg = _refine_config(args)
    phi = PredicateSet.for_model(m, parse_preds(args.preds) + ap_atoms(m))
    with make_solver(args.solver) as solver:
        out = alpha_search(m, phi, cfg.search, solver)
    st = out.structure
    doc = {
        "schema": SCHEMA_VERSION,
        "model": Path(args.model).name,
        "predicates": phi.names(),
        "states": [{"id": _abs_id(a), "control": dict(a.control), "bits": a.bitstring(),
                    "label": format_label(st.labeling[a])} for a in st.states],
        "transitions": [{"from": _abs_id(a), "transition": m.transition(i).name,
                         "to": _abs_id(b)} for a, i, b in st.transitions],
        "concrete_states": out.stats.concrete_states,
        "visited_states": out.stats.visited_states,
        "abstract_states": out.stats.abstract_states,
        "new_predicates": [format_formula(a) for a in out.new_atoms],
        "phi_new": precision_to_json(out.phi_new),
        "counterexample": trace_to_json(out.counterexample, m) if out.counterexample else None,
    }
    emit(doc, args.out)
    if args.dot:
        Path(args.dot).write_text(structure_to_dot(st, m))
    return EXIT_ERROR if out.counterexample else EXIT_UNREACHABLE


def cmd_oracle(args) -> int:
    m = load_model(args.model)
    if args.bound < 0:
        raise UsageError("--bound must be non-negative")
    domain = (-args.bound, args.bound)
    doc: dict = {"schema": SCHEMA_VERSION, "model": Path(args.model).name, "op": args.op,
                 "domain": list(domain)}
    if args.op in ("rl", "quotient"):
        lts = orc.concrete_explore(m, args.max_states, args.max_depth, domain)
        doc["states"] = len(lts.states)
        doc["truncated"] = lts.truncated
        if args.op == "rl":
            doc["labelings"] = labelings_to_json(orc.reachable_labelings(lts))
        else:
            try:
                doc["blocks"] = orc.quotient_size(lts)
            except orc.TruncatedInput as exc:
                doc["error"] = str(exc)
                emit(doc, args.out)
                return EXIT_UNDECIDED
        emit(doc, args.out)
        return EXIT_UNDECIDED if lts.truncated else 0
    phi = PredicateSet.for_model(m, parse_preds(args.preds))
    try:
        sets = orc.enumerate_abstraction(m, phi, domain, universe=args.universe)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    def edges(rel):
        return sorted([str(a), m.transition(i).name, str(b)] for a, i, b in rel)

    doc.update(predicates=phi.names(), states=sorted(map(str, sets.states)),
               initial=str(sets.initial), may=edges(sets.may),
               must_plus=edges(sets.must_plus), must_minus=edges(sets.must_minus))
    emit(doc, args.out)
    return 0


# ---------------------------------------------------------------------------
# corpus table


@dataclass(frozen=True)
class CorpusRow:
    name: str
    model: str
    verdict: str
    iterations: int | None
    concrete: tuple[int, ...] = ()
    abstract: tuple[int, ...] = ()
    new_predicates: int | None = None
    max_iterations: int = 50
    note: str = ""


# reference values; the RAX row has no entries because it does not terminate
CORPUS_ROWS = (
    CorpusRow("ticket2-err", "ticket2_err", "error", 2, (15, 31), (9, 17), 5),
    CorpusRow("ticket3-err", "ticket3_err", "error", 1, (102,), (44,), 4),
    CorpusRow("RAX-err", "rax_err", "error", 1, (69,), (44,), 0),
    CorpusRow("bakery-err", "bakery_err", "error", 1, (356,), (191,), 14),
    CorpusRow("driver-err", "driver_err", "error", 1, (10,), (10,), 0),
    CorpusRow("ticket2", "ticket2", "unreachable", 4, (15,) * 4, (9,) * 4, 6),
    CorpusRow("ticket3", "ticket3", "unreachable", 5, (52, 58, 58, 58, 58), (25, 31, 31, 31, 31), 11),
    CorpusRow("RAX", "rax", "undecided", None, max_iterations=6),
    CorpusRow("bakery", "bakery", "unreachable", 3, (278, 410, 537), (152, 221, 292), 24),
    CorpusRow("driver", "driver", "unreachable", 2, (10,), (9,), 0,
              note="reference prose says the predicates are stable after one iteration"),
)


def _close(got: Sequence[int], want: Sequence[int], tol: float = 0.10) -> bool:
    if not want:
        return True
    return len(got) >= len(want) and all(abs(g - w) <= tol * w for g, w in zip(got, want))


def run_corpus_row(row: CorpusRow, solver_spec: str) -> dict:
    m = load_model(row.model)
    cfg = RefineConfig(max_iterations=row.max_iterations)
    t0 = time.monotonic()
    with make_solver(solver_spec) as solver:
        report = refinement_search(m, cfg, solver)
    its = report.iterations
    got = {
        "verdict": report.verdict.name,
        "iterations": len(its),
        "concrete": [r.concrete_states for r in its],
        "abstract": [r.abstract_states for r in its],
        "new_predicates": len({a for r in its for a in r.new_predicates + r.heuristic_predicates}),
        "queries": sum(r.solver.queries for r in its),
    }
    match = got["verdict"] == row.verdict and (row.iterations is None or got["iterations"] == row.iterations)
    return {"name": row.name, "expected": {"verdict": row.verdict, "iterations": row.iterations,
                                            "concrete": list(row.concrete), "abstract": list(row.abstract),
                                            "new_predicates": row.new_predicates},
            "got": got, "match": match, "note": row.note,
            "states_within_10pct": _close(got["concrete"], row.concrete),
            "elapsed": round(time.monotonic() - t0, 2)}


def _fmt_counts(xs) -> str:
    return ",".join(map(str, xs)) if xs else "--"


def format_table(rows: list[dict]) -> str:
    head = f"{'example':<12} {'verdict':<12} {'iters':>5} {'concrete':<22} {'abstract':<22} {'preds':>5}  status"
    out = [head, "-" * len(head)]
    for r in rows:
        g, e = r["got"], r["expected"]
        status = "match" if r["match"] else "MISMATCH"
        if r["note"]:
            status += f" ({r['note']})"
        if r["match"] and not r["states_within_10pct"]:
            status += " (state counts differ)"
        out.append(f"{r['name']:<12} {g['verdict']:<12} {g['iterations']:>5} "
                   f"{_fmt_counts(g['concrete']):<22} {_fmt_counts(g['abstract']):<22} "
                   f"{g['new_predicates']:>5}  {status}")
        exp_iters = "--" if e["iterations"] is None else e["iterations"]
        out.append(f"{'  expected':<12} {e['verdict']:<12} {exp_iters:>5} "
                   f"{_fmt_counts(e['concrete']):<22} {_fmt_counts(e['abstract']):<22} "
                   f"{'--' if e['new_predicates'] is None else e['new_predicates']:>5}")
    return "\n".join(out) + "\n"


def cmd_corpus(args) -> int:
    wanted = {x.strip() for x in args.only.split(",") if x.strip()}
    rows = [r for r in CORPUS_ROWS if not wanted or r.name in wanted]
    if wanted and len(rows) != len(wanted):
        raise UsageError("unknown corpus row in --only")
    results = []
    for row in rows:
        log.info("running %s", row.name)
        results.append(run_corpus_row(row, args.solver))
    if args.table:
        text = format_table(results)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    else:
        emit({"schema": SCHEMA_VERSION, "rows": results}, args.out)
    return 0 if all(r["match"] for r in results) else EXIT_UNDECIDED


COMMANDS = {"check": cmd_check, "explore": cmd_explore, "oracle": cmd_oracle, "corpus": cmd_corpus}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ModelError, ValueError, BackendUnavailable, OSError) as exc:
        print(f"gcrefine: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
