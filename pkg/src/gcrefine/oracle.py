"""Brute-force reference engines used as ground truth by the test suites.

Everything here enumerates concrete states explicitly and is only meant for
small bounded instances.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .abstraction import AbstractState, LabelSet, PredicateSet, abstract, label
from .logic import atoms, evaluate
from .search import ExploredStructure
from .semantics import InputConfig, State, apply, initial_state, successors
from .syntax import Model, Transition

DEFAULT_DOMAIN = (-6, 6)


class TruncatedInput(ValueError):
    """The operation needs a complete LTS but a bound was hit while building it."""


@dataclass
class FiniteLTS:
    states: list
    transitions: list[tuple]
    initial: Hashable
    labeling: dict
    truncated: bool = False
    # states whose outgoing transitions were cut off by a bound
    frontier: frozenset = frozenset()

    def successors(self) -> dict:
        out: dict = {s: [] for s in self.states}
        for a, i, b in self.transitions:
            out[a].append((i, b))
        return out


def ap_of(m: Model) -> list:
    return atoms(m.property)


def concrete_explore(m: Model, max_states: int = 10_000, max_depth: int | None = None,
                     input_domain: tuple[int, int] = DEFAULT_DOMAIN) -> FiniteLTS:
    """Plain breadth-first exploration with matching on full concrete states."""
    if max_states < 1 or (max_depth is not None and max_depth < 0):
        raise ValueError("bounds must be positive")
    ap = ap_of(m)
    inputs = InputConfig("brute", input_domain)
    s0 = initial_state(m)
    depth = {s0: 0}
    order = [s0]
    trans = []
    frontier = set()
    wait = deque([s0])
    while wait:
        s = wait.popleft()
        if max_depth is not None and depth[s] >= max_depth:
            if successors(s, m, inputs):
                frontier.add(s)
            continue
        for index, _, s2 in successors(s, m, inputs):
            if s2 not in depth:
                if len(order) >= max_states:
                    frontier.add(s)
                    continue
                depth[s2] = depth[s] + 1
                order.append(s2)
                wait.append(s2)
            trans.append((s, index, s2))
    # drop edges into states that were never admitted
    known = set(order)
    trans = list(dict.fromkeys(t for t in trans if t[2] in known))
    return FiniteLTS(order, trans, s0, {s: label(s, ap) for s in order},
                     bool(frontier), frozenset(frontier))


def reachable_labelings(lts: FiniteLTS) -> set[LabelSet]:
    seen = {lts.initial}
    wait = deque([lts.initial])
    succ = lts.successors()
    while wait:
        s = wait.popleft()
        for _, t in succ[s]:
            if t not in seen:
                seen.add(t)
                wait.append(t)
    return {lts.labeling[s] for s in seen}


# ---------------------------------------------------------------------------
# bisimulation


def bisimulation_quotient(lts: FiniteLTS) -> dict:
    """Coarsest label-respecting partition stable under every transition index.

    Naive signature refinement: split blocks by the set of (index, target
    block) pairs until nothing changes.
    """
    if lts.truncated:
        raise TruncatedInput("bisimulation needs a complete LTS")
    succ = lts.successors()
    ids: dict = {}
    block = {s: ids.setdefault(lts.labeling[s], len(ids)) for s in lts.states}
    while True:
        sigs: dict = {}
        new = {}
        for s in lts.states:
            sig = (block[s], frozenset((i, block[t]) for i, t in succ[s]))
            new[s] = sigs.setdefault(sig, len(sigs))
        if len(sigs) == len(set(block.values())):
            return new
        block = new


def naive_bisimilarity(lts: FiniteLTS) -> set[tuple]:
    """Greatest bisimulation as a set of pairs, by pairwise fixpoint (quadratic)."""
    if lts.truncated:
        raise TruncatedInput("bisimulation needs a complete LTS")
    succ = lts.successors()
    rel = {(a, b) for a in lts.states for b in lts.states if lts.labeling[a] == lts.labeling[b]}

    def matched(a, b) -> bool:
        for i, a2 in succ[a]:
            if not any(j == i and (a2, b2) in rel for j, b2 in succ[b]):
                return False
        return True

    changed = True
    while changed:
        changed = False
        for pair in list(rel):
            a, b = pair
            if not (matched(a, b) and matched(b, a)):
                rel.discard(pair)
                changed = True
    return rel


def structure_as_lts(a: ExploredStructure) -> FiniteLTS:
    return FiniteLTS(list(a.states), list(a.transitions), a.initial, dict(a.labeling))


def disjoint_union(left: FiniteLTS, right: FiniteLTS) -> FiniteLTS:
    def tag(side, lts):
        return ([(side, s) for s in lts.states],
                [((side, x), i, (side, y)) for x, i, y in lts.transitions],
                {(side, s): l for s, l in lts.labeling.items()})

    s1, t1, l1 = tag("L", left)
    s2, t2, l2 = tag("R", right)
    return FiniteLTS(s1 + s2, t1 + t2, ("L", left.initial), {**l1, **l2},
                     left.truncated or right.truncated)


def check_bisimilar(a: ExploredStructure | FiniteLTS, lts: FiniteLTS) -> bool:
    """Are the initial states related by the largest bisimulation of the disjoint union?"""
    if lts.truncated:
        raise TruncatedInput("bisimulation needs a complete LTS")
    left = a if isinstance(a, FiniteLTS) else structure_as_lts(a)
    union = disjoint_union(left, lts)
    part = bisimulation_quotient(union)
    return part[("L", left.initial)] == part[("R", lts.initial)]


def abstraction_relation_violations(a: ExploredStructure, lts: FiniteLTS, m: Model,
                                    phi) -> list[str]:
    """Check that {(s, alpha(s))} is a bisimulation on the explored part of ``lts``.

    Works on truncated explorations: frontier states are only checked for
    membership and labels.  An empty result on a complete LTS implies
    bisimilarity; on a truncated one it is bounded evidence only.
    """
    from .abstraction import control_key
    from .search import LocalPredicates

    def alpha(s):
        p = phi.at(control_key(s, m)) if isinstance(phi, LocalPredicates) else phi
        return abstract(s, p, m)

    states = set(a.states)
    edges: dict = {}
    for x, i, y in a.transitions:
        edges.setdefault(x, set()).add((i, y))
    succ = lts.successors()
    out = []
    if alpha(lts.initial) != a.initial:
        out.append("initial states differ")
    for s in lts.states:
        x = alpha(s)
        if x not in states:
            out.append(f"{s!r} maps to unexplored {x}")
            continue
        if a.labeling[x] != lts.labeling[s]:
            out.append(f"label mismatch at {s!r}")
        if s in lts.frontier:
            continue
        concrete = {(i, alpha(t)) for i, t in succ[s]}
        for e in concrete - edges.get(x, set()):
            out.append(f"{s!r} step {e[0]} has no abstract counterpart")
        for e in edges.get(x, set()) - concrete:
            out.append(f"{x} step {e[0]} is not matched by {s!r}")
    return out


def quotient_size(lts: FiniteLTS) -> int:
    """Number of blocks among reachable states."""
    part = bisimulation_quotient(lts)
    return len(set(part.values()))


# ---------------------------------------------------------------------------
# may / must abstractions


@dataclass
class AbstractionSets:
    states: set[AbstractState]
    initial: AbstractState
    labels: dict[AbstractState, LabelSet]
    may: set[tuple] = field(default_factory=set)
    must_plus: set[tuple] = field(default_factory=set)
    must_minus: set[tuple] = field(default_factory=set)
    # must- with respect to the union of all transitions (index None)
    must_minus_any: set[tuple] = field(default_factory=set)


def _valuations(m: Model, domain: tuple[int, int]) -> Iterable[State]:
    lo, hi = domain
    names = m.variables
    for values in itertools.product(range(lo, hi + 1), repeat=len(names)):
        yield State(dict(zip(names, values)))


def _steps(s: State, t: Transition, input_domain: tuple[int, int]) -> list[State]:
    if not evaluate(t.guard, s):
        return []
    if not t.input_vars:
        return [apply(s, t)]
    lo, hi = input_domain
    return [apply(s, t, dict(zip(t.input_vars, vals)))
            for vals in itertools.product(range(lo, hi + 1), repeat=len(t.input_vars))]


def enumerate_abstraction(m: Model, phi: PredicateSet, domain: tuple[int, int] = DEFAULT_DOMAIN,
                          universe: str = "domain", widen: int = 4, max_points: int = 2_000_000,
                          lts: FiniteLTS | None = None) -> AbstractionSets:
    """Exhaustive may, must+ and must- transitions over a finite universe.

    ``universe="domain"`` quantifies over every valuation in ``domain``;
    ``universe="reachable"`` over the states of a concrete exploration.
    Existential witnesses for must- (predecessors) are looked up in a domain
    widened by ``widen`` so that the edge of the box does not create
    spurious failures.
    """
    ap = ap_of(m)
    if universe == "domain":
        width = domain[1] - domain[0] + 1
        if width ** len(m.variables) > max_points:
            raise ValueError("domain too large for exhaustive enumeration")
        states = list(_valuations(m, domain))
        wide = (domain[0] - widen, domain[1] + widen)
        pred_pool = states if widen == 0 else list(_valuations(m, wide))
    elif universe == "reachable":
        lts = lts or concrete_explore(m, input_domain=domain)
        states = list(lts.states)
        pred_pool = states
    else:
        raise ValueError(f"unknown universe {universe!r}")

    def alpha(s):
        return abstract(s, phi, m)

    members: dict[AbstractState, list[State]] = {}
    for s in states:
        members.setdefault(alpha(s), []).append(s)
    labels = {a: label(ss[0], ap) for a, ss in members.items()}
    a0 = alpha(initial_state(m))
    out = AbstractionSets(set(members), a0, labels)
    if a0 not in labels:
        labels[a0] = label(initial_state(m), ap)
        out.states.add(a0)

    # forward images of universe states
    image: dict[tuple, set[AbstractState]] = {}
    for s in states:
        for t in m.transitions:
            image[(s, t.index)] = {alpha(s2) for s2 in _steps(s, t, domain)}
    for (s, i), targets in image.items():
        for a2 in targets:
            out.may.add((alpha(s), i, a2))
    for a1, ss in members.items():
        for t in m.transitions:
            common = None
            for s in ss:
                tg = image[(s, t.index)]
                common = set(tg) if common is None else common & tg
            for a2 in common or ():
                out.must_plus.add((a1, t.index, a2))

    # must-: every member of a2 has a predecessor in a1
    preds: dict[State, set[tuple]] = {}
    targets = set(states)
    pool_alpha = {}
    for s1 in pred_pool:
        for t in m.transitions:
            for s2 in _steps(s1, t, domain):
                if s2 in targets:
                    a1 = pool_alpha.get(s1)
                    if a1 is None:
                        a1 = pool_alpha[s1] = alpha(s1)
                    preds.setdefault(s2, set()).add((a1, t.index))
    for a2, ss in members.items():
        for t in m.transitions:
            common = None
            for s2 in ss:
                here = {a1 for a1, i in preds.get(s2, ()) if i == t.index}
                common = here if common is None else common & here
            for a1 in common or ():
                out.must_minus.add((a1, t.index, a2))
        common = None
        for s2 in ss:
            here = {a1 for a1, _ in preds.get(s2, ())}
            common = here if common is None else common & here
        for a1 in common or ():
            out.must_minus_any.add((a1, None, a2))
    return out


def _closure(start: Iterable[AbstractState], edges: Iterable[tuple]) -> set[AbstractState]:
    succ: dict = {}
    for a, _, b in edges:
        succ.setdefault(a, set()).add(b)
    seen = set(start)
    wait = deque(seen)
    while wait:
        a = wait.popleft()
        for b in succ.get(a, ()):
            if b not in seen:
                seen.add(b)
                wait.append(b)
    return seen


def must_reachable_labelings(sets: AbstractionSets, mode: str = "plus",
                             union_minus: bool = True) -> set[LabelSet]:
    """Labelings reachable along must+ paths, or along must- paths followed by must+ paths."""
    if mode == "plus":
        reach = _closure([sets.initial], sets.must_plus)
    elif mode == "plusminus":
        minus = sets.must_minus_any if union_minus else sets.must_minus
        mid = _closure([sets.initial], minus)
        reach = _closure(mid, sets.must_plus)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return {sets.labels[a] for a in reach if a in sets.labels}


def post_image(states: Iterable[Mapping[str, int]], t: Transition,
               input_domain: tuple[int, int] = DEFAULT_DOMAIN) -> set[State]:
    out: set[State] = set()
    for s in states:
        out.update(_steps(State(s), t, input_domain))
    return out
