"""Predicate abstraction of concrete states.

Control variables are never abstracted: an abstract state is the tuple of
control values plus one bit per predicate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .logic import canonical_atom, evaluate
from .syntax import Atom, BoolConst, Const, Formula, Model, Not, Var, conj, format_formula, free_vars


class PredicateSet:
    """Ordered set of canonical predicate atoms; bit i refers to ``atoms[i]``."""

    __slots__ = ("atoms", "_index")

    def __init__(self, atoms: Iterable[Formula] = ()):
        uniq: dict[Formula, None] = {}
        for a in atoms:
            c = canonical_atom(a)
            if not isinstance(c, BoolConst):
                uniq[c] = None
        self.atoms: tuple[Formula, ...] = tuple(uniq)
        self._index = {a: i for i, a in enumerate(self.atoms)}

    @classmethod
    def for_model(cls, m: Model, atoms: Iterable[Formula]) -> "PredicateSet":
        """Drop atoms over control variables only; control values are stored verbatim."""
        control = set(m.control_vars)
        keep = []
        for a in atoms:
            c = canonical_atom(a)
            if isinstance(c, BoolConst) or free_vars(c) <= control:
                continue
            keep.append(c)
        return cls(keep)

    def __contains__(self, atom: Formula) -> bool:
        return canonical_atom(atom) in self._index

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        # set equality: bit order does not matter for termination checks
        if not isinstance(other, PredicateSet):
            return NotImplemented
        return set(self.atoms) == set(other.atoms)

    def __hash__(self) -> int:
        return hash(frozenset(self.atoms))

    def union(self, more: Iterable[Formula]) -> "PredicateSet":
        return PredicateSet(self.atoms + tuple(more))

    def index(self, atom: Formula) -> int:
        return self._index[canonical_atom(atom)]

    def names(self) -> list[str]:
        return [format_formula(a) for a in self.atoms]

    def __repr__(self) -> str:
        return "PredicateSet([" + ", ".join(self.names()) + "])"


@dataclass(frozen=True)
class AbstractState:
    control: tuple[tuple[str, int], ...]
    bits: tuple[bool, ...]

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __str__(self) -> str:
        ctrl = ",".join(f"{k}={v}" for k, v in self.control)
        return f"[{ctrl}|{self.bitstring()}]" if ctrl else f"[{self.bitstring()}]"


LabelSet = frozenset


def control_key(s: Mapping[str, int], m: Model) -> tuple[tuple[str, int], ...]:
    return tuple((v, s[v]) for v in m.control_vars)


def abstract(s: Mapping[str, int], phi: PredicateSet, m: Model) -> AbstractState:
    return AbstractState(control_key(s, m), tuple(evaluate(p, s) for p in phi.atoms))


def abstract_formula(a: AbstractState, phi: PredicateSet) -> Formula:
    """The cube of ``a``: control equalities plus each predicate or its negation."""
    if len(a.bits) != len(phi):
        raise ValueError("abstract state was not produced by this predicate set")
    parts: list[Formula] = [Atom("=", Var(v), Const(val)) for v, val in a.control]
    parts += [p if b else Not(p) for p, b in zip(phi.atoms, a.bits)]
    return conj(*parts)


def label(s: Mapping[str, int], ap: Sequence[Formula]) -> LabelSet:
    return frozenset(a for a in ap if evaluate(a, s))


def format_label(lbl: LabelSet) -> list[str]:
    return sorted(format_formula(a) for a in lbl)
