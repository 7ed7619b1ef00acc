import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcrefine import oracle
from gcrefine.abstraction import PredicateSet
from gcrefine.logic import canonical_atom, evaluate, wp
from gcrefine.parser import parse_formula, parse_model
from gcrefine.refine import RefineConfig, refinement_search
from gcrefine.search import SearchConfig, alpha_search, ap_atoms
from gcrefine.semantics import State

F = parse_formula


def phi_for(m, *preds):
    return PredicateSet.for_model(m, [F(p) for p in preds] + ap_atoms(m))


def classes(lts):
    part = oracle.bisimulation_quotient(lts)
    blocks: dict = {}
    for s, b in part.items():
        blocks.setdefault(b, set()).add(s)
    return {frozenset(v) for v in blocks.values()}


def naive_classes(lts):
    rel = oracle.naive_bisimilarity(lts)
    return {frozenset(b for a2, b in rel if a2 == a) for a in lts.states}


# --- concrete_explore ------------------------------------------------------

def test_explore_fig6a(model):
    lts = oracle.concrete_explore(model("fig6a"), max_depth=3)
    assert [s["x"] for s in lts.states] == [0, -1]
    assert not lts.truncated


def test_explore_driver_is_truncated(model):
    # the driver allocates ever larger handles, so no finite bound covers it
    lts = oracle.concrete_explore(model("driver"), max_states=2000)
    assert lts.truncated and len(lts.states) == 2000
    assert lts.frontier


def test_explore_ticket3_truncated(model):
    lts = oracle.concrete_explore(model("ticket3"), max_states=10_000)
    assert lts.truncated


def test_explore_bad_bounds(model):
    with pytest.raises(ValueError):
        oracle.concrete_explore(model("fig1"), max_states=0)


# --- reachable labelings ---------------------------------------------------

def test_rl_fig6a(model):
    lts = oracle.concrete_explore(model("fig6a"), input_domain=(-1, 1))
    assert oracle.reachable_labelings(lts) == {frozenset(), frozenset([canonical_atom(F("x < 0"))])}


def test_rl_no_transitions():
    m = parse_model("vars x; init x = 3; prop p: x < 0;")
    lts = oracle.concrete_explore(m)
    assert len(lts.states) == 1
    assert oracle.reachable_labelings(lts) == {frozenset()}


def test_rl_driver_matches_fixed_point(model, solver):
    m = model("driver")
    r = refinement_search(m, solver=solver)
    lts = oracle.concrete_explore(m, max_states=3000)
    assert oracle.reachable_labelings(lts) == r.iterations[-1].labelings


# --- bisimulation ----------------------------------------------------------

def test_quotient_fig1_matches_exact_structure(model, solver):
    m = model("fig1")
    lts = oracle.concrete_explore(m)
    assert len(lts.states) == 6
    exact = alpha_search(m, phi_for(m, "x < 2", "x < 1"), SearchConfig(), solver).structure
    assert oracle.quotient_size(lts) == len(exact.states) == 6


def test_quotient_uniform_labels():
    lts = oracle.FiniteLTS([1, 2, 3], [], 1, {1: frozenset(), 2: frozenset(), 3: frozenset()})
    assert len(set(oracle.bisimulation_quotient(lts).values())) == 1


def test_quotient_fig5_single_state(model):
    lts = oracle.concrete_explore(model("fig5"))
    assert len(lts.states) == 1 and not lts.truncated
    assert lts.transitions == [(lts.initial, 1, lts.initial)]
    assert oracle.quotient_size(lts) == 1


def test_quotient_rejects_truncated(model):
    lts = oracle.concrete_explore(model("ticket3"), max_states=100)
    with pytest.raises(oracle.TruncatedInput):
        oracle.bisimulation_quotient(lts)


@st.composite
def random_lts(draw):
    n = draw(st.integers(1, 12))
    labels = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(1, 2), st.integers(0, n - 1)),
                          max_size=3 * n))
    return oracle.FiniteLTS(list(range(n)), list(dict.fromkeys(edges)), 0,
                            {i: frozenset([labels[i]]) for i in range(n)})


@settings(max_examples=150, derandomize=True, deadline=None)
@given(random_lts())
def test_partition_refinement_agrees_with_naive(lts):
    assert classes(lts) == naive_classes(lts)


@pytest.mark.parametrize("name", ["fig1", "fig4", "fig5", "fig6a", "fig6b"])
def test_partition_refinement_agrees_on_corpus(name, model):
    lts = oracle.concrete_explore(model(name), max_states=200)
    assert not lts.truncated
    assert classes(lts) == naive_classes(lts)


def test_check_bisimilar_fig1(model, solver):
    m = model("fig1")
    lts = oracle.concrete_explore(m)
    coarse = alpha_search(m, phi_for(m, "x < 2"), SearchConfig(), solver).structure
    fine = alpha_search(m, phi_for(m, "x < 2", "x < 1"), SearchConfig(), solver).structure
    assert not oracle.check_bisimilar(coarse, lts)
    assert oracle.check_bisimilar(fine, lts)
    assert oracle.check_bisimilar(lts, lts)


def test_driver_bisimilarity_needs_complete_lts(model, solver):
    m = model("driver")
    r = refinement_search(m, solver=solver)
    final = r.iterations[-1].outcome.structure
    lts = oracle.concrete_explore(m, max_states=5000)
    with pytest.raises(oracle.TruncatedInput):
        oracle.check_bisimilar(final, lts)
    # bounded evidence: alpha is a bisimulation on everything explored
    assert oracle.abstraction_relation_violations(final, lts, m, r.phi) == []


def test_relational_check_catches_coarse_abstraction(model, solver):
    m = model("fig1")
    coarse = alpha_search(m, phi_for(m, "x < 2"), SearchConfig(), solver).structure
    lts = oracle.concrete_explore(m)
    assert oracle.abstraction_relation_violations(coarse, lts, m, phi_for(m, "x < 2"))


# --- may / must enumeration ------------------------------------------------

def pcs(edges):
    return {(dict(a.control)["pc"], i, dict(b.control)["pc"]) for a, i, b in edges}


def test_fig1_may_and_must(model):
    m = model("fig1")
    sets = oracle.enumerate_abstraction(m, phi_for(m, "x < 2"), universe="reachable")
    chain = {(0, 1, 1), (0, 2, 2), (1, 3, 3), (2, 4, 3)}
    assert pcs(sets.may) == chain | {(3, 5, 4)}
    # D with x=0 cannot move to E, so D -> E is a may but not a must transition
    assert pcs(sets.must_plus) == chain


def test_fig6a_neither_must(model):
    m = model("fig6a")
    sets = oracle.enumerate_abstraction(m, phi_for(m, "x >= 0"), domain=(-4, 4))
    pos = [a for a in sets.states if a.bits == (False,)]  # x <= -1 is false
    neg = [a for a in sets.states if a.bits == (True,)]
    edge = (pos[0], 1, neg[0])
    assert edge in sets.may
    assert edge not in sets.must_plus and edge not in sets.must_minus


def test_empty_phi_total_transition():
    m = parse_model("vars x; control pc; trans t: pc = 0 -> pc := 1, x := x + 1; "
                    "trans u: pc = 1 -> pc := 0, x := x - 2; prop p: pc = 5;")
    sets = oracle.enumerate_abstraction(m, PredicateSet.for_model(m, ap_atoms(m)), domain=(-3, 3))
    assert sets.may == sets.must_plus


@pytest.mark.parametrize("name, preds", [("fig1", ["x < 2"]), ("fig6a", ["x >= 0"]),
                                         ("fig6b", ["x >= 3"]), ("fig4", ["x >= 3"])])
@pytest.mark.parametrize("universe", ["domain", "reachable"])
def test_must_within_may(name, preds, universe, model):
    m = model(name)
    sets = oracle.enumerate_abstraction(m, phi_for(m, *preds), domain=(-4, 4), universe=universe)
    assert sets.must_plus <= sets.may
    assert sets.must_minus <= sets.may


@pytest.mark.parametrize("name, preds", [("fig1", ["x < 2"]), ("fig6b", ["x >= 3"])])
def test_matching_search_covers_must_plus(name, preds, model, solver):
    m = model(name)
    phi = phi_for(m, *preds)
    sets = oracle.enumerate_abstraction(m, phi, universe="reachable")
    found = oracle.reachable_labelings(oracle.structure_as_lts(alpha_search(m, phi, SearchConfig(), solver).structure))
    assert oracle.must_reachable_labelings(sets, "plus") <= found


def test_fig6b_incomparable(model, solver):
    m = model("fig6b")
    phi = phi_for(m, "x >= 3")
    at3 = canonical_atom(F("pc = 3"))
    low = canonical_atom(F("x < 3"))
    sets = oracle.enumerate_abstraction(m, phi, universe="reachable")
    both = {frozenset([at3]), frozenset([at3, low])}
    assert both <= oracle.must_reachable_labelings(sets, "plusminus")
    found = oracle.reachable_labelings(oracle.structure_as_lts(alpha_search(m, phi, SearchConfig(), solver).structure))
    assert len(both & found) == 1


def test_enumeration_rejects_bad_input(model):
    m = model("ticket3")
    with pytest.raises(ValueError):
        oracle.enumerate_abstraction(m, phi_for(m))
    with pytest.raises(ValueError):
        oracle.enumerate_abstraction(model("fig1"), phi_for(model("fig1")), universe="galaxy")


# --- post image ------------------------------------------------------------

def test_post_image_examples(model):
    t = model("fig6a").transitions[0]
    assert oracle.post_image([State({"x": 0})], t) == {State({"x": -1})}
    assert oracle.post_image([], t) == set()


SMALL = parse_model("vars x y; trans t: x >= y -> x := x - y, y := y + 1; prop p: x < 0;")
BOX = [State({"x": x, "y": y}) for x, y in itertools.product(range(-3, 4), repeat=2)]
ATOMS = ["x < 0", "y >= 1", "x + y <= 2", "x = y", "x - y > 1"]


@pytest.mark.parametrize("pre, post", list(itertools.product(ATOMS, ATOMS)))
def test_sp_wp_duality(pre, post):
    t = SMALL.transitions[0]
    cube = [s for s in BOX if evaluate(F(pre), s)]
    image = oracle.post_image(cube, t)
    lhs = all(evaluate(F(post), s) for s in image)
    rhs = all(evaluate(wp(F(post), t), s) for s in cube)
    assert lhs == rhs


# --- refinement against the oracle -----------------------------------------

@pytest.mark.parametrize("name", ["driver", "fig1", "fig4", "fig5", "ticket2"])
def test_iteration_labelings_within_oracle(name, model, solver):
    m = model(name)
    r = refinement_search(m, RefineConfig(max_iterations=6), solver=solver)
    truth = oracle.reachable_labelings(oracle.concrete_explore(m, max_states=5000))
    for it in r.iterations:
        assert it.labelings <= truth
