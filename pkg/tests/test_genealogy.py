import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalescence.errors import (
    BudgetExceededError,
    InsufficientSamplesError,
    NullConditioningError,
    TractabilityError,
)
from coalescence.genealogy import (
    ancestor_count_array,
    ancestor_counts,
    bgw_conditional,
    bgw_conditioned_sample,
    empirical_conditional,
    exact_conditional,
    extract_tree,
)
from coalescence.mechanisms import FiniteSupport, LinearFractional, QuadraticStep
from coalescence.rng import make_rng
from coalescence.simulator import RunConfig, replay, run

from oracles import conditional_by_enumeration, terminal_law

FIG1 = [[2, 0, 0, 1, 2, 2, 1, 1], [1, 0, 2, 1, 0, 2, 1, 2], [2, 1, 2, 0, 2, 1, 0, 1]]
BINARY = FiniteSupport([F(1, 4), F(1, 4), F(1, 2)])
IDENTITY = FiniteSupport([0, 1], allow_degenerate=True)


def test_figure_one_levels():
    log = replay(FIG1)
    assert log.sizes(1).tolist() == [2, 0, 0, 1, 2, 2, 1, 1]
    assert log.sizes(2).tolist() == [2, 0, 0, 1, 0, 4, 1]
    assert log.sizes(3).tolist() == [2, 0, 1, 0, 5]
    assert log.check_conservation()


def test_figure_one_size_five_tree():
    tree = extract_tree(replay(FIG1), 4)
    assert tree.root.size == 5
    assert tree.leaves_at_depth(3) == 5
    assert ancestor_counts(tree)[3] == 5
    assert tree.height == 3


def test_figure_one_extinct_tree():
    log = replay(FIG1)
    i = log.sizes(3).tolist().index(0)
    tree = extract_tree(log, i)
    assert tree.height < 3
    assert all(n.size == 0 for layer in tree.nodes_by_depth() for n in layer)
    counts = ancestor_counts(tree)
    assert all(k == 0 for k in counts[tree.height + 1:])


def test_extract_index_out_of_range():
    with pytest.raises(IndexError):
        extract_tree(replay(FIG1), 5)


def test_identity_chain_is_a_path():
    log = run(RunConfig([IDENTITY] * 4, boxes=3, seed=0))
    tree = extract_tree(log, 1)
    assert tree.height == 4
    assert ancestor_counts(tree) == [1, 1, 1, 1, 1]
    assert all(len(layer) == 1 for layer in tree.nodes_by_depth())


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.lists(st.integers(1, 4), min_size=2, max_size=3), min_size=1, max_size=4),
    st.integers(0, 2**32),
)
def test_tree_invariants(weights, seed):
    mechs = [FiniteSupport([F(x, sum(w)) for x in w]) for w in weights]
    N = len(mechs)
    log = run(RunConfig(mechs, boxes=40, seed=seed))
    for nu in range(N + 1):
        arr = ancestor_count_array(log, nu)
        for i in range(0, 40, 7):
            assert arr[i] == ancestor_counts(extract_tree(log, i))[nu]
    for i in range(40):
        tree = extract_tree(log, i)
        assert tree.leaves_at_depth(N) == tree.root.size
        assert (tree.height < N) == (tree.root.size == 0)
        for layer in tree.nodes_by_depth()[:-1]:
            for node in layer:
                if node.level > 0:
                    assert (not node.children) == (node.draw == 0)


def test_exact_matches_enumeration_binary():
    law = terminal_law([BINARY.p] * 2)
    assert law == {0: F(11, 32), 1: F(1, 8), 2: F(9, 32), 3: F(1, 8), 4: F(1, 8)}
    for j in law:
        exact = exact_conditional([BINARY] * 2, 2, 1, j)
        ref = conditional_by_enumeration([BINARY.p] * 2, 1, j)
        assert exact.as_dict() == ref
        assert sum(exact.probs) == 1
    assert exact_conditional([BINARY] * 2, 2, 1, 2).as_dict() == {1: F(4, 9), 2: F(5, 9)}


pmf3 = st.lists(st.integers(0, 4), min_size=2, max_size=3).filter(lambda w: w[0] > 0 and sum(w[1:]) > 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(pmf3, min_size=1, max_size=3), st.data())
def test_exact_matches_enumeration_random(weights, data):
    pmfs = [[F(x, sum(w)) for x in w] for w in weights]
    mechs = [FiniteSupport(p) for p in pmfs]
    N = len(mechs)
    law = terminal_law(pmfs)
    j = data.draw(st.sampled_from(sorted(k for k, v in law.items() if v)))
    nu = data.draw(st.integers(0, N))
    exact = exact_conditional(mechs, N, nu, j)
    assert exact.as_dict() == conditional_by_enumeration(pmfs, nu, j)
    if j >= 1 and nu < N:
        assert exact.probs[0] == 0


def test_nu_equal_n_is_point_mass():
    assert exact_conditional([BINARY] * 3, 3, 3, 2).as_dict() == {2: 1}
    assert exact_conditional([BINARY] * 3, 3, 0, 2).as_dict() == {1: 1}


def test_null_conditioning():
    with pytest.raises(NullConditioningError, match="null event"):
        exact_conditional([BINARY] * 2, 2, 1, 5)


def test_tractability_bounds():
    with pytest.raises(TractabilityError):
        exact_conditional([BINARY] * 7, 7, 1, 1)
    with pytest.raises(TractabilityError):
        exact_conditional([FiniteSupport([F(1, 4)] * 4)], 1, 0, 1)
    with pytest.raises(TractabilityError):
        exact_conditional([LinearFractional(2, 1)], 1, 0, 1)


def test_quadratic_steps_accepted():
    mechs = [QuadraticStep(1, 2, n) for n in range(3)]
    law = exact_conditional(mechs, 3, 2, 3)
    assert sum(law.probs) == 1
    ref = conditional_by_enumeration([m.pmf(2) for m in mechs], 2, 3)
    assert law.as_dict() == ref


def test_conditional_csv():
    text = exact_conditional([BINARY] * 2, 2, 1, 2).to_csv().splitlines()
    assert text[0] == "k,probability_exact,probability,provenance,sample_size"
    assert text[2].startswith("1,4/9,")


def test_empirical_identity():
    log = run(RunConfig([IDENTITY] * 3, boxes=2000, seed=5))
    assert empirical_conditional(log, 1, 1).as_dict() == {1: 1.0}


def test_insufficient_samples():
    log = run(RunConfig([BINARY] * 2, boxes=100, seed=5))
    with pytest.raises(InsufficientSamplesError):
        empirical_conditional(log, 1, 2)


def test_bgw_identity_path():
    tree = bgw_conditioned_sample([IDENTITY] * 3, 3, 1, make_rng(1))
    assert ancestor_counts(tree) == [1, 1, 1, 1]


def test_bgw_budget_exhaustion():
    with pytest.raises(BudgetExceededError):
        bgw_conditioned_sample([BINARY] * 2, 2, 7, make_rng(1), budget=500)
    with pytest.raises(BudgetExceededError):
        bgw_conditional([BINARY] * 2, 2, 1, 7, make_rng(1), accepted=10, budget=500)


def test_bgw_tree_leaves():
    rng = make_rng(3)
    for _ in range(20):
        tree = bgw_conditioned_sample([BINARY] * 3, 3, 2, rng)
        assert tree.root.size == 2 and tree.leaves_at_depth(3) == 2


def test_exports():
    tree = extract_tree(replay(FIG1), 4)
    d = json.loads(tree.to_json())
    assert d["size"] == 5 and d["M"] == 2 and len(d["children"]) == 2
    dot = tree.to_dot()
    assert dot.startswith("digraph ancestry {") and dot.count("->") == sum(
        len(layer) for layer in tree.nodes_by_depth()[1:]
    )


def test_ancestor_count_array_rejects_bad_nu():
    with pytest.raises(ValueError):
        ancestor_count_array(replay(FIG1), 4)
    assert np.array_equal(ancestor_count_array(replay(FIG1), 0), np.ones(5, dtype=np.int64))
