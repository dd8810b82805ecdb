import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import all_assignments, chain_rule_prob, example_tree, labeled_trees, table_mi, tree_train_ll
from sdpc.cltree import (
    ChowLiuTree,
    estimate_cpts,
    estimate_mi,
    learn_clt,
    maximum_spanning_tree,
    orient_tree,
    root_at_jordan_center,
)
from sdpc.dataset import Dataset
from sdpc.synthetic import random_clt, random_tree_parents


def test_mi_independent_columns_is_zero():
    d = Dataset(np.array([[0, 0], [0, 1], [1, 0], [1, 1]]))
    assert estimate_mi(d, 0.0)[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_mi_identical_fair_columns_is_log2():
    d = Dataset(np.array([[0, 0], [1, 1], [0, 0], [1, 1]]))
    assert estimate_mi(d, 0.0)[0, 1] == pytest.approx(math.log(2), abs=1e-12)


def test_mi_zero_cells_without_smoothing():
    d = Dataset(np.array([[1, 1], [1, 1]]))
    mi = estimate_mi(d, 0.0)
    assert np.isfinite(mi).all() and mi[0, 1] == 0.0


def test_mi_matches_count_table(rng):
    x = rng.random((8, 3)) < 0.5
    mi = estimate_mi(Dataset(x), 1.0)
    for i, j in itertools.combinations(range(3), 2):
        assert mi[i, j] == pytest.approx(table_mi(x, i, j, 1.0), abs=1e-12)


def test_mi_weighted_equals_repeated_rows(rng):
    x = rng.random((20, 5)) < 0.4
    reps = rng.integers(1, 4, size=20)
    weighted = estimate_mi(Dataset(x, reps.astype(float)), 1.0)
    repeated = estimate_mi(Dataset(np.repeat(x, reps, axis=0)), 1.0)
    assert np.allclose(weighted, repeated, atol=1e-12)


def test_mi_rejects_negative_alpha():
    with pytest.raises(ValueError):
        estimate_mi(Dataset(np.zeros((2, 2))), -1.0)


@given(arrays(np.bool_, st.tuples(st.integers(1, 25), st.integers(2, 6))), st.sampled_from([0.0, 0.5, 1.0]))
def test_mi_symmetric_and_row_order_invariant(x, alpha):
    mi = estimate_mi(Dataset(x), alpha)
    assert np.array_equal(mi, mi.T)
    assert (mi >= 0).all() and (np.diag(mi) == 0).all()
    perm = np.random.default_rng(len(x)).permutation(len(x))
    assert np.allclose(estimate_mi(Dataset(x[perm]), alpha), mi, atol=1e-13)


def test_mst_single_variable():
    assert maximum_spanning_tree(np.zeros((1, 1))) == []


def test_mst_forced_by_weights():
    mi = np.array([[0, 0.5, 0.3], [0.5, 0, 0.1], [0.3, 0.1, 0]])
    edges = maximum_spanning_tree(mi)
    assert sorted(edges) == [(0, 1), (0, 2)]
    assert sum(mi[e] for e in edges) == pytest.approx(0.8)


def test_mst_ties_prefer_smaller_pairs():
    assert sorted(maximum_spanning_tree(np.ones((3, 3)))) == [(0, 1), (0, 2)]


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_mst_matches_enumeration_on_five_vertices(seed):
    r = np.random.default_rng(seed).random((5, 5))
    mi = r + r.T
    best = max(sum(mi[e] for e in t) for t in labeled_trees(5))
    assert sum(mi[e] for e in maximum_spanning_tree(mi)) == pytest.approx(best, abs=1e-12)


def test_pruefer_counts():
    assert [len(list(labeled_trees(m))) for m in (2, 3, 4, 5)] == [1, 3, 16, 125]


def test_jordan_center_paths_and_star():
    assert root_at_jordan_center([(0, 1), (1, 2), (2, 3), (3, 4)]) == 2
    assert root_at_jordan_center([(0, 1), (1, 2), (2, 3)]) == 1
    assert root_at_jordan_center([(3, 0), (3, 1), (3, 2), (3, 4)]) == 3
    assert root_at_jordan_center([], 1) == 0


def test_orient_tree():
    assert orient_tree([(0, 1), (1, 2)], 1, 3) == [1, -1, 1]
    with pytest.raises(ValueError):
        orient_tree([(0, 1)], 0, 3)


def test_example_tree_joint():
    t = example_tree()
    assert math.exp(t.log_prob([1, 0, 1, 0])[0]) == pytest.approx(0.6 * 0.8 * 0.1 * 0.4, abs=1e-15)


def test_single_variable_frequency():
    t = learn_clt(Dataset(np.array([[1], [1], [0]])), 0.0)
    assert t.root == 0 and t.cpt[0, 0] == pytest.approx(2 / 3)


def test_cpt_smoothing_formula():
    x = np.array([[1, 1], [1, 0], [0, 0], [1, 1]], dtype=bool)
    cpt = estimate_cpts(Dataset(x), [-1, 0], 1.0)
    assert cpt[0, 0] == pytest.approx((3 + 1) / (4 + 2))
    assert cpt[1, 1] == pytest.approx((2 + 1) / (3 + 2))
    assert cpt[1, 0] == pytest.approx((0 + 1) / (1 + 2))


def test_unseen_parent_value_without_smoothing():
    x = np.array([[1, 1], [1, 0]], dtype=bool)
    assert estimate_cpts(Dataset(x), [-1, 0], 0.0)[1, 0] == 0.5


def test_invalid_tree_rejected():
    with pytest.raises(ValueError):
        ChowLiuTree(0, (-1, 2, 1), np.full((3, 2), 0.5))
    with pytest.raises(ValueError):
        ChowLiuTree(0, (1, 0), np.full((2, 2), 0.5))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_learned_tree_is_exact_maximum_likelihood_without_smoothing(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((int(rng.integers(4, 65)), 4)) < rng.uniform(0.2, 0.8, size=4)
    d = Dataset(x)
    ll = float(learn_clt(d, 0.0).log_prob(x).sum())
    assert all(ll >= tree_train_ll(d, t, 0.0) - 1e-9 for t in labeled_trees(4))


@settings(max_examples=20)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_joint_sums_to_one(m, seed):
    t = random_clt(m, np.random.default_rng(seed))
    assert np.exp(t.log_prob(all_assignments(m))).sum() == pytest.approx(1.0, abs=1e-12)


def test_log_prob_matches_chain_rule(rng):
    t = random_clt(6, rng)
    for x in all_assignments(6)[::7]:
        assert math.exp(t.log_prob(x)[0]) == pytest.approx(chain_rule_prob(t, x), rel=1e-12)


def test_learn_recovers_generating_tree(rng):
    from sdpc.synthetic import sample_clt

    root, parent = random_tree_parents(8, rng)
    cpt = np.where(rng.random((8, 2)) < 0.5, 0.1, 0.9)
    cpt[:, 1] = 1 - cpt[:, 0]  # strong dependence on every edge
    cpt[root] = 0.5
    truth = ChowLiuTree(root, tuple(parent), cpt)
    learned = learn_clt(Dataset(sample_clt(truth, 20000, rng)), 1.0)
    undirected = lambda t: {tuple(sorted((v, p))) for v, p in enumerate(t.parent) if p >= 0}
    assert undirected(learned) == undirected(truth)
