import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import example_circuit, random_compiled, reference_flow
from sdpc.circuit import LITERAL, CircuitBuilder, evaluate_classical
from sdpc.dataset import Dataset
from sdpc.flows import (
    aggregate_flows,
    compute_flows,
    flow_pass_count,
    log_likelihood,
    mixture_log_likelihood,
    mle_log_params,
    mle_parameters,
    pack_bits,
    unpack_bits,
)

seeds = st.integers(0, 2**32 - 1)


def literal_sum(p1=0.5):
    b = CircuitBuilder(1)
    pos, neg = b.literal_node(0, True, 0), b.literal_node(0, False, 0)
    b.sum((pos, neg), (math.log(p1), math.log(1 - p1)), 0)
    return b.build()


@given(st.integers(1, 5), st.integers(0, 200), seeds)
def test_pack_unpack_round_trip(rows, n, seed):
    x = np.random.default_rng(seed).random((rows, n)) < 0.5
    words = pack_bits(x)
    assert words.dtype == np.uint64 and words.shape[1] == max(1, -(-n // 64))
    assert np.array_equal(unpack_bits(words, n), x)


def test_literal_sum_flows():
    f = compute_flows(literal_sum(), Dataset(np.array([[1], [1], [0]])))
    assert f.dense().T.tolist() == [[True, True, False], [False, False, True]]
    assert aggregate_flows(f).tolist() == [2.0, 1.0]


def test_literal_sum_log_likelihood():
    c = literal_sum(2 / 3)
    f = compute_flows(c, Dataset(np.array([[1], [1], [0]])))
    _, total = log_likelihood(c, f)
    assert total == pytest.approx(2 * math.log(2 / 3) + math.log(1 / 3), abs=1e-12)


def test_example_tree_flow_path():
    c, _ = example_circuit()
    f = compute_flows(c, Dataset(np.array([[1, 0, 1, 0]])))
    active = np.flatnonzero(f.dense()[0])
    # one edge per sum on the path: X4=0, X3=1 given X4=0, X1=1 and X2=0 given X3=1
    assert len(active) == 4
    lits = [c.literal[c.edge_child[k]] for k in active if c.kind[c.edge_child[k]] == LITERAL]
    assert sorted(lits) == [-2, 1]
    assert np.array_equal(f.dense()[0], reference_flow(c, [1, 0, 1, 0]))
    assert math.exp(log_likelihood(c, f)[0][0]) == pytest.approx(0.0192, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(1, 8), seeds)
def test_flows_match_recursive_reference(m, seed):
    rng = np.random.default_rng(seed)
    _, _, c = random_compiled(m, rng)
    x = rng.random((50, m)) < 0.5
    f = compute_flows(c, Dataset(x))
    dense = f.dense()
    for h in range(50):
        assert np.array_equal(dense[h], reference_flow(c, x[h]))


@settings(max_examples=20)
@given(st.integers(1, 8), seeds)
def test_flow_ll_equals_classical(m, seed):
    rng = np.random.default_rng(seed)
    _, _, c = random_compiled(m, rng)
    x = rng.random((100, m)) < 0.5
    per, total = log_likelihood(c, compute_flows(c, Dataset(x)))
    ref = evaluate_classical(c, x)
    assert np.max(np.abs(per - ref)) <= 1e-9
    assert total == pytest.approx(ref.sum(), abs=1e-9)


@settings(max_examples=20)
@given(st.integers(2, 10), seeds)
def test_determinism_and_conservation(m, seed):
    rng = np.random.default_rng(seed)
    _, _, c = random_compiled(m, rng)
    x = rng.random((80, m)) < 0.5
    dense = compute_flows(c, Dataset(x)).dense()
    incoming = np.zeros((80, c.num_nodes), dtype=int)
    incoming[:, c.root] = 1
    for k in range(c.num_params):
        incoming[:, c.edge_child[k]] += dense[:, k]
    for n in c.sum_nodes:
        o = c.param_offset[n]
        out = dense[:, o : o + len(c.children[n])].sum(axis=1)
        assert (out <= 1).all()
        if n == c.root:
            assert np.array_equal(out, incoming[:, n])


def test_sum_flow_conservation_through_products(rng):
    # for sums whose only parents are products, incoming flow = parent's flow
    _, _, c = random_compiled(9, rng)
    x = rng.random((200, 9)) < 0.5
    dense = compute_flows(c, Dataset(x)).dense().astype(int)
    node_flow = np.zeros((200, c.num_nodes), dtype=int)
    node_flow[:, c.root] = 1
    for i in range(c.num_nodes - 1, -1, -1):
        if c.kind[i] == LITERAL:
            continue
        if i in set(c.sum_nodes.tolist()):
            o = c.param_offset[i]
            out = dense[:, o : o + len(c.children[i])]
            assert np.array_equal(out.sum(axis=1), node_flow[:, i])
            for j, ch in enumerate(c.children[i]):
                node_flow[:, ch] |= out[:, j]
        else:
            for ch in c.children[i]:
                node_flow[:, ch] |= node_flow[:, i]


@given(st.integers(1, 400), st.sampled_from([1, 64, 100, 4096]), st.integers(1, 3))
@settings(max_examples=20)
def test_blocking_and_threads_do_not_change_flows(n, block, threads):
    rng = np.random.default_rng(n)
    _, _, c = random_compiled(6, rng)
    d = Dataset(rng.random((n, 6)) < 0.5)
    a = compute_flows(c, d)
    b = compute_flows(c, d, block_size=block, threads=threads)
    assert np.array_equal(a.bits, b.bits) and np.array_equal(a.root, b.root)


def test_weighted_aggregates(rng):
    _, _, c = random_compiled(6, rng)
    x = rng.random((40, 6)) < 0.5
    f = compute_flows(c, Dataset(x))
    w = rng.random(40)
    assert np.allclose(aggregate_flows(f, w), f.dense().T.astype(float) @ w)
    one_hot = np.zeros(40)
    one_hot[7] = 1.0
    assert np.array_equal(aggregate_flows(f, one_hot), f.dense()[7].astype(float))
    cols = rng.random((40, 3))
    assert np.allclose(aggregate_flows(f, cols), f.dense().T.astype(float) @ cols)
    assert np.array_equal(aggregate_flows(f), f.dense().sum(axis=0).astype(float))


def test_mle_simple_counts():
    c = literal_sum()
    assert np.allclose(np.exp(mle_log_params(c, np.array([3.0, 1.0]), 0.0)), [0.75, 0.25])
    assert np.allclose(np.exp(mle_log_params(c, np.array([0.0, 0.0]), 1.0)), [0.5, 0.5])
    assert np.allclose(np.exp(mle_log_params(c, np.array([0.0, 0.0]), 0.0)), [0.5, 0.5])
    with pytest.raises(ValueError):
        mle_log_params(c, np.array([1.0, 1.0]), -1.0)


def test_mle_beats_random_parameters(rng):
    _, _, c = random_compiled(7, rng)
    x = rng.random((300, 7)) < rng.uniform(0.2, 0.8, 7)
    f = compute_flows(c, Dataset(x))
    fitted = mle_parameters(c, aggregate_flows(f), 0.0)
    best = log_likelihood(fitted, f)[1]
    for _ in range(100):
        theta = np.log(rng.dirichlet(np.ones(2), size=len(c.sum_nodes)).ravel())
        assert log_likelihood(c.with_params(theta), f)[1] <= best + 1e-9


def test_mle_parameters_are_normalized(rng):
    _, _, c = random_compiled(8, rng)
    f = compute_flows(c, Dataset(rng.random((30, 8)) < 0.5))
    theta = np.exp(mle_log_params(c, aggregate_flows(f), 0.5))
    for n in c.sum_nodes:
        o = c.param_offset[n]
        assert theta[o : o + len(c.children[n])].sum() == pytest.approx(1.0)


def test_mixture_k1_and_duplicate_columns(rng):
    _, _, c = random_compiled(6, rng)
    f = compute_flows(c, Dataset(rng.random((50, 6)) < 0.5))
    single = log_likelihood(c, f)[0]
    assert np.array_equal(mixture_log_likelihood(c, c.log_theta[:, None], np.zeros(1), f), single)
    two = np.stack([c.log_theta, c.log_theta], axis=1)
    assert np.allclose(mixture_log_likelihood(c, two, np.log([0.5, 0.5]), f), single, atol=1e-12)


def test_mixture_matches_classical_components(rng):
    _, _, c = random_compiled(8, rng)
    x = rng.random((100, 8)) < 0.5
    f = compute_flows(c, Dataset(x))
    params = np.log(np.concatenate([rng.dirichlet([1, 1], size=len(c.sum_nodes)).ravel()[:, None] for _ in range(3)], 1))
    w = rng.dirichlet(np.ones(3))
    explicit = sum(w[i] * np.exp(evaluate_classical(c, x, params[:, i])) for i in range(3))
    assert np.max(np.abs(mixture_log_likelihood(c, params, np.log(w), f) - np.log(explicit))) <= 1e-9
    perm = [2, 0, 1]
    assert np.allclose(
        mixture_log_likelihood(c, params[:, perm], np.log(w[perm]), f),
        mixture_log_likelihood(c, params, np.log(w), f),
        atol=1e-12,
    )


def test_mixture_errors(rng):
    _, _, c = random_compiled(3, rng)
    f = compute_flows(c, Dataset(np.ones((2, 3))))
    with pytest.raises(ValueError):
        mixture_log_likelihood(c, np.zeros((c.num_params, 0)), np.zeros(0), f)
    with pytest.raises(ValueError):
        mixture_log_likelihood(c, np.zeros((c.num_params, 2)), np.zeros(3), f)


def test_unreachable_sample_is_neg_inf():
    b = CircuitBuilder(1)
    b.sum((b.literal_node(0, True, 0),), (0.0,), 0)
    c = b.build()
    f = compute_flows(c, Dataset(np.array([[1], [0]])))
    per, _ = log_likelihood(c, f)
    assert per[0] == 0.0 and per[1] == -np.inf
    assert f.reached().tolist() == [True, False]


def test_rejects_non_deterministic_when_checked():
    from test_circuit import _overlapping_sum

    c, _ = _overlapping_sum()
    with pytest.raises(ValueError, match="deterministic"):
        compute_flows(c, Dataset(np.ones((2, 2))), check=True)


def test_variable_count_mismatch(rng):
    _, _, c = random_compiled(3, rng)
    with pytest.raises(ValueError):
        compute_flows(c, Dataset(np.ones((2, 4))))


def test_pass_counter_increments(rng):
    _, _, c = random_compiled(3, rng)
    before = flow_pass_count()
    compute_flows(c, Dataset(np.ones((2, 3))))
    assert flow_pass_count() == before + 1
