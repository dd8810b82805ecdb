"""Circuit flows over packed bit-vectors.

Samples are packed 64 per machine word. The up pass computes, per node, the
set of samples on which it is non-zero; the down pass pushes the root's
support back down and records which samples traverse each sum edge. In a
deterministic circuit each sample takes at most one outgoing edge per sum
node, so the flow of a batch is a boolean |D| x |theta| matrix.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .circuit import LITERAL, PRODUCT, Circuit, check_structure
from .dataset import Dataset

__all__ = [
    "FlowMatrix",
    "pack_bits",
    "unpack_bits",
    "compute_flows",
    "log_likelihood",
    "aggregate_flows",
    "mle_parameters",
    "mixture_log_likelihood",
    "flow_pass_count",
]

WORD_BITS = 64
DEFAULT_BLOCK = 1 << 16

_flow_passes = 0


def flow_pass_count() -> int:
    """Number of :func:`compute_flows` calls so far in this process."""
    return _flow_passes


def pack_bits(columns: np.ndarray) -> np.ndarray:
    """Pack a (rows, n) boolean array into (rows, ceil(n/64)) uint64 words, sample 0 in bit 0."""
    columns = np.atleast_2d(np.asarray(columns, dtype=np.bool_))
    rows, n = columns.shape
    words = max(1, -(-n // WORD_BITS))
    padded = np.zeros((rows, words * WORD_BITS), dtype=np.bool_)
    padded[:, :n] = columns
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64)


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    words = np.ascontiguousarray(np.atleast_2d(words))
    return np.unpackbits(words.view(np.uint8), axis=1, bitorder="little", count=n).astype(np.bool_)


class FlowMatrix:
    """Packed flows: ``bits[k]`` holds, for parameter ``k``, the samples that
    traverse its edge. ``root`` holds the samples with non-zero probability."""

    def __init__(self, bits: np.ndarray, root: np.ndarray, sample_count: int):
        self.bits = bits
        self.root = root
        self.sample_count = sample_count
        bits.setflags(write=False)
        root.setflags(write=False)

    @property
    def num_params(self) -> int:
        return self.bits.shape[0]

    def edge_samples(self, k: int) -> np.ndarray:
        """Boolean mask of the samples flowing through parameter ``k``."""
        return unpack_bits(self.bits[k], self.sample_count)[0]

    def reached(self) -> np.ndarray:
        return unpack_bits(self.root, self.sample_count)[0]

    def dense(self) -> np.ndarray:
        """Unpacked |D| x |theta| boolean matrix (tests and small circuits)."""
        return unpack_bits(self.bits, self.sample_count).T

    def counts(self) -> np.ndarray:
        """Unweighted aggregate flow per parameter (popcount of each row)."""
        return np.bitwise_count(self.bits).sum(axis=1, dtype=np.int64).astype(np.float64)

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        """The flow matrix as a |D| x |theta| CSR matrix of ones."""
        rows, cols = [], []
        chunk = max(1, (1 << 24) // max(self.sample_count, 1))
        for start in range(0, self.num_params, chunk):
            block = unpack_bits(self.bits[start : start + chunk], self.sample_count)
            k, h = np.nonzero(block)
            rows.append(h)
            cols.append(k + start)
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        data = np.ones(rows.shape[0])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.sample_count, self.num_params))


def _literal_words(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    pos = pack_bits(d.samples.T)
    valid = pack_bits(np.ones((1, d.num_samples), dtype=np.bool_))[0]
    neg = ~pos & valid
    return pos, neg


def _flow_block(c: Circuit, pos: np.ndarray, neg: np.ndarray):
    words = pos.shape[1]
    n = c.num_nodes
    sup = np.empty((n, words), dtype=np.uint64)
    kind, children, literal = c.kind, c.children, c.literal
    band, bor = np.bitwise_and, np.bitwise_or
    for i in range(n):
        k = kind[i]
        if k == LITERAL:
            lit = literal[i]
            sup[i] = pos[lit - 1] if lit > 0 else neg[-lit - 1]
        elif k == PRODUCT:
            a, b = children[i]
            band(sup[a], sup[b], out=sup[i])
        else:
            ch = children[i]
            sup[i] = sup[ch[0]]
            for x in ch[1:]:
                bor(sup[i], sup[x], out=sup[i])

    flow = np.zeros((n, words), dtype=np.uint64)
    edges = np.zeros((c.num_params, words), dtype=np.uint64)
    flow[c.root] = sup[c.root]
    offset = c.param_offset
    for i in range(n - 1, -1, -1):
        k = kind[i]
        if k == LITERAL:
            continue
        f = flow[i]
        if k == PRODUCT:
            a, b = children[i]
            bor(flow[a], f, out=flow[a])
            bor(flow[b], f, out=flow[b])
        else:
            o = offset[i]
            for j, x in enumerate(children[i]):
                e = edges[o + j]
                band(f, sup[x], out=e)
                bor(flow[x], e, out=flow[x])
    return edges, sup[c.root].copy()


def compute_flows(
    c: Circuit,
    d: Dataset,
    block_size: int = DEFAULT_BLOCK,
    threads: int = 1,
    check: bool = False,
) -> FlowMatrix:
    """Flow matrix of ``d`` through the deterministic circuit ``c``.

    Rows are processed in blocks of ``block_size`` samples (rounded up to a
    multiple of 64), optionally on several threads; the output is identical
    for any blocking.
    """
    global _flow_passes
    if d.num_vars != c.num_vars:
        raise ValueError(f"dataset has {d.num_vars} variables, circuit has {c.num_vars}")
    if check:
        report = check_structure(c)
        if not report.deterministic:
            raise ValueError(f"flows require a deterministic circuit: {report.first_violation}")
    _flow_passes += 1
    pos, neg = _literal_words(d)
    words = pos.shape[1]
    step = max(1, -(-block_size // WORD_BITS))
    spans = [(s, min(s + step, words)) for s in range(0, words, step)]

    def run(span):
        s, e = span
        return _flow_block(c, pos[:, s:e], neg[:, s:e])

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(span) for span in spans]
    bits = np.concatenate([p[0] for p in parts], axis=1)
    root = np.concatenate([p[1] for p in parts])
    return FlowMatrix(bits, root, d.num_samples)


def log_likelihood(c: Circuit, f: FlowMatrix, weights=None) -> tuple[np.ndarray, float]:
    """Per-sample log-likelihoods ``F @ log(theta)`` and their (weighted) sum."""
    per_sample = f.sparse @ c.log_theta
    per_sample[~f.reached()] = -np.inf
    w = np.ones(f.sample_count) if weights is None else np.asarray(weights, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        total = float(np.sum(np.where(w > 0, w * per_sample, 0.0)))
    return per_sample, total


def aggregate_flows(f: FlowMatrix, weights=None) -> np.ndarray:
    """Aggregate flow per parameter: column sums of F, optionally weighted.

    ``weights`` may be a vector (one weight per sample) or a |D| x k matrix,
    giving one column of counts per weighting.
    """
    if weights is None:
        return f.counts()
    w = np.asarray(weights, dtype=np.float64)
    return np.asarray(f.sparse.T @ w)


def node_totals(c: Circuit, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter total flow of the owning sum node and that node's edge count."""
    starts = c.param_offset[c.sum_nodes]
    per_node = np.add.reduceat(counts, starts, axis=0)
    sizes = np.diff(np.append(starts, c.num_params))
    return np.repeat(per_node, sizes, axis=0), np.repeat(sizes, sizes)


def mle_log_params(c: Circuit, counts: np.ndarray, pseudocount: float = 0.0) -> np.ndarray:
    """Closed-form (smoothed) MLE log-parameters; ``counts`` may have k columns.

    Sum nodes without flow and without pseudocounts get uniform weights.
    """
    if pseudocount < 0:
        raise ValueError("pseudocount must be non-negative")
    counts = np.asarray(counts, dtype=np.float64)
    totals, sizes = node_totals(c, counts)
    if counts.ndim == 2:
        sizes = sizes[:, None]
    num = counts + pseudocount
    den = totals + sizes * pseudocount
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0 / sizes)
        return np.log(theta)


def mle_parameters(c: Circuit, counts: np.ndarray, pseudocount: float = 0.0) -> Circuit:
    return c.with_params(mle_log_params(c, counts, pseudocount))


def mixture_log_likelihood(
    structure: Circuit, log_params: np.ndarray, log_weights: np.ndarray, f: FlowMatrix
) -> np.ndarray:
    """Per-sample log-likelihood of a shared-structure mixture.

    ``log_params`` is |theta| x k (one column per component); one flow matrix
    serves every component: ``logsumexp(F @ log_params + log_weights)``.
    """
    log_params = np.asarray(log_params, dtype=np.float64)
    if log_params.ndim == 1:
        log_params = log_params[:, None]
    log_weights = np.atleast_1d(np.asarray(log_weights, dtype=np.float64))
    if log_params.shape[1] == 0 or log_weights.shape[0] == 0:
        raise ValueError("mixture needs at least one component")
    if log_params.shape != (structure.num_params, log_weights.shape[0]):
        raise ValueError(
            f"expected parameters of shape ({structure.num_params}, {log_weights.shape[0]}), got {log_params.shape}"
        )
    comp = component_log_likelihoods(log_params, f)
    out = logsumexp(comp + log_weights[None, :], axis=1)
    return out


def component_log_likelihoods(log_params: np.ndarray, f: FlowMatrix) -> np.ndarray:
    """|D| x k matrix of per-component log-likelihoods from one flow matrix."""
    comp = np.asarray(f.sparse @ log_params)
    comp[~f.reached()] = -np.inf
    return comp
