"""Greedy structure search by repeated splits."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .circuit import LITERAL, PRODUCT, SUM, Circuit, compile_clt
from .cltree import ChowLiuTree, estimate_mi, learn_clt
from .dataset import Dataset
from .flows import FlowMatrix, aggregate_flows, compute_flows, log_likelihood, mle_parameters
from .vtree import Vtree, vtree_from_clt

log = logging.getLogger(__name__)

HEURISTICS = ("eflow-vmi", "eflow-vrand", "erand-vmi", "erand-vrand")


class SearchExhausted(Exception):
    """No sum->product edge has a variable left to split on."""


@dataclass
class SearchConfig:
    heuristic: str = "eflow-vmi"
    depth_bound: int = 1
    patience: int = 100
    max_iters: int = 10000
    seed: int = 1337
    pseudocount: float = 1.0
    alpha: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}, got {self.heuristic!r}")
        if self.depth_bound < 1:
            raise ValueError("depth_bound must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    @property
    def edge_rule(self) -> str:
        return self.heuristic.split("-")[0]

    @property
    def var_rule(self) -> str:
        return self.heuristic.split("-")[1]


@dataclass(frozen=True)
class SplitCandidate:
    node: int
    child: int
    variable: int
    score: float = float("nan")


# candidates and scores ---------------------------------------------------------


def free_variables(c: Circuit, node: int) -> list[int]:
    """Scope variables of ``node`` not already fixed by its implied literals."""
    pos, neg = c.implied_literals[node]
    mask = c.scopes[node] & ~(pos | neg)
    out, v = [], 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return out


def candidate_edges(c: Circuit) -> np.ndarray:
    """Parameter indices of sum->product edges whose product has a free variable."""
    out = []
    for k, (n, ch) in enumerate(zip(c.edge_parent.tolist(), c.edge_child.tolist())):
        if c.kind[ch] == PRODUCT and free_variables(c, ch):
            out.append(k)
    return np.array(out, dtype=np.int64)


def score_edge_eflow(c: Circuit, counts: np.ndarray, candidates=None) -> int:
    """Eligible edge with the largest aggregate flow; ties go to the smallest
    (sum node, child) pair. Returns the parameter index of the edge."""
    cand = candidate_edges(c) if candidates is None else np.asarray(candidates)
    if cand.size == 0:
        raise SearchExhausted("no splittable edge")
    order = np.lexsort((c.edge_child[cand], c.edge_parent[cand], -np.asarray(counts)[cand]))
    return int(cand[order[0]])


def vmi_scores(c: Circuit, child: int, d: Dataset, rows, alpha: float = 1.0) -> dict[int, float]:
    """Summed pairwise MI of each scope variable of ``child`` against the rest,
    estimated on ``rows`` of ``d`` (all rows when that subset is empty)."""
    scope = [v for v in range(c.num_vars) if c.scopes[child] >> v & 1]
    sub = d.subset(rows) if np.any(rows) else d
    mi = estimate_mi(Dataset(sub.samples[:, scope], sub.weights), alpha)
    totals = mi.sum(axis=1)
    return {v: float(s) for v, s in zip(scope, totals)}


def score_var_vmi(c: Circuit, edge: int, d: Dataset, flows: FlowMatrix, alpha: float = 1.0) -> int:
    child = int(c.edge_child[edge])
    scores = vmi_scores(c, child, d, flows.edge_samples(edge), alpha)
    free = free_variables(c, child)
    best = max(free, key=lambda v: (scores[v], -v))
    return best


def score_random(candidates, rng: np.random.Generator):
    """Uniform choice from a non-empty sequence."""
    if len(candidates) == 0:
        raise SearchExhausted("empty candidate set")
    return candidates[int(rng.integers(len(candidates)))]


# split ---------------------------------------------------------------------------


class _Editor:
    """Node arrays of an existing circuit plus appended nodes."""

    def __init__(self, c: Circuit):
        self.c = c
        self.kind = list(c.kind)
        self.literal = list(c.literal)
        self.children = list(c.children)
        self.vtree = list(c.vtree)
        self.weights = {int(i): list(c.params_of(i)) for i in c.sum_nodes}
        self.scope = list(c.scopes)

    def add(self, kind, literal, children, vtree, scope, weights=None):
        self.kind.append(kind)
        self.literal.append(literal)
        self.children.append(tuple(children))
        self.vtree.append(vtree)
        self.scope.append(scope)
        i = len(self.kind) - 1
        if kind == SUM:
            self.weights[i] = list(weights)
        return i

    def copy_shallow(self, node, children):
        if self.kind[node] == SUM:
            return self.add(SUM, 0, children, self.vtree[node], self.scope[node], self.weights[node])
        return self.add(self.kind[node], 0, children, self.vtree[node], self.scope[node])

    def finish(self) -> Circuit:
        """Renumber reachable nodes in children-first DFS order from the root."""
        root = self.c.root
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            stack.append((node, True))
            for ch in reversed(self.children[node]):
                if ch not in seen:
                    stack.append((ch, False))
        remap = {old: new for new, old in enumerate(order)}
        kind = [self.kind[i] for i in order]
        literal = [self.literal[i] for i in order]
        children = [tuple(remap[x] for x in self.children[i]) for i in order]
        vtree = [self.vtree[i] for i in order]
        log_theta = [w for i in order if self.kind[i] == SUM for w in self.weights[i]]
        return Circuit(kind, literal, children, vtree, log_theta, self.c.num_vars)


def _condition(ed: _Editor, top: int, var: int, value: int, depth_bound: int):
    """Copy of ``top`` restricted to ``X_var = value``.

    Nodes mentioning the variable are always copied (sums drop branches
    incompatible with the value and renormalize); other nodes are duplicated
    only within ``depth_bound`` of ``top`` and shared below it. Returns
    ``(node, log_mass)`` with ``log_mass = log p_top(X_var = value)``, or
    ``(None, -inf)`` when the restriction is empty.
    """
    bit = 1 << var
    scope = ed.scope
    # distance from top through nodes containing the variable
    dist = {top: 0}
    frontier = [top]
    while frontier:
        nxt = []
        for n in frontier:
            for ch in ed.children[n]:
                if scope[ch] & bit and ch not in dist:
                    dist[ch] = dist[n] + 1
                    nxt.append(ch)
        frontier = nxt

    copies: dict[tuple[int, int], int] = {}

    def depth_copy(node, depth):
        if depth > depth_bound or ed.kind[node] == LITERAL:
            return node
        key = (node, depth)
        if key not in copies:
            kids = tuple(depth_copy(ch, depth + 1) for ch in ed.children[node])
            if ed.kind[node] == PRODUCT and kids == ed.children[node]:
                copies[key] = node
            else:
                copies[key] = ed.copy_shallow(node, kids)
        return copies[key]

    result: dict[int, tuple[int | None, float]] = {}
    # dist only holds original nodes, whose ids are already topological
    for node in sorted(dist):
        k = ed.kind[node]
        if k == LITERAL:
            ok = (ed.literal[node] > 0) == bool(value)
            result[node] = (node, 0.0) if ok else (None, -np.inf)
        elif k == PRODUCT:
            kids, mass, empty = [], 0.0, False
            for ch in ed.children[node]:
                if scope[ch] & bit:
                    r, mass = result[ch]
                    if r is None:
                        empty = True
                    kids.append(r)
                else:
                    kids.append(depth_copy(ch, dist[node] + 1))
            if empty:
                result[node] = (None, -np.inf)
            else:
                result[node] = (ed.add(PRODUCT, 0, kids, ed.vtree[node], scope[node]), mass)
        else:
            kids, logw = [], []
            for ch, w in zip(ed.children[node], ed.weights[node]):
                r, mass = result[ch]
                if r is not None:
                    kids.append(r)
                    logw.append(w + mass)
            if not kids:
                result[node] = (None, -np.inf)
                continue
            logw = np.array(logw)
            total = logsumexp(logw) if np.isfinite(logw).any() else -np.inf
            if np.isfinite(total):
                new_w = logw - total
            else:
                new_w = np.full(len(kids), -np.log(len(kids)))
            result[node] = (ed.add(SUM, 0, kids, ed.vtree[node], scope[node], new_w.tolist()), float(total))
    return result[top]


def split(
    c: Circuit,
    edge: tuple[int, int],
    variable: int,
    depth_bound: int = 1,
    data: Dataset | None = None,
    pseudocount: float = 1.0,
) -> Circuit:
    """Replace product ``edge[1]`` under sum ``edge[0]`` by two partial copies
    conditioned on ``X_variable = 1`` and ``X_variable = 0``.

    Without ``data`` the new parameters reproduce the original distribution
    exactly; with ``data`` every sum node is refit by closed-form MLE.
    """
    node, child = edge
    if c.kind[node] != SUM or child not in c.children[node]:
        raise ValueError(f"({node}, {child}) is not a sum->child edge")
    if c.kind[child] != PRODUCT:
        raise ValueError(f"edge child {child} is not a product node")
    if not c.scopes[child] >> variable & 1:
        raise ValueError(f"variable {variable} is not in the scope of node {child}")
    if variable not in free_variables(c, child):
        raise ValueError(f"variable {variable} is already fixed in node {child}")
    ed = _Editor(c)
    pos_node, pos_mass = _condition(ed, child, variable, 1, depth_bound)
    neg_node, neg_mass = _condition(ed, child, variable, 0, depth_bound)
    kids, weights = [], []
    for ch, w in zip(c.children[node], ed.weights[node]):
        if ch == child:
            kids += [pos_node, neg_node]
            weights += [w + pos_mass, w + neg_mass]
        else:
            kids.append(ch)
            weights.append(w)
    ed.children[node] = tuple(kids)
    ed.weights[node] = weights
    out = ed.finish()
    if data is not None:
        flows = compute_flows(out, data)
        out = mle_parameters(out, aggregate_flows(flows, data.weights), pseudocount)
    return out


# learning loop -------------------------------------------------------------------


def total_log_likelihood(c: Circuit, f: FlowMatrix, d: Dataset) -> float:
    """Total (weighted) log-likelihood of ``d`` from its flows."""
    if d.weights is not None:
        return log_likelihood(c, f, d.weights)[1]
    if np.bitwise_count(f.root).sum() < f.sample_count:
        return -np.inf
    counts = f.counts()
    used = counts > 0
    return float(counts[used] @ c.log_theta[used])


@dataclass
class IterationLog:
    iteration: int
    train_ll: float
    valid_ll: float
    size: int
    seconds: float
    edge: tuple[int, int] | None = None
    variable: int | None = None


@dataclass
class LearnResult:
    circuit: Circuit
    vtree: Vtree
    clt: ChowLiuTree
    best_iteration: int
    history: list[IterationLog] = field(default_factory=list)


def choose_split(c: Circuit, flows: FlowMatrix, d: Dataset, cfg: SearchConfig, rng) -> SplitCandidate:
    cand = candidate_edges(c)
    if cand.size == 0:
        raise SearchExhausted("no splittable edge")
    counts = aggregate_flows(flows, d.weights)
    if cfg.edge_rule == "eflow":
        edge = score_edge_eflow(c, counts, cand)
    else:
        edge = int(score_random(cand, rng))
    node, child = int(c.edge_parent[edge]), int(c.edge_child[edge])
    if cfg.var_rule == "vmi":
        var = score_var_vmi(c, edge, d, flows, cfg.alpha)
    else:
        var = int(score_random(free_variables(c, child), rng))
    return SplitCandidate(node, child, var, float(counts[edge]))


def initial_circuit(train: Dataset, alpha: float = 1.0):
    clt = learn_clt(train, alpha)
    vt = vtree_from_clt(clt)
    return clt, vt, compile_clt(clt, vt)


def learn_circuit(train: Dataset, valid: Dataset | None, cfg: SearchConfig | None = None, callback=None) -> LearnResult:
    """Learn a structured-decomposable circuit: CLT init, then greedy splits
    with MLE refits until validation LL stops improving for ``cfg.patience``
    iterations or ``cfg.max_iters`` is reached. Returns the best-validation
    circuit (best-training when ``valid`` is None)."""
    cfg = cfg or SearchConfig()
    if valid is not None and valid.num_vars != train.num_vars:
        raise ValueError("train and valid datasets have different variable counts")
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    clt, vt, circ = initial_circuit(train, cfg.alpha)
    f_train = compute_flows(circ, train, threads=cfg.threads)

    def score(circ, f_train):
        tr = total_log_likelihood(circ, f_train, train) / train.total_weight()
        if valid is None:
            return tr, tr
        f_valid = compute_flows(circ, valid, threads=cfg.threads)
        return tr, total_log_likelihood(circ, f_valid, valid) / valid.total_weight()

    tr, va = score(circ, f_train)
    history = [IterationLog(0, tr, va, circ.num_edges(), time.perf_counter() - start)]
    if callback:
        callback(history[-1], circ)
    best, best_ll, best_it, stale = circ, va, 0, 0
    for it in range(1, cfg.max_iters + 1):
        try:
            cand = choose_split(circ, f_train, train, cfg, rng)
        except SearchExhausted:
            log.info("search exhausted at iteration %d", it)
            break
        circ = split(circ, (cand.node, cand.child), cand.variable, cfg.depth_bound)
        f_train = compute_flows(circ, train, threads=cfg.threads)
        circ = mle_parameters(circ, aggregate_flows(f_train, train.weights), cfg.pseudocount)
        tr, va = score(circ, f_train)
        entry = IterationLog(
            it, tr, va, circ.num_edges(), time.perf_counter() - start, (cand.node, cand.child), cand.variable
        )
        history.append(entry)
        if callback:
            callback(entry, circ)
        if va > best_ll:
            best, best_ll, best_it, stale = circ, va, it, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("no validation improvement for %d iterations; stopping at %d", stale, it)
                break
    return LearnResult(best, vt, clt, best_it, history)
