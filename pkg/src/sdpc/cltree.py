"""Chow-Liu trees: smoothed pairwise MI, maximum spanning tree, Jordan-center rooting."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

__all__ = [
    "ChowLiuTree",
    "estimate_mi",
    "maximum_spanning_tree",
    "root_at_jordan_center",
    "orient_tree",
    "learn_clt",
]


def _pair_counts(x: np.ndarray, w: np.ndarray):
    """Weighted joint counts for every variable pair, as four m x m matrices."""
    xf = x.astype(np.float64)
    total = w.sum()
    n11 = xf.T @ (xf * w[:, None])
    c1 = w @ xf
    n10 = c1[:, None] - n11
    n01 = c1[None, :] - n11
    n00 = total - c1[:, None] - c1[None, :] + n11
    return total, n00, n01, n10, n11


def estimate_mi(d: Dataset, alpha: float = 1.0) -> np.ndarray:
    """Pairwise mutual information (nats) from Laplace-smoothed joint estimates.

    Each of the four joint cells of a pair gets ``alpha`` pseudo-counts; the
    marginals are the sums of the smoothed joint. The diagonal is zero.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    total, *cells = _pair_counts(d.samples, d.weight_vector())
    denom = total + 4.0 * alpha
    p = [(c + alpha) / denom for c in cells]  # p00, p01, p10, p11
    p00, p01, p10, p11 = p
    pi = (p00 + p01, p10 + p11)  # marginal of the row variable
    pj = (p00 + p10, p01 + p11)  # marginal of the column variable
    mi = np.zeros_like(p00)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in (0, 1):
            for b in (0, 1):
                pab = p[2 * a + b]
                term = pab * np.log(pab / (pi[a] * pj[b]))
                mi += np.where(pab > 0, term, 0.0)
    # symmetrize away round-off from the two orientations of each pair
    mi = 0.5 * (mi + mi.T)
    np.fill_diagonal(mi, 0.0)
    return np.maximum(mi, 0.0)


def maximum_spanning_tree(mi: np.ndarray) -> list[tuple[int, int]]:
    """Kruskal over edges sorted by (-weight, i, j); returns edges as (i, j), i < j."""
    m = mi.shape[0]
    iu, ju = np.triu_indices(m, k=1)
    order = np.lexsort((ju, iu, -mi[iu, ju]))
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = []
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
            if len(edges) == m - 1:
                break
    return edges


def _adjacency(edges, m):
    adj = [[] for _ in range(m)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _bfs_dist(adj, src):
    dist = [-1] * len(adj)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def root_at_jordan_center(edges, num_vars: int | None = None) -> int:
    """Vertex of minimum eccentricity; the smaller index wins a two-center tie."""
    if num_vars is None:
        num_vars = 1 + max((max(e) for e in edges), default=0)
    adj = _adjacency(edges, num_vars)
    best, best_ecc = 0, None
    for v in range(num_vars):
        ecc = max(_bfs_dist(adj, v))
        if best_ecc is None or ecc < best_ecc:
            best, best_ecc = v, ecc
    return best


def orient_tree(edges, root: int, num_vars: int) -> list[int]:
    """Parent array (-1 at the root) for an undirected tree."""
    adj = _adjacency(edges, num_vars)
    parent = [-2] * num_vars
    parent[root] = -1
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if parent[v] == -2:
                parent[v] = u
                queue.append(v)
    if -2 in parent:
        raise ValueError("edges do not span all variables")
    return parent


@dataclass(frozen=True, eq=False)
class ChowLiuTree:
    """Rooted tree BN over binary variables.

    ``cpt[i, v]`` is p(X_i = 1 | X_parent = v); the root row holds its
    marginal in both columns.
    """

    root: int
    parent: tuple[int, ...]
    cpt: np.ndarray

    def __post_init__(self):
        m = len(self.parent)
        cpt = np.array(self.cpt, dtype=np.float64)
        if cpt.ndim == 1:
            cpt = np.stack([cpt, cpt], axis=1)
        if cpt.shape != (m, 2):
            raise ValueError(f"cpt must have shape ({m}, 2)")
        if self.parent[self.root] != -1:
            raise ValueError("root must have parent -1")
        object.__setattr__(self, "parent", tuple(int(p) for p in self.parent))
        object.__setattr__(self, "cpt", cpt)
        # acyclicity: every node reaches the root
        for v in range(m):
            seen = 0
            u = v
            while u != self.root:
                u = self.parent[u]
                seen += 1
                if u < 0 or seen > m:
                    raise ValueError("parent links do not form a tree rooted at root")

    @property
    def num_vars(self) -> int:
        return len(self.parent)

    def children(self) -> list[list[int]]:
        ch = [[] for _ in range(self.num_vars)]
        for v, p in enumerate(self.parent):
            if p >= 0:
                ch[p].append(v)
        return ch

    def log_prob(self, x) -> np.ndarray:
        """Chain-rule log-probability of each row of ``x`` (1-d input allowed)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        out = np.zeros(x.shape[0])
        for i, p in enumerate(self.parent):
            pv = x[:, p] if p >= 0 else np.zeros(x.shape[0], dtype=np.int64)
            p1 = self.cpt[i, pv]
            with np.errstate(divide="ignore"):
                out += np.log(np.where(x[:, i] == 1, p1, 1.0 - p1))
        return out


def estimate_cpts(d: Dataset, parent, alpha: float) -> np.ndarray:
    x = d.samples
    w = d.weight_vector()
    total = w.sum()
    cpt = np.empty((x.shape[1], 2))
    for i, p in enumerate(parent):
        ones = w @ x[:, i]
        if p < 0:
            cpt[i, :] = (ones + alpha) / (total + 2 * alpha)
            continue
        for v in (0, 1):
            mask = x[:, p] == bool(v)
            n_pa = w[mask].sum()
            n_joint = w[mask] @ x[mask, i]
            cpt[i, v] = _ratio(n_joint + alpha, n_pa + 2 * alpha)
    return cpt


def _ratio(num, den):
    # unseen parent value with alpha = 0: no evidence, use a fair coin
    return num / den if den > 0 else 0.5


def learn_clt(d: Dataset, alpha: float = 1.0) -> ChowLiuTree:
    mi = estimate_mi(d, alpha)
    edges = maximum_spanning_tree(mi)
    root = root_at_jordan_center(edges, d.num_vars)
    parent = orient_tree(edges, root, d.num_vars)
    return ChowLiuTree(root, tuple(parent), estimate_cpts(d, parent, alpha))
