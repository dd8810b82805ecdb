"""Random models and samplers for tests and desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .cltree import ChowLiuTree
from .dataset import Dataset


def random_tree_parents(m: int, rng: np.random.Generator, root: int | None = None) -> tuple[int, list[int]]:
    """Uniform-ish random rooted tree: each node attaches to an earlier node of a random order."""
    order = rng.permutation(m)
    if root is not None:
        order = np.concatenate([[root], order[order != root]])
    parent = [-1] * m
    for pos in range(1, m):
        parent[order[pos]] = int(order[rng.integers(pos)])
    return int(order[0]), parent


def random_clt(m: int, rng: np.random.Generator, low: float = 0.05, high: float = 0.95) -> ChowLiuTree:
    root, parent = random_tree_parents(m, rng)
    cpt = rng.uniform(low, high, size=(m, 2))
    cpt[root, 1] = cpt[root, 0]
    return ChowLiuTree(root, tuple(parent), cpt)


def sample_clt(t: ChowLiuTree, n: int, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros((n, t.num_vars), dtype=np.bool_)
    order, seen = [], set()
    for v in range(t.num_vars):
        chain = []
        while v not in seen and v >= 0:
            chain.append(v)
            seen.add(v)
            v = t.parent[v]
        order.extend(reversed(chain))
    for v in order:
        p = t.parent[v]
        p1 = t.cpt[v, x[:, p].astype(int)] if p >= 0 else t.cpt[v, 0]
        x[:, v] = rng.random(n) < p1
    return x


def sample_bn(m: int, n: int, rng: np.random.Generator, max_parents: int = 3, strength: float = 2.5) -> np.ndarray:
    """Samples from a random logistic BN with up to ``max_parents`` parents per
    variable; richer than a tree, so structure search has something to find."""
    x = np.zeros((n, m), dtype=np.bool_)
    for v in range(m):
        k = int(rng.integers(0, min(max_parents, v) + 1))
        parents = rng.choice(v, size=k, replace=False) if k else np.zeros(0, dtype=int)
        coef = rng.normal(scale=strength, size=k)
        logits = rng.normal(scale=1.0) + (x[:, parents].astype(float) * 2 - 1) @ coef
        if k >= 2:
            logits = logits + rng.normal(scale=strength) * np.prod(x[:, parents[:2]] * 2 - 1, axis=1)
        x[:, v] = rng.random(n) < 1.0 / (1.0 + np.exp(-logits))
    return x


def bn_splits(m: int, sizes=(2000, 300, 500), seed: int = 0, **kw) -> tuple[Dataset, ...]:
    """train/valid/test draws from one random BN (split by row ranges)."""
    x = sample_bn(m, sum(sizes), np.random.default_rng(seed), **kw)
    bounds = np.cumsum((0,) + tuple(sizes))
    return tuple(Dataset(x[a:b]) for a, b in zip(bounds[:-1], bounds[1:]))
