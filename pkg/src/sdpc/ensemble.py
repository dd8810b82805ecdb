"""Mixtures of circuits that share one structure and differ only in parameters."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .circuit import Circuit, read_circuit, write_circuit
from .dataset import Dataset, bag_resample
from .flows import (
    FlowMatrix,
    aggregate_flows,
    component_log_likelihoods,
    compute_flows,
    mixture_log_likelihood,
    mle_log_params,
)

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12
EM_GRID = (2, 5, 10, 15, 20, 25, 30)


@dataclass
class SharedMixture:
    """``log_params[:, i]`` parameterizes component ``i`` of ``structure``."""

    structure: Circuit
    log_params: np.ndarray
    log_weights: np.ndarray
    train_ll: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.log_params = np.asarray(self.log_params, dtype=np.float64)
        if self.log_params.ndim == 1:
            self.log_params = self.log_params[:, None]
        self.log_weights = np.atleast_1d(np.asarray(self.log_weights, dtype=np.float64))
        if self.log_weights.shape[0] < 1:
            raise ValueError("a mixture needs at least one component")
        if self.log_params.shape != (self.structure.num_params, self.log_weights.shape[0]):
            raise ValueError("log_params must be |theta| x k")

    @property
    def k(self) -> int:
        return self.log_weights.shape[0]

    def component(self, i: int) -> Circuit:
        return self.structure.with_params(self.log_params[:, i])

    def log_likelihood(self, d: Dataset, flows: FlowMatrix | None = None) -> np.ndarray:
        f = compute_flows(self.structure, d) if flows is None else flows
        return mixture_log_likelihood(self.structure, self.log_params, self.log_weights, f)

    @classmethod
    def single(cls, c: Circuit) -> "SharedMixture":
        return cls(c, c.log_theta[:, None], np.zeros(1))


def normalize_log_params(c: Circuit, log_params: np.ndarray) -> np.ndarray:
    """Renormalize each sum node's outgoing log-weights (per column)."""
    starts = c.param_offset[c.sum_nodes]
    sizes = np.diff(np.append(starts, c.num_params))
    norm = np.logaddexp.reduceat(log_params, starts, axis=0)
    return log_params - np.repeat(norm, sizes, axis=0)


def _floor_weights(w: np.ndarray) -> np.ndarray:
    if (w < WEIGHT_FLOOR).any():
        warnings.warn(f"{int((w < WEIGHT_FLOOR).sum())} mixture component(s) collapsed; weight floored")
        w = np.maximum(w, WEIGHT_FLOOR)
        w = w / w.sum()
    return w


def em_fit(
    structure: Circuit,
    d: Dataset,
    k: int,
    iters: int = 100,
    tol: float = 1e-4,
    seed: int = 1337,
    pseudocount: float = 1.0,
    init_noise: float = 0.1,
    flows: FlowMatrix | None = None,
) -> SharedMixture:
    """EM for a k-component mixture over a fixed deterministic structure.

    The flow matrix is computed once; every E step is ``F @ log_params`` and
    every M step is a weighted closed-form MLE per component. Components start
    at the single-model MLE plus uniform log-weight noise. Stops after
    ``iters`` M steps or when the mean training LL improves by less than ``tol``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    f = compute_flows(structure, d) if flows is None else flows
    rng = np.random.default_rng(seed)
    sample_w = d.weight_vector()
    total_w = sample_w.sum()

    base = mle_log_params(structure, aggregate_flows(f, d.weights), pseudocount)
    noise = rng.uniform(-init_noise, init_noise, size=(structure.num_params, k)) if init_noise > 0 else 0.0
    log_params = normalize_log_params(structure, base[:, None] + noise)
    log_w = np.full(k, -np.log(k))
    history: list[float] = []

    def e_step(log_params, log_w):
        joint = component_log_likelihoods(log_params, f) + log_w[None, :]
        ll = logsumexp(joint, axis=1)
        return joint, ll, float(sample_w @ ll) / total_w

    for it in range(iters):
        joint, ll, mean_ll = e_step(log_params, log_w)
        if history and mean_ll - history[-1] < tol:
            history.append(mean_ll)
            break
        history.append(mean_ll)
        resp = np.exp(joint - ll[:, None]) * sample_w[:, None]
        counts = aggregate_flows(f, resp)
        log_params = mle_log_params(structure, counts, pseudocount)
        w = _floor_weights(resp.sum(axis=0) / total_w)
        log_w = np.log(w)
    else:
        history.append(e_step(log_params, log_w)[2])
    log.debug("em_fit k=%d: %d iterations, train LL %.6f", k, len(history) - 1, history[-1])
    return SharedMixture(structure, log_params, log_w, history)


def bem_fit(
    structure: Circuit,
    d: Dataset,
    bags: int,
    k: int,
    seed: int = 1337,
    **em_kwargs,
) -> SharedMixture:
    """Bagging + EM: one ``em_fit`` per bootstrap resample, components pooled
    with outer weight ``1/bags``."""
    if bags < 1:
        raise ValueError("bags must be >= 1")
    params, weights = [], []
    for b in range(bags):
        bag = bag_resample(d, seed + b)
        mix = em_fit(structure, bag, k, seed=seed + b, **em_kwargs)
        params.append(mix.log_params)
        weights.append(mix.log_weights - np.log(bags))
    return SharedMixture(structure, np.concatenate(params, axis=1), np.concatenate(weights))


def em_grid(
    structure: Circuit,
    train: Dataset,
    valid: Dataset,
    grid=EM_GRID,
    bags: int | None = None,
    **kwargs,
) -> tuple[SharedMixture, dict[int, float]]:
    """Fit one mixture per k in ``grid`` and keep the best on validation data.

    Returns the selected mixture and the mean validation LL for every k.
    """
    f_train = compute_flows(structure, train) if bags is None else None
    f_valid = compute_flows(structure, valid)
    scores, best, best_ll = {}, None, -np.inf
    for k in grid:
        if bags is None:
            mix = em_fit(structure, train, k, flows=f_train, **kwargs)
        else:
            mix = bem_fit(structure, train, bags, k, **kwargs)
        ll = float(np.mean(mix.log_likelihood(valid, f_valid)))
        scores[k] = ll
        log.info("k=%d: valid LL %.6f", k, ll)
        if ll > best_ll:
            best, best_ll = mix, ll
    return best, scores


# files ---------------------------------------------------------------------------


def write_mixture(mix: SharedMixture, circuit_path, params_path) -> None:
    write_circuit(mix.structure, circuit_path)
    lines = [
        f"c shared-structure mixture: {mix.k} components, {mix.structure.num_params} parameters",
        "c first line: component log-weights; then one row of k log-parameters per circuit parameter",
        " ".join(f"{w:.17g}" for w in mix.log_weights),
    ]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in mix.log_params]
    Path(params_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mixture(circuit_path, params_path=None) -> SharedMixture:
    """Load a mixture; without a parameter file the circuit is a 1-component mixture."""
    structure = read_circuit(circuit_path)
    if params_path is None:
        return SharedMixture.single(structure)
    rows = []
    for lineno, line in enumerate(Path(params_path).read_text(encoding="utf-8").splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        try:
            rows.append([float(t) for t in tok])
        except ValueError:
            raise ValueError(f"{params_path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise ValueError(f"{params_path}: no mixture weights")
    log_w = np.array(rows[0])
    body = rows[1:]
    if len(body) != structure.num_params or any(len(r) != len(log_w) for r in body):
        raise ValueError(
            f"{params_path}: expected {structure.num_params} rows of {len(log_w)} values, "
            f"got {len(body)} rows"
        )
    return SharedMixture(structure, np.array(body).reshape(structure.num_params, len(log_w)), log_w)
