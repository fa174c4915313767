"""Maximum-likelihood GBRBM training with CD-k / PCD negatives and AdaMax."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import (
    UNIT_SIGMA,
    GbrbmParams,
    ShapeError,
    exact_log_partition,
    exact_model_moments,
    fe_score,
    gibbs_step,
    hidden_conditional,
    sigmoid,
    softplus,
)

log = logging.getLogger(__name__)

PARAM_NAMES = ("b", "c", "w", "sigma")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 1000
    cd_steps: int = 10
    persistent: bool = False
    learning_rate: float = 1e-3
    adamax_beta1: float = 0.9
    adamax_beta2: float = 0.999
    seed: int = 0
    negative_sample_count: int = 128
    chain_init: Literal["data", "standard-normal"] = "data"

    def __post_init__(self) -> None:
        if self.chain_init not in ("data", "standard-normal"):
            raise ValueError(f"unknown chain_init {self.chain_init!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.negative_sample_count < 1:
            raise ValueError("batch_size, epochs and negative_sample_count must be positive")
        if self.cd_steps < 0:
            raise ValueError("cd_steps must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.adamax_beta1 < 1 and 0 < self.adamax_beta2 < 1):
            raise ValueError("AdaMax betas must lie in (0, 1)")


@dataclass(frozen=True)
class GradientSet:
    db: np.ndarray
    dc: np.ndarray
    dw: np.ndarray
    dsigma: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"b": self.db, "c": self.dc, "w": self.dw, "sigma": self.dsigma}

    @classmethod
    def from_dict(cls, d: dict[str, np.ndarray]) -> GradientSet:
        return cls(db=d["b"], dc=d["c"], dw=d["w"], dsigma=d["sigma"])

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g**2)) for g in self.as_dict().values()))


@dataclass
class AdaMaxState:
    m: dict[str, np.ndarray]
    u: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: GbrbmParams) -> AdaMaxState:
        arrays = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            u={k: np.zeros_like(a) for k, a in arrays.items()},
        )


@dataclass
class TrainReport:
    epochs: list[dict[str, float]]
    wall_time: float
    params: GbrbmParams
    negative_phase: str
    metadata: dict = field(default_factory=dict)

    def same_run(self, other: TrainReport) -> bool:
        """Equality of everything except wall time."""
        return (
            self.epochs == other.epochs
            and self.negative_phase == other.negative_phase
            and self.params.equals(other.params)
        )


def init_params(n_v: int, n_h: int, rng: np.random.Generator) -> GbrbmParams:
    """Zero biases, Gaussian Xavier couplings, unit visible variances."""
    if n_v < 1 or n_h < 1:
        raise ValueError("n_v and n_h must be positive")
    w = rng.normal(0.0, math.sqrt(2.0 / (n_v + n_h)), size=(n_v, n_h))
    return GbrbmParams(np.zeros(n_v), np.zeros(n_h), w, np.full(n_v, UNIT_SIGMA))


def positive_phase(params: GbrbmParams, batch) -> dict[str, np.ndarray]:
    """Batch moments <v>, <v^2>, <p(v)>, <v p(v)^T> with hidden units summed out."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    p = hidden_conditional(params, batch).p
    n = batch.shape[0]
    return {
        "v": batch.mean(axis=0),
        "v2": np.mean(batch**2, axis=0),
        "h": p.mean(axis=0),
        "vh": batch.T @ p / n,
    }


def cd_negative_phase(
    params: GbrbmParams, starts, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Run ``k`` blocked Gibbs sweeps from each start; returns the end points."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    v = np.array(starts, dtype=np.float64, copy=True)
    for _ in range(k):
        v = gibbs_step(params, v, rng)
    return v


def gradient_from_moments(
    params: GbrbmParams, pos: dict[str, np.ndarray], neg: dict[str, np.ndarray]
) -> GradientSet:
    s = params.variance
    sig_factor = sigmoid(params.sigma) / (2.0 * s**2)
    return GradientSet(
        db=pos["v"] - neg["v"],
        dc=pos["h"] - neg["h"],
        dw=pos["vh"] - neg["vh"],
        dsigma=sig_factor * (pos["v2"] - neg["v2"]),
    )


def gradient(params: GbrbmParams, batch, negatives) -> GradientSet:
    """Stochastic log-likelihood gradient: data moments minus negative-particle moments."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if batch.shape[1] != params.n_v or negatives.shape[1] != params.n_v:
        raise ShapeError("batch and negatives must have n_v columns")
    return gradient_from_moments(params, positive_phase(params, batch), positive_phase(params, negatives))


def exact_gradient(params: GbrbmParams, data) -> GradientSet:
    """Gradient of the exact mean log-likelihood (negative phase by enumeration)."""
    return gradient_from_moments(params, positive_phase(params, data), exact_model_moments(params))


def adamax_step(
    state: AdaMaxState,
    params: GbrbmParams,
    grads: GradientSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
) -> tuple[AdaMaxState, GbrbmParams]:
    """One AdaMax ascent step. Coordinates whose infinity norm is still zero are left as is."""
    t = state.t + 1
    g = grads.as_dict()
    current = params.arrays()
    m, u, updated = {}, {}, {}
    for name in PARAM_NAMES:
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * g[name]
        u[name] = np.maximum(beta2 * state.u[name], np.abs(g[name]))
        step = np.zeros_like(m[name])
        nz = u[name] > 0
        step[nz] = lr * m[name][nz] / ((1.0 - beta1**t) * u[name][nz])
        updated[name] = current[name] + step
    return AdaMaxState(m=m, u=u, t=t), GbrbmParams(**updated)


def exact_log_likelihood(params: GbrbmParams, data) -> float:
    """Mean log-likelihood -<f(d)> - ln Z, exact for n_h <= 20."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    log_z = exact_log_partition(params).log_partition
    return float(-np.mean(fe_score(params, data)) - log_z)


def train(
    data,
    config: TrainConfig,
    n_hidden: int,
    params: GbrbmParams | None = None,
    callback=None,
) -> tuple[GbrbmParams, TrainReport]:
    """Minibatch stochastic ascent on the log-likelihood of ``data`` (normal points only).

    ``callback(epoch, params)`` is invoked after every epoch when given.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, n_v = data.shape
    if n == 0:
        raise ValueError("empty training set")
    if config.batch_size > n:
        raise ValueError(f"batch_size={config.batch_size} exceeds dataset size {n}")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(n_v, n_hidden, rng)
    state = AdaMaxState.fresh(params)
    particles = rng.standard_normal((config.negative_sample_count, n_v)) if config.persistent else None
    kind = f"{'PCD' if config.persistent else 'CD'}-{config.cd_steps}"
    if not config.persistent and config.chain_init == "standard-normal":
        kind += " (standard-normal starts)"

    history = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        norm_sum = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = data[order[start : start + config.batch_size]]
            if particles is not None:
                particles = cd_negative_phase(params, particles, config.cd_steps, rng)
                negatives = particles
            elif config.chain_init == "standard-normal":
                starts = rng.standard_normal((config.negative_sample_count, n_v))
                negatives = cd_negative_phase(params, starts, config.cd_steps, rng)
            else:
                negatives = cd_negative_phase(params, batch, config.cd_steps, rng)
            grads = gradient(params, batch, negatives)
            state, params = adamax_step(
                state, params, grads, config.learning_rate, config.adamax_beta1, config.adamax_beta2
            )
            norm_sum += grads.norm()
            n_batches += 1
        history.append(
            {
                "epoch": epoch + 1,
                "mean_fe": float(np.mean(fe_score(params, data))),
                "grad_norm": norm_sum / n_batches,
            }
        )
        if callback is not None:
            callback(epoch, params)
        if (epoch + 1) % max(1, config.epochs // 10) == 0:
            log.info("epoch %d mean FE %.4f", epoch + 1, history[-1]["mean_fe"])
    wall = time.perf_counter() - t0
    report = TrainReport(
        epochs=history,
        wall_time=wall,
        params=params,
        negative_phase=kind,
        metadata={"negative_phase_note": "contrastive divergence in place of spatial Monte Carlo integration"},
    )
    return params, report
