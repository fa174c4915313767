"""Simulated-annealing search for the minimum FE score and its argmin.

The inverse temperature scales the marginal energy, ``P(v | beta) ~ exp(-beta f(v))``.
Sampling uses the collapsed, central-limit form of the beta-replicated hidden layer:
the replica mean ``h_hat`` is Gaussian around ``p(v)`` with variance ``p(1-p)/beta`` and
``v | h_hat`` is Gaussian around ``lambda(h_hat)`` with variance ``s/beta``. Neither
step depends on beta in cost, and at ``beta = inf`` both collapse to the mean-field map
``v <- s * (b + W sigmoid(c + W^T v))``, whose fixed points are stationary points of f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import CapabilityError, GbrbmParams, fe_score, hidden_conditional, visible_mean

INF = math.inf
FIXED_POINT_TOL = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        b = self.betas
        if len(b) < 2:
            raise ValueError("schedule needs at least two temperatures")
        if not math.isinf(b[-1]):
            raise ValueError("last inverse temperature must be the infinity sentinel")
        if any(x <= 0 for x in b) or any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError("inverse temperatures must be positive and strictly increasing")

    @property
    def K(self) -> int:
        return len(self.betas)


def make_schedule(K: int) -> AnnealSchedule:
    """beta_k = ln K / ln(K/k) for k < K, and beta_K = inf."""
    if K < 2:
        raise ValueError("K must be at least 2")
    log_k = math.log(K)
    betas = [log_k / math.log(K / k) for k in range(1, K)]
    return AnnealSchedule(tuple(betas) + (INF,))


@dataclass(frozen=True)
class SaConfig:
    schedule: AnnealSchedule = field(default_factory=lambda: make_schedule(1000))
    restarts: int = 100
    steps_per_temperature: int = 10
    init_policy: Literal["from-training-data", "standard-normal"] = "from-training-data"
    seed: int = 0
    variance_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.restarts < 1 or self.steps_per_temperature < 1:
            raise ValueError("restarts and steps_per_temperature must be positive")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.init_policy not in ("from-training-data", "standard-normal"):
            raise ValueError(f"unknown init policy {self.init_policy!r}")


@dataclass(frozen=True)
class RestartResult:
    final_fe: float
    final_v: np.ndarray
    best_fe: float
    best_v: np.ndarray
    init_index: int


@dataclass(frozen=True)
class SaResult:
    f_star: float
    v_star: np.ndarray
    per_restart: list[RestartResult]
    schedule_used: AnnealSchedule


def sample_hidden_collapsed(
    params: GbrbmParams, v, beta: float, rng: np.random.Generator, variance_floor: float = 1e-12
) -> np.ndarray:
    """Replica-mean hidden sample, clamped to [0, 1]; deterministic p(v) at beta = inf."""
    p = hidden_conditional(params, v).p
    if math.isinf(beta):
        return p
    var = np.maximum(p * (1.0 - p), variance_floor) / beta
    return np.clip(p + np.sqrt(var) * rng.standard_normal(p.shape), 0.0, 1.0)


def sample_visible_tempered(
    params: GbrbmParams, h_hat, beta: float, rng: np.random.Generator
) -> np.ndarray:
    mean = visible_mean(params, np.asarray(h_hat, dtype=np.float64))
    if math.isinf(beta):
        return mean
    return mean + np.sqrt(params.variance / beta) * rng.standard_normal(mean.shape)


def mean_field_descent(
    params: GbrbmParams, v, max_steps: int, tol: float = FIXED_POINT_TOL
) -> np.ndarray:
    """Iterate the zero-temperature map until no coordinate moves more than ``tol``."""
    v = np.array(v, dtype=np.float64, copy=True)
    for _ in range(max_steps):
        nxt = visible_mean(params, hidden_conditional(params, v).p)
        done = np.max(np.abs(nxt - v)) < tol
        v = nxt
        if done:
            break
    return v


def sa_search(params: GbrbmParams, config: SaConfig, init_pool=None) -> SaResult:
    """Annealed blocked Gibbs search, vectorized over the independent restarts.

    Besides each restart's endpoint, the lowest FE seen along its trajectory (including
    the initial state) is tracked, and the overall minimum of both is returned.
    """
    rng = np.random.default_rng(config.seed)
    m = config.restarts
    if config.init_policy == "from-training-data":
        if init_pool is None or len(init_pool) == 0:
            raise ValueError("init_pool must be nonempty for the from-training-data policy")
        pool = np.atleast_2d(np.asarray(init_pool, dtype=np.float64))
        if pool.shape[1] != params.n_v:
            raise ValueError("init_pool dimension does not match the model")
        idx = rng.integers(0, pool.shape[0], size=m)
        v = pool[idx].copy()
    else:
        idx = np.full(m, -1)
        v = rng.standard_normal((m, params.n_v))

    best_f = fe_score(params, v)
    best_v = v.copy()

    def track(v):
        f = fe_score(params, v)
        better = f < best_f
        best_f[better] = f[better]
        best_v[better] = v[better]

    S = config.steps_per_temperature
    for beta in config.schedule.betas:
        if math.isinf(beta):
            for _ in range(S):
                nxt = visible_mean(params, hidden_conditional(params, v).p)
                done = np.max(np.abs(nxt - v)) < FIXED_POINT_TOL
                v = nxt
                track(v)
                if done:
                    break
        else:
            for _ in range(S):
                h_hat = sample_hidden_collapsed(params, v, beta, rng, config.variance_floor)
                v = sample_visible_tempered(params, h_hat, beta, rng)
                track(v)

    final_f = fe_score(params, v)
    per_restart = [
        RestartResult(float(final_f[r]), v[r].copy(), float(best_f[r]), best_v[r].copy(), int(idx[r]))
        for r in range(m)
    ]
    winner = int(np.argmin(best_f))
    v_star = best_v[winner].copy()
    return SaResult(
        f_star=float(fe_score(params, v_star)),
        v_star=v_star,
        per_restart=per_restart,
        schedule_used=config.schedule,
    )


def grid_min_oracle(params: GbrbmParams, box, resolution: int, polish_steps: int = 100_000):
    """Exhaustive grid minimum of f over ``box`` followed by one mean-field polish.

    ``box`` is a sequence of (lo, hi) pairs, one per visible coordinate.
    """
    if params.n_v > 3:
        raise CapabilityError("grid oracle supports n_v <= 3")
    if resolution < 10:
        raise ValueError("resolution must be at least 10")
    box = np.asarray(box, dtype=np.float64).reshape(params.n_v, 2)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([g.ravel() for g in mesh])
    best_f, best_v = math.inf, None
    for chunk in np.array_split(points, max(1, points.shape[0] // 200_000)):
        f = fe_score(params, chunk)
        i = int(np.argmin(f))
        if f[i] < best_f:
            best_f, best_v = float(f[i]), chunk[i].copy()
    polished = mean_field_descent(params, best_v, polish_steps)
    f_pol = float(fe_score(params, polished))
    if f_pol < best_f:
        return f_pol, polished
    return best_f, best_v
