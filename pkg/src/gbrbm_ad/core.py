"""Gaussian-Bernoulli RBM: parameters, energies, conditionals and exact oracles.

All functions accept a single visible vector of shape ``(n_v,)`` or a batch of
shape ``(N, n_v)``; hidden states likewise ``(n_h,)`` or ``(N, n_h)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit, logsumexp

# softplus^{-1}(1); the variance parameter that gives unit variance
UNIT_SIGMA = math.log(math.e - 1.0)

MAX_ENUM_HIDDEN = 20


class ShapeError(ValueError):
    """Array dimensions do not match the model."""


class CapabilityError(ValueError):
    """Requested exact computation is too large to carry out."""


def softplus(x):
    """ln(1 + e^x), overflow-safe for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    return expit(x)


@dataclass(frozen=True, eq=False)
class GbrbmParams:
    """Parameters (b, c, w, sigma) with variances ``softplus(sigma)``.

    Arrays are copied to read-only float64 on construction.
    """

    b: np.ndarray
    c: np.ndarray
    w: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("b", "c", "w", "sigma"):
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        b, c, w, sigma = arrays["b"], arrays["c"], arrays["w"], arrays["sigma"]
        if b.ndim != 1 or c.ndim != 1 or sigma.ndim != 1 or w.ndim != 2:
            raise ShapeError("expected b, c, sigma as vectors and w as a matrix")
        if w.shape != (b.size, c.size) or sigma.size != b.size:
            raise ShapeError(
                f"inconsistent shapes: b{b.shape} c{c.shape} w{w.shape} sigma{sigma.shape}"
            )
        if b.size < 1 or c.size < 1:
            raise ShapeError("n_v and n_h must be positive")
        for name, a in arrays.items():
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entries in {name}")
        assert np.all(self.variance > 0)

    @property
    def n_v(self) -> int:
        return self.b.size

    @property
    def n_h(self) -> int:
        return self.c.size

    @property
    def variance(self) -> np.ndarray:
        return softplus(self.sigma)

    @classmethod
    def zeros(cls, n_v: int, n_h: int, sigma: float = 0.0) -> GbrbmParams:
        return cls(np.zeros(n_v), np.zeros(n_h), np.zeros((n_v, n_h)), np.full(n_v, sigma))

    def replace(self, **changes) -> GbrbmParams:
        fields = {k: getattr(self, k) for k in ("b", "c", "w", "sigma")}
        fields.update(changes)
        return GbrbmParams(**fields)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"b": self.b, "c": self.c, "w": self.w, "sigma": self.sigma}

    def equals(self, other: GbrbmParams) -> bool:
        """Bitwise equality of every parameter array."""
        return all(
            a.shape == o.shape and a.tobytes() == o.tobytes()
            for a, o in zip(self.arrays().values(), other.arrays().values())
        )


@dataclass(frozen=True)
class HiddenConditional:
    tau: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class VisibleConditional:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class ExactOracleReport:
    log_partition: float
    method: Literal["analytic-hidden-sum", "quadrature"]


def _check_visible(params: GbrbmParams, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] != params.n_v:
        raise ShapeError(f"visible state of shape {v.shape} does not match n_v={params.n_v}")
    return v


def _check_hidden(params: GbrbmParams, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != params.n_h:
        raise ShapeError(f"hidden state of shape {h.shape} does not match n_h={params.n_h}")
    return h


def energy(params: GbrbmParams, v, h):
    v = _check_visible(params, v)
    h = _check_hidden(params, h)
    quad = np.sum(v**2 / (2.0 * params.variance), axis=-1)
    coupling = np.sum((v @ params.w) * h, axis=-1)
    return quad - v @ params.b - h @ params.c - coupling


def hidden_preactivation(params: GbrbmParams, v) -> np.ndarray:
    if params.n_v == 1:
        # outer product; much faster than a rank-1 matmul
        return params.c + v * params.w[0]
    return params.c + v @ params.w


def fe_score(params: GbrbmParams, v):
    """Marginal energy f(v) = -ln sum_h exp(-E(v, h)), hidden units summed analytically."""
    v = _check_visible(params, v)
    tau = hidden_preactivation(params, v)
    quad = np.sum(v**2 / (2.0 * params.variance), axis=-1)
    return quad - v @ params.b - np.sum(softplus(tau), axis=-1)


def fe_score_enumerated(params: GbrbmParams, v) -> float:
    """Brute-force -ln sum over all 2^n_h hidden states. Test oracle only."""
    v = _check_visible(params, v)
    if v.ndim != 1:
        raise ShapeError("enumeration oracle takes a single visible vector")
    if params.n_h > MAX_ENUM_HIDDEN:
        raise CapabilityError(f"n_h={params.n_h} exceeds enumeration limit {MAX_ENUM_HIDDEN}")
    hs = all_hidden_states(params.n_h)
    energies = energy(params, np.broadcast_to(v, (hs.shape[0], v.size)), hs)
    return float(-logsumexp(-energies))


def hidden_conditional(params: GbrbmParams, v) -> HiddenConditional:
    v = _check_visible(params, v)
    tau = hidden_preactivation(params, v)
    return HiddenConditional(tau=tau, p=sigmoid(tau))


def visible_mean(params: GbrbmParams, h) -> np.ndarray:
    """lambda(h) = s * (b + W h); also used with real-valued replica means."""
    return params.variance * (params.b + h @ params.w.T)


def visible_conditional(params: GbrbmParams, h) -> VisibleConditional:
    h = _check_hidden(params, h)
    mean = visible_mean(params, h)
    return VisibleConditional(mean=mean, variance=np.broadcast_to(params.variance, mean.shape))


def gibbs_step(params: GbrbmParams, v, rng: np.random.Generator) -> np.ndarray:
    """One blocked Gibbs sweep v -> h -> v'."""
    p = hidden_conditional(params, v).p
    h = (rng.random(p.shape) < p).astype(np.float64)
    mean = visible_mean(params, h)
    return mean + np.sqrt(params.variance) * rng.standard_normal(mean.shape)


def all_hidden_states(n_h: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=n_h)))


def _hidden_log_weights(params: GbrbmParams, hs: np.ndarray) -> np.ndarray:
    # log of the v-integral for each h, minus the h-independent Gaussian normalizer
    a = params.b + hs @ params.w.T
    return hs @ params.c + 0.5 * np.sum(params.variance * a**2, axis=-1)


def _analytic_log_partition(params: GbrbmParams) -> float:
    hs = all_hidden_states(params.n_h)
    gauss = 0.5 * np.sum(np.log(2.0 * np.pi * params.variance))
    return float(gauss + logsumexp(_hidden_log_weights(params, hs)))


def _visible_box(params: GbrbmParams, width: float = 14.0) -> tuple[np.ndarray, np.ndarray]:
    s = params.variance
    reach = s * (np.abs(params.b) + np.abs(params.w).sum(axis=1))
    half = reach + width * np.sqrt(s)
    return -half, half


def _gl_nodes(lo: float, hi: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, wt = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * wt[None, :]).ravel()
    return nodes, weights


def _quadrature_log_partition(params: GbrbmParams) -> float:
    if params.n_v > 2:
        raise CapabilityError("quadrature oracle supports n_v <= 2")
    lo, hi = _visible_box(params)
    axes = []
    for i in range(params.n_v):
        # panels no wider than a quarter standard deviation
        panels = max(16, int(np.ceil((hi[i] - lo[i]) / (0.25 * np.sqrt(params.variance[i])))))
        axes.append(_gl_nodes(lo[i], hi[i], panels, 12))
    if params.n_v == 1:
        nodes = axes[0][0][:, None]
        logw = np.log(axes[0][1])
    else:
        (x0, w0), (x1, w1) = axes
        g0, g1 = np.meshgrid(x0, x1, indexing="ij")
        nodes = np.column_stack([g0.ravel(), g1.ravel()])
        logw = (np.log(w0)[:, None] + np.log(w1)[None, :]).ravel()
    return float(logsumexp(-fe_score(params, nodes) + logw))


def exact_log_partition(
    params: GbrbmParams, method: Literal["analytic-hidden-sum", "quadrature"] = "analytic-hidden-sum"
) -> ExactOracleReport:
    """ln Z by summing the closed-form Gaussian integral over every hidden state.

    ``method="quadrature"`` integrates exp(-f(v)) numerically instead (n_v <= 2).
    """
    if method == "analytic-hidden-sum":
        if params.n_h > MAX_ENUM_HIDDEN:
            raise CapabilityError(f"n_h={params.n_h} exceeds enumeration limit {MAX_ENUM_HIDDEN}")
        value = _analytic_log_partition(params)
    elif method == "quadrature":
        value = _quadrature_log_partition(params)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not math.isfinite(value):
        raise FloatingPointError("log partition is not finite")
    return ExactOracleReport(log_partition=value, method=method)


def exact_model_moments(params: GbrbmParams) -> dict[str, np.ndarray]:
    """Model expectations E[v], E[v^2], E[h], E[v h^T] by hidden-state enumeration.

    Given h the visible layer is Gaussian with mean lambda(h) and variance s, so every
    moment is an exact finite sum over the 2^n_h hidden configurations.
    """
    if params.n_h > MAX_ENUM_HIDDEN:
        raise CapabilityError(f"n_h={params.n_h} exceeds enumeration limit {MAX_ENUM_HIDDEN}")
    hs = all_hidden_states(params.n_h)
    logw = _hidden_log_weights(params, hs)
    prob = np.exp(logw - logsumexp(logw))
    lam = visible_mean(params, hs)
    s = params.variance
    return {
        "v": prob @ lam,
        "v2": s + prob @ lam**2,
        "h": prob @ hs,
        "vh": (lam * prob[:, None]).T @ hs,
    }
