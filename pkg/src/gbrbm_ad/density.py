"""FE-score density model and threshold calibration.

FE scores of normal data are z-scored and modelled with a one-visible-unit GBRBM whose
support is truncated below at the z-scored minimum FE score. Because the visible
layer is one-dimensional, the partition function and every model expectation needed
for the likelihood gradient are computed by composite Gauss-Legendre quadrature, so
the fit uses no sampling at all.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import GbrbmParams, fe_score, sigmoid
from .trainer import AdaMaxState, adamax_step, gradient_from_moments, init_params, positive_phase

log = logging.getLogger(__name__)

Z_HEADROOM = 6.0


class DegenerateDataError(ValueError):
    pass


class ScoreFitError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ScoreNormalizer:
    mean: float
    std: float
    f_min_raw: float
    z_min: float
    z_hi: float
    clamped: bool = False

    def to_z(self, raw):
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std

    def to_raw(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def fit_normalizer(samples, f_min_raw: float) -> ScoreNormalizer:
    """Z-scoring with the population standard deviation.

    If ``f_min_raw`` exceeds the smallest sample it is replaced by that sample, with a
    warning, and the replacement is recorded in ``clamped``.
    """
    raw = np.asarray(samples, dtype=np.float64).ravel()
    if raw.size < 2:
        raise DegenerateDataError("need at least two score samples")
    if not np.all(np.isfinite(raw)):
        raise DegenerateDataError("score samples contain non-finite values")
    mean = float(np.mean(raw))
    std = float(np.std(raw))
    if not std > 0:
        raise DegenerateDataError("score samples have zero spread")
    clamped = False
    if f_min_raw > raw.min():
        warnings.warn(
            f"minimum FE {f_min_raw} exceeds the smallest sample {raw.min()}; using the sample",
            RuntimeWarning,
            stacklevel=2,
        )
        f_min_raw = float(raw.min())
        clamped = True
    z = (raw - mean) / std
    return ScoreNormalizer(
        mean=mean,
        std=std,
        f_min_raw=float(f_min_raw),
        z_min=(f_min_raw - mean) / std,
        z_hi=float(z.max()) + Z_HEADROOM,
        clamped=clamped,
    )


@dataclass(frozen=True)
class QuadratureGrid:
    panels: int
    nodes_per_panel: int
    lo: float
    hi: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.panels + 1)


def gauss_legendre_grid(panels: int, nodes_per_panel: int, interval) -> QuadratureGrid:
    """Composite Gauss-Legendre rule over equal-width panels."""
    if panels < 1:
        raise ValueError("panels must be positive")
    if not 2 <= nodes_per_panel <= 64:
        raise ValueError("nodes_per_panel must lie in [2, 64]")
    lo, hi = (float(x) for x in interval)
    if not hi > lo:
        raise ValueError("empty interval")
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return QuadratureGrid(panels, nodes_per_panel, lo, hi, nodes, weights)


@dataclass(frozen=True)
class ScoreFitConfig:
    n_hidden: int = 50
    epochs: int = 1_000_000
    learning_rate: float = 1e-3
    adamax_beta1: float = 0.9
    adamax_beta2: float = 0.999
    grad_tol: float = 1e-9
    panels: int = 64
    nodes_per_panel: int = 16
    seed: int = 0


@dataclass(frozen=True)
class ScoreModel:
    normalizer: ScoreNormalizer
    params: GbrbmParams
    grid: QuadratureGrid
    log_partition: float
    fit_info: dict = field(default_factory=dict, compare=False)

    def log_pdf(self, z):
        z = np.asarray(z, dtype=np.float64)
        f = fe_score(self.params, z.reshape(-1, 1)).reshape(z.shape)
        return -f - self.log_partition

    def pdf(self, z):
        z = np.asarray(z, dtype=np.float64)
        out = np.exp(self.log_pdf(z))
        inside = (z >= self.grid.lo) & (z <= self.grid.hi)
        return np.where(inside, out, 0.0)

    def cdf(self, z):
        """Integral of the pdf from z_min: full-panel prefix sums plus a partial panel."""
        z = np.asarray(z, dtype=np.float64)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        g = self.grid
        edges = g.edges
        width = (g.hi - g.lo) / g.panels
        node_pdf = np.exp(self.log_pdf(g.nodes)) * g.weights
        prefix = np.concatenate([[0.0], np.cumsum(node_pdf.reshape(g.panels, -1).sum(axis=1))])
        zc = np.clip(z, g.lo, g.hi)
        k = np.clip(np.floor((zc - g.lo) / width).astype(int), 0, g.panels - 1)
        a = edges[k]
        x, w = np.polynomial.legendre.leggauss(g.nodes_per_panel)
        half = 0.5 * (zc - a)
        pts = (a + half)[:, None] + half[:, None] * x
        partial = np.sum(np.exp(self.log_pdf(pts)) * w, axis=1) * half
        out = np.clip(prefix[k] + partial, 0.0, 1.0)
        out = np.where(z >= g.hi, 1.0, np.where(z <= g.lo, 0.0, out))
        return float(out[0]) if scalar else out


def _log_weights(params: GbrbmParams, grid: QuadratureGrid) -> np.ndarray:
    return -fe_score(params, grid.nodes[:, None]) + np.log(grid.weights)


def quadrature_moments(params: GbrbmParams, grid: QuadratureGrid) -> tuple[dict[str, np.ndarray], float]:
    """Truncated-model moments E[v], E[v^2], E[h], E[v h] and ln Z on the grid."""
    logw = _log_weights(params, grid)
    log_z = float(logsumexp(logw))
    prob = np.exp(logw - log_z)
    z = grid.nodes
    p = sigmoid(params.c + z[:, None] * params.w[0])
    moments = {
        "v": np.array([prob @ z]),
        "v2": np.array([prob @ z**2]),
        "h": prob @ p,
        "vh": ((prob * z) @ p)[None, :],
    }
    return moments, log_z


def truncated_log_likelihood(params: GbrbmParams, z_data, grid: QuadratureGrid) -> float:
    log_z = float(logsumexp(_log_weights(params, grid)))
    return float(-np.mean(fe_score(params, np.asarray(z_data)[:, None])) - log_z)


def train_score_model(samples, f_min_raw: float, config: ScoreFitConfig | None = None) -> ScoreModel:
    """Fit the truncated 1-D GBRBM to z-scored FE scores by full-batch AdaMax ascent."""
    config = config or ScoreFitConfig()
    normalizer = fit_normalizer(samples, f_min_raw)
    z = normalizer.to_z(np.asarray(samples, dtype=np.float64).ravel())[:, None]
    grid = gauss_legendre_grid(config.panels, config.nodes_per_panel, (normalizer.z_min, normalizer.z_hi))
    rng = np.random.default_rng(config.seed)
    params = init_params(1, config.n_hidden, rng)
    state = AdaMaxState.fresh(params)
    ll_init = truncated_log_likelihood(params, z[:, 0], grid)
    epochs_run = 0
    grad_norm = math.nan
    for epoch in range(config.epochs):
        model_moments, log_z = quadrature_moments(params, grid)
        grads = gradient_from_moments(params, positive_phase(params, z), model_moments)
        grad_norm = grads.norm()
        if not (math.isfinite(log_z) and math.isfinite(grad_norm)):
            raise ScoreFitError(f"non-finite integrand at epoch {epoch}")
        epochs_run = epoch + 1
        if grad_norm < config.grad_tol:
            break
        state, params = adamax_step(
            state, params, grads, config.learning_rate, config.adamax_beta1, config.adamax_beta2
        )
    _, log_z = quadrature_moments(params, grid)
    ll_final = truncated_log_likelihood(params, z[:, 0], grid)
    log.info("score model: %d epochs, grad norm %.3e, ll %.5f -> %.5f", epochs_run, grad_norm, ll_init, ll_final)
    return ScoreModel(
        normalizer=normalizer,
        params=params,
        grid=grid,
        log_partition=log_z,
        fit_info={
            "epochs_run": epochs_run,
            "final_grad_norm": grad_norm,
            "log_likelihood_init": ll_init,
            "log_likelihood_final": ll_final,
        },
    )


def score_pdf(model: ScoreModel, z):
    return model.pdf(z)


def score_cdf(model: ScoreModel, z):
    return model.cdf(z)


@dataclass(frozen=True)
class ThresholdCalibration:
    p_anom: float
    kappa_z: float
    kappa_raw: float
    achieved_p: float
    iterations: int


def threshold_for(model, p_anom: float, tol: float = 1e-6, max_iter: int = 200) -> ThresholdCalibration:
    """Bisection for the z-space threshold whose CDF equals ``p_anom``.

    ``model`` needs a ``cdf`` callable and a ``normalizer`` with z_min, z_hi and the
    raw-unit mapping.
    """
    if not 0.0 < p_anom < 1.0:
        raise ValueError("p_anom must lie strictly between 0 and 1")
    norm = model.normalizer
    lo, hi = norm.z_min, norm.z_hi
    if not (model.cdf(lo) <= p_anom <= model.cdf(hi)):
        raise RuntimeError("CDF does not bracket the requested probability")
    mid, val = lo, model.cdf(lo)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        val = float(model.cdf(mid))
        if abs(val - p_anom) <= tol:
            break
        if val < p_anom:
            lo = mid
        else:
            hi = mid
    else:
        raise RuntimeError(f"bisection did not reach tolerance {tol} in {max_iter} iterations")
    return ThresholdCalibration(
        p_anom=p_anom,
        kappa_z=float(mid),
        kappa_raw=float(mid * norm.std + norm.mean),
        achieved_p=val,
        iterations=it,
    )


def anomaly_probability(model: ScoreModel, raw_fe):
    """CDF of the normal-data FE score at ``raw_fe``: the interpretable anomaly measure."""
    return model.cdf(model.normalizer.to_z(raw_fe))


def pdf_table(model: ScoreModel, n_points: int = 512) -> dict[str, np.ndarray]:
    """Columns z, raw_fe, pdf, cdf on an even grid over the support."""
    z = np.linspace(model.grid.lo, model.grid.hi, n_points)
    return {"z": z, "raw_fe": model.normalizer.to_raw(z), "pdf": model.pdf(z), "cdf": model.cdf(z)}
