"""Model bundles, classification, MCC evaluation and plot-table export."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GbrbmParams, ShapeError, fe_score
from .data import ANOMALOUS, NORMAL, LabeledDataset
from .density import (
    QuadratureGrid,
    ScoreModel,
    ScoreNormalizer,
    ThresholdCalibration,
    anomaly_probability,
)

BUNDLE_MAGIC = b"GBAD"
FORMAT_VERSION = 1
DIGEST_SIZE = 32


class BundleError(ValueError):
    pass


class BundleVersionError(BundleError):
    pass


class ChecksumError(BundleError):
    pass


@dataclass
class ModelBundle:
    """Deployable artifact: data model, score model, minimum FE and threshold.

    Stages of the pipeline fill the optional fields in order.
    """

    data_model: GbrbmParams
    score_model: ScoreModel | None = None
    f_star: float | None = None
    v_star: np.ndarray | None = None
    calibration: ThresholdCalibration | None = None
    provenance: dict = field(default_factory=dict)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise BundleError(f"bundle is missing {', '.join(missing)}; run the earlier pipeline stages")


# --- classification and metrics ----------------------------------------------


def _points(bundle: ModelBundle, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, bundle.data_model.n_v)
    pts = np.atleast_2d(pts)
    if pts.shape[1] != bundle.data_model.n_v:
        raise ShapeError(f"points have {pts.shape[1]} features, model expects {bundle.data_model.n_v}")
    return pts


def classify(bundle: ModelBundle, points) -> np.ndarray:
    """1 (anomalous) where the FE score exceeds kappa, else 0; ties count as normal."""
    bundle.require("calibration")
    pts = _points(bundle, points)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8)
    f = fe_score(bundle.data_model, pts)
    return np.where(f > bundle.calibration.kappa_raw, ANOMALOUS, NORMAL).astype(np.uint8)


def classify_by_probability(bundle: ModelBundle, points) -> np.ndarray:
    """Same decision made on the probability scale, against the CDF value at kappa."""
    bundle.require("calibration", "score_model")
    pts = _points(bundle, points)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8)
    prob = anomaly_probability(bundle.score_model, fe_score(bundle.data_model, pts))
    return np.where(prob > bundle.calibration.achieved_p, ANOMALOUS, NORMAL).astype(np.uint8)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_labels(cls, truth, predicted) -> ConfusionCounts:
        t = np.asarray(truth) == ANOMALOUS
        p = np.asarray(predicted) == ANOMALOUS
        return cls(
            tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)), tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p))
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def mcc(counts: ConfusionCounts) -> float:
    """Matthews correlation with anomaly as the positive class; 0 for a zero denominator."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def _mcc_vec(tp, fp, tn, fn) -> np.ndarray:
    tp, fp, tn, fn = (np.asarray(x, dtype=np.float64) for x in (tp, fp, tn, fn))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (tp * tn - fp * fn) / np.sqrt(denom)
    return np.where(denom > 0, out, 0.0)


def threshold_sweep(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    """MCC for every decision-distinct threshold ``score > t``.

    Thresholds are the midpoints of consecutive unique scores plus one below and one
    above the whole range.
    """
    scores = np.asarray(scores, dtype=np.float64)
    anom = np.asarray(truth) == ANOMALOUS
    uniq, inv = np.unique(scores, return_inverse=True)
    n_anom_at = np.bincount(inv, weights=anom, minlength=uniq.size)
    n_norm_at = np.bincount(inv, weights=~anom, minlength=uniq.size)
    # index k: everything with score <= uniq[k-1] is predicted normal
    fn = np.concatenate([[0.0], np.cumsum(n_anom_at)])
    tn = np.concatenate([[0.0], np.cumsum(n_norm_at)])
    tp = anom.sum() - fn
    fp = (~anom).sum() - tn
    if uniq.size:
        mids = 0.5 * (uniq[:-1] + uniq[1:])
        thresholds = np.concatenate([[uniq[0] - 1.0], mids, [uniq[-1] + 1.0]])
    else:
        thresholds = np.zeros(1)
    return thresholds, _mcc_vec(tp, fp, tn, fn)


def histogram_table(bundle: ModelBundle, f_normal, f_anomalous, bins: int = 60) -> dict[str, np.ndarray]:
    """Per-class normalized FE histograms and the fitted density in raw FE units."""
    allf = np.concatenate([np.ravel(f_normal), np.ravel(f_anomalous)])
    edges = np.histogram_bin_edges(allf, bins=bins)

    def density(x):
        x = np.ravel(x)
        if x.size == 0:
            return np.zeros(bins)
        return np.histogram(x, bins=edges, density=True)[0]

    centers = 0.5 * (edges[:-1] + edges[1:])
    if bundle.score_model is not None:
        sm = bundle.score_model
        fitted = sm.pdf(sm.normalizer.to_z(centers)) / sm.normalizer.std
    else:
        fitted = np.full(bins, np.nan)
    return {
        "bin_lo": edges[:-1],
        "bin_hi": edges[1:],
        "density_normal": density(f_normal),
        "density_anomalous": density(f_anomalous),
        "fitted_pdf": fitted,
    }


@dataclass
class EvalReport:
    counts: ConfusionCounts
    mcc_at_kappa: float
    max_mcc: float | None
    best_threshold: float | None
    kappa_raw: float
    histogram: dict[str, np.ndarray]
    note: str = ""

    def summary(self) -> dict:
        return {
            "mcc_at_kappa": self.mcc_at_kappa,
            "max_mcc": self.max_mcc,
            "best_threshold": self.best_threshold,
            "kappa_raw": self.kappa_raw,
            "counts": vars(self.counts),
            "note": self.note,
        }


def evaluate(bundle: ModelBundle, test: LabeledDataset, bins: int = 60) -> EvalReport:
    bundle.require("calibration")
    f = fe_score(bundle.data_model, _points(bundle, test.points))
    pred = np.where(f > bundle.calibration.kappa_raw, ANOMALOUS, NORMAL)
    counts = ConfusionCounts.from_labels(test.labels, pred)
    at_kappa = mcc(counts)
    note = ""
    if np.unique(test.labels).size < 2:
        max_mcc = best = None
        note = "single-class test set: maximum MCC undefined"
    else:
        thresholds, values = threshold_sweep(f, test.labels)
        k = int(np.argmax(values))
        max_mcc, best = float(values[k]), float(thresholds[k])
    hist = histogram_table(bundle, f[test.labels == NORMAL], f[test.labels == ANOMALOUS], bins=bins)
    return EvalReport(counts, at_kappa, max_mcc, best, bundle.calibration.kappa_raw, hist, note)


# --- persistence -------------------------------------------------------------
#
# File layout:
#   b"GBAD" | u16 format version | u32 header length | header (UTF-8 JSON)
#   | concatenated little-endian float64 arrays | sha256 of all preceding bytes
# The header lists every array's name, shape and byte offset, plus JSON metadata.


def _bundle_arrays(bundle: ModelBundle) -> dict[str, np.ndarray]:
    arrays = {f"data.{k}": v for k, v in bundle.data_model.arrays().items()}
    if bundle.f_star is not None:
        arrays["f_star"] = np.array([bundle.f_star])
        arrays["v_star"] = np.asarray(bundle.v_star, dtype=np.float64)
    sm = bundle.score_model
    if sm is not None:
        arrays.update({f"score.{k}": v for k, v in sm.params.arrays().items()})
        n = sm.normalizer
        arrays["score.normalizer"] = np.array([n.mean, n.std, n.f_min_raw, n.z_min, n.z_hi])
        arrays["score.grid_nodes"] = sm.grid.nodes
        arrays["score.grid_weights"] = sm.grid.weights
        arrays["score.grid_interval"] = np.array([sm.grid.lo, sm.grid.hi])
        arrays["score.log_partition"] = np.array([sm.log_partition])
    cal = bundle.calibration
    if cal is not None:
        arrays["calibration"] = np.array([cal.p_anom, cal.kappa_z, cal.kappa_raw, cal.achieved_p])
    return arrays


def bundle_bytes(bundle: ModelBundle) -> bytes:
    arrays = _bundle_arrays(bundle)
    manifest, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    meta = {"provenance": bundle.provenance}
    if bundle.score_model is not None:
        sm = bundle.score_model
        meta["score"] = {
            "panels": sm.grid.panels,
            "nodes_per_panel": sm.grid.nodes_per_panel,
            "clamped": sm.normalizer.clamped,
            "fit_info": sm.fit_info,
        }
    if bundle.calibration is not None:
        meta["calibration"] = {"iterations": bundle.calibration.iterations}
    header = json.dumps({"arrays": manifest, "meta": meta}, sort_keys=True).encode()
    body = BUNDLE_MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def save_bundle(bundle: ModelBundle, path) -> str:
    """Write the bundle; returns its sha256 hex digest."""
    raw = bundle_bytes(bundle)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(raw)
    tmp.replace(path)
    return hashlib.sha256(raw).hexdigest()


def parse_bundle(raw: bytes) -> ModelBundle:
    if len(raw) < 10 + DIGEST_SIZE or raw[:4] != BUNDLE_MAGIC:
        raise BundleError("not a model bundle")
    body, digest = raw[:-DIGEST_SIZE], raw[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("bundle checksum mismatch")
    version, hlen = struct.unpack_from("<HI", body, 4)
    if version > FORMAT_VERSION:
        raise BundleVersionError(f"bundle format version {version} is newer than supported {FORMAT_VERSION}")
    if version != FORMAT_VERSION:
        raise BundleVersionError(f"unsupported bundle format version {version}")
    try:
        header = json.loads(body[10 : 10 + hlen].decode())
        payload = memoryview(body)[10 + hlen :]
        arrays = {}
        for entry in header["arrays"]:
            count = entry["nbytes"] // 8
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
            arrays[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
        meta = header["meta"]
    except (KeyError, ValueError, TypeError) as exc:
        raise BundleError(f"malformed bundle: {exc}") from exc

    def params(prefix):
        return GbrbmParams(*(arrays[f"{prefix}.{k}"] for k in ("b", "c", "w", "sigma")))

    bundle = ModelBundle(data_model=params("data"), provenance=meta.get("provenance", {}))
    if "f_star" in arrays:
        bundle.f_star = float(arrays["f_star"][0])
        bundle.v_star = arrays["v_star"]
    if "score.b" in arrays:
        sm_meta = meta["score"]
        mean, std, f_min_raw, z_min, z_hi = (float(x) for x in arrays["score.normalizer"])
        lo, hi = (float(x) for x in arrays["score.grid_interval"])
        bundle.score_model = ScoreModel(
            normalizer=ScoreNormalizer(mean, std, f_min_raw, z_min, z_hi, bool(sm_meta["clamped"])),
            params=params("score"),
            grid=QuadratureGrid(
                sm_meta["panels"], sm_meta["nodes_per_panel"], lo, hi,
                arrays["score.grid_nodes"], arrays["score.grid_weights"],
            ),
            log_partition=float(arrays["score.log_partition"][0]),
            fit_info=sm_meta.get("fit_info", {}),
        )
    if "calibration" in arrays:
        p, kz, kr, ach = (float(x) for x in arrays["calibration"])
        bundle.calibration = ThresholdCalibration(p, kz, kr, ach, int(meta["calibration"]["iterations"]))
    return bundle


def load_bundle(path) -> ModelBundle:
    return parse_bundle(Path(path).read_bytes())


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
