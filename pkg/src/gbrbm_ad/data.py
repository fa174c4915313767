"""Datasets: the four-image toy corpus, IDX parsing, pixel normalization and noise."""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIDE = 28
N_PIXELS = SIDE * SIDE
TOP_ROWS = 14

IDX_IMAGES = 2051
IDX_LABELS = 2049

NORMAL, ANOMALOUS = 0, 1

DATASET_MAGIC = b"GBDS"
DATASET_VERSION = 1


class IdxParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_std: float = 0.0
    flip_prob: float = 0.0
    truncate: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gaussian_std < 0:
            raise ValueError("gaussian_std must be nonnegative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "gaussian_std": self.gaussian_std,
            "flip_prob": self.flip_prob,
            "truncate": self.truncate,
            "seed": self.seed,
        }


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.uint8).ravel()
        if self.points.shape[0] != self.labels.size:
            raise ValueError("points and labels differ in length")
        if not np.all(np.isin(self.labels, (NORMAL, ANOMALOUS))):
            raise ValueError("labels must be 0 (normal) or 1 (anomalous)")

    def __len__(self) -> int:
        return self.labels.size

    @property
    def normal(self) -> np.ndarray:
        return self.points[self.labels == NORMAL]

    @property
    def anomalous(self) -> np.ndarray:
        return self.points[self.labels == ANOMALOUS]


def basic_images() -> np.ndarray:
    """The four 28x28 {-1,+1} images, flattened; the last is the anomalous one."""
    top = np.zeros((SIDE, SIDE), dtype=bool)
    top[:TOP_ROWS] = True
    imgs = np.empty((4, SIDE, SIDE))
    imgs[0] = -1.0
    imgs[1] = 1.0
    imgs[2] = np.where(top, -1.0, 1.0)
    imgs[3] = np.where(top, 1.0, -1.0)
    return imgs.reshape(4, N_PIXELS)


def apply_toy_noise(images: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Flip {-1,+1} pixels, then add Gaussian noise, then clip to [-1, 1] if requested."""
    out = np.array(images, dtype=np.float64, copy=True)
    if noise.flip_prob > 0:
        flips = rng.random(out.shape) < noise.flip_prob
        out[flips] = -out[flips]
    if noise.gaussian_std > 0:
        out += rng.normal(0.0, noise.gaussian_std, size=out.shape)
    if noise.truncate:
        np.clip(out, -1.0, 1.0, out=out)
    return out


def generate_toy(
    per_class: int,
    noise: NoiseSpec,
    include_anomalies: bool = False,
    rng: np.random.Generator | None = None,
    n_anomalous: int | None = None,
) -> LabeledDataset:
    """Noisy replicas of the three normal basic images, plus optionally the fourth.

    ``n_anomalous`` defaults to ``per_class`` copies of the anomalous image.
    """
    if per_class < 1:
        raise ValueError("per_class must be positive")
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    imgs = basic_images()
    n_anom = (per_class if n_anomalous is None else n_anomalous) if include_anomalies else 0
    source = np.concatenate([np.repeat(np.arange(3), per_class), np.full(n_anom, 3)])
    points = apply_toy_noise(imgs[source], noise, rng)
    labels = (source == 3).astype(np.uint8)
    provenance = {
        "source": "toy",
        "per_class": per_class,
        "n_anomalous": n_anom,
        "anomaly_image": "top +1 / bottom -1",
        "noise": noise.as_dict(),
    }
    return LabeledDataset(points, labels, provenance)


@dataclass(frozen=True)
class IdxTensor:
    magic: int
    dims: tuple[int, ...]
    payload: np.ndarray

    def array(self) -> np.ndarray:
        return self.payload.reshape(self.dims)


_EXPECTED_NDIM = {IDX_IMAGES: 3, IDX_LABELS: 1}


def parse_idx(data: bytes) -> IdxTensor:
    """Parse an unsigned-byte IDX image (2051) or label (2049) file."""
    if len(data) < 4:
        raise IdxParseError("truncated magic number", len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic not in _EXPECTED_NDIM:
        raise IdxParseError(f"bad magic number 0x{magic:08x}", 0)
    ndim = _EXPECTED_NDIM[magic]
    if (magic & 0xFF) != ndim:
        raise IdxParseError("dimension count disagrees with the magic number", 3)
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IdxParseError("truncated dimension header", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    size = int(np.prod(dims, dtype=np.int64))
    available = len(data) - header_end
    if available < size:
        raise IdxParseError(f"truncated payload: expected {size} bytes, found {available}", len(data))
    if available > size:
        raise IdxParseError(f"{available - size} unexpected trailing bytes", header_end + size)
    payload = np.frombuffer(data, dtype=np.uint8, count=size, offset=header_end).copy()
    return IdxTensor(magic=magic, dims=tuple(int(d) for d in dims), payload=payload)


def serialize_idx(tensor: IdxTensor) -> bytes:
    if tensor.payload.size != int(np.prod(tensor.dims, dtype=np.int64)):
        raise ValueError("payload length does not match the dimensions")
    header = struct.pack(f">I{len(tensor.dims)}I", tensor.magic, *tensor.dims)
    return header + np.asarray(tensor.payload, dtype=np.uint8).tobytes()


def read_idx(path) -> IdxTensor:
    return parse_idx(Path(path).read_bytes())


def normalize_pixels(pixels) -> np.ndarray:
    """Map bytes 0..255 linearly onto [-1, 1]."""
    return 2.0 * (np.asarray(pixels, dtype=np.float64) / 255.0) - 1.0


def normalize_and_noise(
    images: IdxTensor,
    noise: NoiseSpec,
    labels: IdxTensor | None = None,
    keep_labels=None,
    rng: np.random.Generator | None = None,
) -> LabeledDataset:
    """Normalize an image tensor and add Gaussian noise.

    Images whose label is in ``keep_labels`` are marked normal and all others anomalous;
    without labels every image is normal.
    """
    if images.magic != IDX_IMAGES:
        raise ValueError("expected an image tensor (magic 2051)")
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    count = images.dims[0]
    x = normalize_pixels(images.array().reshape(count, -1))
    if labels is not None:
        if labels.magic != IDX_LABELS or labels.dims[0] != count:
            raise ValueError(f"label tensor does not align with {count} images")
        keep = np.asarray(list(keep_labels) if keep_labels is not None else [], dtype=np.int64)
        is_normal = np.isin(labels.payload.astype(np.int64), keep)
    else:
        is_normal = np.ones(count, dtype=bool)
    if noise.gaussian_std > 0:
        x = x + rng.normal(0.0, noise.gaussian_std, size=x.shape)
    if noise.truncate:
        np.clip(x, -1.0, 1.0, out=x)
    provenance = {
        "source": "idx",
        "normal_classes": [int(k) for k in (keep_labels or [])],
        "noise": noise.as_dict(),
    }
    return LabeledDataset(x, np.where(is_normal, NORMAL, ANOMALOUS), provenance)


def subsample(
    dataset: LabeledDataset, n_normal: int, n_anomalous: int, rng: np.random.Generator
) -> LabeledDataset:
    """Random subset with the requested class counts (fewer if a class is short)."""
    picks = []
    for label, n in ((NORMAL, n_normal), (ANOMALOUS, n_anomalous)):
        idx = np.flatnonzero(dataset.labels == label)
        picks.append(np.sort(rng.choice(idx, size=min(n, idx.size), replace=False)))
    idx = np.concatenate(picks)
    prov = dict(dataset.provenance, subsample={"n_normal": n_normal, "n_anomalous": n_anomalous})
    return LabeledDataset(dataset.points[idx], dataset.labels[idx], prov)


# --- dataset files -----------------------------------------------------------
#
# Binary layout, little-endian:
#   b"GBDS" | u16 version | u32 len(provenance json) | json | u64 N | u64 n_v
#   | u8 labels[N] | f64 points[N * n_v] (row-major)


def save_dataset(dataset: LabeledDataset, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        _save_csv(dataset, path)
        return
    prov = json.dumps(dataset.provenance, sort_keys=True).encode()
    n, n_v = dataset.points.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<HI", DATASET_VERSION, len(prov)))
        fh.write(prov)
        fh.write(struct.pack("<QQ", n, n_v))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
        fh.write(dataset.points.astype("<f8").tobytes())


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    if path.suffix == ".csv":
        return _load_csv(path)
    raw = path.read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise ValueError(f"{path} is not a dataset file")
    version, plen = struct.unpack_from("<HI", raw, 4)
    if version != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    off = 10
    prov = json.loads(raw[off : off + plen].decode())
    off += plen
    n, n_v = struct.unpack_from("<QQ", raw, off)
    off += 16
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off)
    off += n
    if len(raw) - off != 8 * n * n_v:
        raise ValueError(f"{path} has a truncated or oversized payload")
    points = np.frombuffer(raw, dtype="<f8", count=n * n_v, offset=off).reshape(n, n_v)
    return LabeledDataset(points.astype(np.float64), labels.copy(), prov)


def _save_csv(dataset: LabeledDataset, path: Path) -> None:
    n_v = dataset.points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{i}" for i in range(n_v)])
        for label, row in zip(dataset.labels, dataset.points):
            writer.writerow([int(label)] + [repr(float(x)) for x in row])


def _load_csv(path: Path) -> LabeledDataset:
    text = path.read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[0] != "label":
        raise ValueError(f"{path}: first column must be 'label'")
    labels, points = [], []
    for row in reader:
        labels.append(int(row[0]))
        points.append([float(x) for x in row[1:]])
    return LabeledDataset(np.array(points).reshape(len(labels), -1), labels, {"source": str(path)})
