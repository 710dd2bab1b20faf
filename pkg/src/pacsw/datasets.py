"""Synthetic sample pairs and loaders for point-cloud data."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .measures import PointCloud
from .rng import Stream

KINDS = ("uniform_cube", "gaussian")
COVARIANCES = ("identity", "random_psd")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-sample problem: ``mu`` and ``nu = mu + mean_shift * 1``.

    ``uniform_cube`` draws from ``U([0, side]^d)``; ``gaussian`` from
    ``N(0, Sigma)`` with ``Sigma`` the identity or ``A A^T / d`` for a seeded
    standard normal ``A``.
    """

    kind: str = "gaussian"
    dim: int = 2
    n: int = 500
    seed: int = 0
    side: float = 5.0
    mean_shift: float = 0.0
    covariance: str = "identity"
    cov_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.covariance not in COVARIANCES:
            raise ValueError(f"covariance must be one of {COVARIANCES}")
        if self.dim < 1 or self.n < 1:
            raise ValueError("dim and n must be >= 1")
        if not self.side > 0:
            raise ValueError("side must be > 0")
        if self.mean_shift < 0:
            raise ValueError("mean_shift must be >= 0")

    @property
    def shift_vector(self) -> np.ndarray:
        return np.full(self.dim, float(self.mean_shift))

    def support_diameter(self) -> float:
        """Diameter of a set containing both supports (uniform cube only)."""
        if self.kind != "uniform_cube":
            raise ValueError("only the uniform cube has bounded support")
        return math.sqrt(self.dim) * (self.side + self.mean_shift)


def random_psd(dim: int, seed: int) -> np.ndarray:
    a = Stream(seed, (7,)).generator(0).standard_normal((dim, dim))
    return a @ a.T / dim


def covariance_factor(spec: SyntheticSpec) -> np.ndarray:
    if spec.covariance == "identity":
        return np.eye(spec.dim)
    cov = random_psd(spec.dim, spec.cov_seed)
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _draw(spec: SyntheticSpec, gen: np.random.Generator, factor) -> np.ndarray:
    if spec.kind == "uniform_cube":
        return gen.uniform(0.0, spec.side, size=(spec.n, spec.dim))
    return gen.standard_normal((spec.n, spec.dim)) @ factor.T


def generate(spec: SyntheticSpec) -> tuple[PointCloud, PointCloud]:
    """Draw ``(mu_n, nu_n)``; bit-identical for equal specs."""
    stream = Stream(spec.seed, (11,))
    factor = covariance_factor(spec) if spec.kind == "gaussian" else None
    x = _draw(spec, stream.generator(0), factor)
    y = _draw(spec, stream.generator(1), factor) + spec.shift_vector
    return PointCloud(x), PointCloud(y)


# --- CSV ---------------------------------------------------------------------------


def load_csv(path) -> PointCloud:
    """One point per row, comma separated, no header."""
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path=str(path))
    rows = []
    width = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not f.strip() for f in record):
                continue
            try:
                values = [float(f) for f in record]
            except ValueError:
                raise DataError("non-numeric field", path=str(path), line=lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"expected {width} fields, got {len(values)}", path=str(path), line=lineno)
            if not all(math.isfinite(v) for v in values):
                raise DataError("NaN or infinite value", path=str(path), line=lineno)
            rows.append(values)
    if not rows:
        raise DataError("empty file", path=str(path))
    return PointCloud(np.array(rows, dtype=float))


def save_csv(cloud: PointCloud, path) -> None:
    np.savetxt(path, cloud.points, delimiter=",", fmt="%.17g")


# --- IDX (MNIST family) -----------------------------------------------------------------


def _read_header(buf: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise DataError("truncated header", path=str(path), offset=len(buf))
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise DataError(f"unexpected magic 0x{found:08x}, expected 0x{magic:08x}", path=str(path), offset=0)
    return struct.unpack_from(f">{ndim}I", buf, 4)


def read_idx_images(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path=str(path))
    buf = path.read_bytes()
    count, rows, cols = _read_header(buf, IDX_IMAGES_MAGIC, 3, path)
    size = count * rows * cols
    if len(buf) - 16 < size:
        raise DataError(f"truncated payload: need {size} bytes", path=str(path), offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path=str(path))
    buf = path.read_bytes()
    (count,) = _read_header(buf, IDX_LABELS_MAGIC, 1, path)
    if len(buf) - 8 < count:
        raise DataError(f"truncated payload: need {count} bytes", path=str(path), offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def load_idx_images(images_path, labels_path, classes, flatten_scale: float = 1.0 / 255.0) -> dict[int, PointCloud]:
    """Group flattened, scaled images by label.

    Images are flattened row-major to ``d = rows * cols`` coordinates.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.size:
        raise DataError(
            f"image count {images.shape[0]} does not match label count {labels.size}",
            path=str(labels_path),
            offset=4,
        )
    flat = images.reshape(images.shape[0], -1).astype(float) * flatten_scale
    out = {}
    for c in sorted(set(int(c) for c in classes)):
        rows = flat[labels == c]
        if rows.shape[0] == 0:
            raise DataError(f"no images with label {c}", path=str(labels_path))
        out[c] = PointCloud(rows)
    return out
