"""Distributions of slices on the unit sphere ``S^{d-1}``.

Directions are plain ``float`` arrays of shape ``(d,)``, or ``(m, d)`` for a
batch. :func:`as_direction` validates them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bessel import (
    bessel_ratio,
    bessel_ratio_derivative,
    log_normalized_series,
    log_sphere_area,
    log_vmf_normalizer,
)
from .errors import DimensionMismatchError, SamplingError
from .rng import Stream, as_stream

UNIT_TOL = 1e-10
MAX_REJECTION_TRIALS = 10**6


def as_direction(coords, *, normalize: bool = False) -> np.ndarray:
    v = np.array(coords, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("directions live on S^{d-1} with d >= 2")
    norm = np.linalg.norm(v)
    if normalize:
        if not norm > 0:
            raise ValueError("cannot normalise the zero vector")
        v /= norm
    elif abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"direction has norm {norm!r}, expected 1")
    return v


def normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class VmfParams:
    mean: np.ndarray
    kappa: float

    def __post_init__(self):
        m = as_direction(self.mean)
        m.setflags(write=False)
        k = float(self.kappa)
        if not (math.isfinite(k) and k > 0):
            raise ValueError(f"kappa must be finite and > 0, got {self.kappa!r}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "kappa", k)

    @property
    def dim(self) -> int:
        return self.mean.size

    def __repr__(self):
        return f"VmfParams(mean={np.array2string(self.mean, precision=4)}, kappa={self.kappa:.6g})"


# --- samplers -----------------------------------------------------------------


def sample_uniform_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Normalised standard Gaussian vectors: the rotation-invariant law on ``S^{d-1}``."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    shape = (d,) if size is None else (size, d)
    while True:
        z = rng.standard_normal(shape)
        norms = np.linalg.norm(z, axis=-1, keepdims=True)
        if np.all(norms > 0):
            return z / norms


def _wood_constants(d: int, kappa: float) -> tuple[float, float, float]:
    dm1 = d - 1.0
    b = dm1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + dm1 * dm1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * math.log1p(-x0 * x0)
    return b, x0, c


def _sample_vmf_weight(d: int, kappa: float, n: int, rng: np.random.Generator, max_trials: int) -> np.ndarray:
    """Wood's rejection sampler for ``w = <theta, mean>``."""
    dm1 = d - 1.0
    b, x0, c = _wood_constants(d, kappa)
    out = np.empty(n)
    pending = np.arange(n)
    for _ in range(max_trials):
        k = pending.size
        z = rng.beta(0.5 * dm1, 0.5 * dm1, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        log_u = np.log1p(-rng.random(size=k))
        accept = kappa * w + dm1 * np.log1p(-x0 * w) - c >= log_u
        out[pending[accept]] = w[accept]
        pending = pending[~accept]
        if pending.size == 0:
            return out
    raise SamplingError(
        f"vMF rejection sampler exceeded {max_trials} trials (d={d}, kappa={kappa})"
    )


def householder_to(mean: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply the reflection sending ``e_d`` to ``mean`` to the rows of ``x``."""
    u = -np.array(mean, dtype=float)
    u[-1] += 1.0
    norm = np.linalg.norm(u)
    if norm < 1e-12:
        return x
    u /= norm
    if x.ndim == 1:
        return x - 2.0 * (x @ u) * u
    return x - 2.0 * np.outer(x @ u, u)


def sample_vmf(
    params: VmfParams,
    rng: np.random.Generator,
    size: int | None = None,
    *,
    max_trials: int = MAX_REJECTION_TRIALS,
) -> np.ndarray:
    """Draw from ``vMF(mean, kappa)``.

    The component along the north pole ``e_d`` is rejection-sampled, the
    remainder is uniform on the orthogonal sphere, and a Householder reflection
    carries ``e_d`` onto the mean. A sample needing more than ``max_trials``
    proposals raises :class:`SamplingError`.
    """
    d = params.dim
    n = 1 if size is None else int(size)
    w = _sample_vmf_weight(d, params.kappa, n, rng, max_trials)
    v = sample_uniform_sphere(d - 1, rng, n) if d > 2 else rng.choice([-1.0, 1.0], size=(n, 1))
    x = np.empty((n, d))
    x[:, :-1] = v * np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None]
    x[:, -1] = w
    x = householder_to(params.mean, x)
    return x[0] if size is None else x


# --- densities and divergences --------------------------------------------------


def vmf_log_density(theta, params: VmfParams) -> np.ndarray | float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != params.dim:
        raise DimensionMismatchError(f"theta has dimension {theta.shape[-1]}, vMF has {params.dim}")
    val = log_vmf_normalizer(params.dim, params.kappa) + params.kappa * (theta @ params.mean)
    return float(val) if np.ndim(val) == 0 else val


def kl_vmf_uniform(params: VmfParams) -> float:
    """``KL(vMF(m, kappa) || U(S^{d-1}))``; independent of the mean.

    Written as ``kappa A_d(kappa) - log S(kappa)`` where
    ``log S = -(log C_{d/2}(kappa) + log area)``, which avoids cancelling two
    O(1) logs when kappa is small.
    """
    d, k = params.dim, params.kappa
    kl = k * bessel_ratio(d, k) - log_normalized_series(d, k)
    return max(kl, 0.0)


def kl_vmf_uniform_grad(d: int, kappa: float) -> float:
    """``d KL / d kappa = kappa A_d'(kappa)``."""
    return kappa * bessel_ratio_derivative(d, kappa)


def uniform_log_density(d: int) -> float:
    return -log_sphere_area(d)


# --- slice distributions ----------------------------------------------------------


@dataclass(frozen=True)
class UniformSlices:
    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return sample_uniform_sphere(self.dim, rng)


@dataclass(frozen=True)
class VmfSlices:
    params: VmfParams

    def __post_init__(self):
        d, kappa = self.params.dim, self.params.kappa
        object.__setattr__(self, "_wood", _wood_constants(d, kappa))
        u = -np.array(self.params.mean)
        u[-1] += 1.0
        norm = np.linalg.norm(u)
        object.__setattr__(self, "_reflect", u / norm if norm >= 1e-12 else None)

    @property
    def dim(self) -> int:
        return self.params.dim

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        # scalar twin of sample_vmf; same algorithm, less array overhead
        d, kappa = self.params.dim, self.params.kappa
        b, x0, c = self._wood
        half = 0.5 * (d - 1.0)
        for _ in range(MAX_REJECTION_TRIALS):
            z = rng.beta(half, half)
            w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
            if kappa * w + (d - 1.0) * math.log1p(-x0 * w) - c >= math.log1p(-rng.random()):
                break
        else:
            raise SamplingError(f"vMF rejection sampler exceeded {MAX_REJECTION_TRIALS} trials")
        x = np.empty(d)
        if d > 2:
            v = rng.standard_normal(d - 1)
            x[:-1] = v * (math.sqrt(max(1.0 - w * w, 0.0)) / math.sqrt(v @ v))
        else:
            x[0] = math.sqrt(max(1.0 - w * w, 0.0)) * (1.0 if rng.random() < 0.5 else -1.0)
        x[-1] = w
        u = self._reflect
        if u is not None:
            x -= (2.0 * (x @ u)) * u
        return x


@dataclass(frozen=True, eq=False)
class DiracSlices:
    """Equal-mass atoms at fixed directions; sampling cycles through them."""

    directions: np.ndarray

    def __post_init__(self):
        dirs = np.atleast_2d(np.array(self.directions, dtype=float))
        if dirs.shape[0] == 0:
            raise ValueError("a Dirac slice set needs at least one direction")
        for row in dirs:
            as_direction(row)
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


SliceDistribution = UniformSlices | VmfSlices | DiracSlices


def sample_slices(rho: SliceDistribution, m: int, stream: Stream | int | None = None) -> np.ndarray:
    """``m`` directions from ``rho`` as an ``(m, d)`` array.

    Draw ``j`` uses generator ``j`` of ``stream``, so the output depends only on
    the stream and ``j``. Dirac sets are cycled deterministically.
    """
    if m < 1:
        raise ValueError(f"need at least one slice, got m={m}")
    if isinstance(rho, DiracSlices):
        k = rho.directions.shape[0]
        return rho.directions[np.arange(m) % k].copy()
    stream = as_stream(stream)
    out = np.empty((m, rho.dim))
    for j, gen in enumerate(stream.generators(m)):
        out[j] = rho.draw(gen)
    return out
