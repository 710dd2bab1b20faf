"""Empirical measures, 1D projections and exact one-dimensional Wasserstein costs.

Every cost returned here is the p-th power ``W_p^p``; use :func:`pth_root` to
get the distance itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

_WEIGHT_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_weights(weights: np.ndarray, n: int) -> None:
    if weights.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise ValueError("weights must be finite and strictly positive")
    if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights sum to {weights.sum()!r}, not 1")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n`` points in ``R^d`` with positive weights summing to one.

    Leaving ``weights`` as None gives the uniform empirical measure.
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be an (n, d) array with n, d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or infinite coordinates")
        n = pts.shape[0]
        uniform = self.weights is None
        w = np.full(n, 1.0 / n) if uniform else np.asarray(self.weights, dtype=float)
        _check_weights(w, n)
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "uniform", uniform or bool(np.all(w == w[0])))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def scaled(self, factor: float) -> "PointCloud":
        return PointCloud(self.points * factor, None if self.uniform else self.weights)

    def translated(self, shift) -> "PointCloud":
        return PointCloud(self.points + np.asarray(shift, dtype=float), None if self.uniform else self.weights)


@dataclass(frozen=True, eq=False)
class Projected1D:
    values: np.ndarray
    weights: np.ndarray | None = None
    sorted: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("a 1D measure needs at least one atom")
        if not np.all(np.isfinite(v)):
            raise ValueError("values contain NaN or infinite entries")
        n = v.size
        uniform = self.weights is None
        w = np.full(n, 1.0 / n) if uniform else np.asarray(self.weights, dtype=float)
        _check_weights(w, n)
        if self.sorted and np.any(np.diff(v) < 0):
            raise ValueError("sorted flag set but values are not nondecreasing")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "uniform", uniform or bool(np.all(w == w[0])))

    def __len__(self) -> int:
        return self.values.size

    def sort(self) -> "Projected1D":
        if self.sorted:
            return self
        order = np.argsort(self.values, kind="stable")
        return Projected1D(self.values[order], None if self.uniform else self.weights[order], sorted=True)


def project(cloud: PointCloud, theta) -> Projected1D:
    """Push ``cloud`` forward through ``x -> <theta, x>``."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != cloud.dim:
        raise DimensionMismatchError(f"direction has dimension {theta.size}, cloud has {cloud.dim}")
    return Projected1D(cloud.points @ theta, None if cloud.uniform else cloud.weights)


def wasserstein_1d_equal(a: Projected1D, b: Projected1D, p: float = 2.0, *, fallback: bool = False) -> float:
    """``W_p^p`` between two uniform measures with the same number of atoms.

    Matches order statistics: ``(1/n) sum_i |a_(i) - b_(i)|^p``. Inputs that are
    not equal-size and uniform raise ``ValueError`` unless ``fallback`` is set, in
    which case the quantile sweep of :func:`wasserstein_1d_general` is used.
    """
    _check_order(p)
    if len(a) != len(b) or not (a.uniform and b.uniform):
        if fallback:
            return wasserstein_1d_general(a, b, p)
        raise ValueError("wasserstein_1d_equal needs equal-size uniform measures")
    # sorting values alone: ties are interchangeable, so stability is irrelevant
    xa = a.values if a.sorted else np.sort(a.values)
    xb = b.values if b.sorted else np.sort(b.values)
    return float(np.mean(np.abs(xa - xb) ** p))


def quantile_coupling(va, wa, vb, wb):
    """Monotone (quantile) coupling between two weighted 1D measures.

    Returns ``(ia, ib, mass)``: atom ``ia[k]`` of the first measure is sent to
    atom ``ib[k]`` of the second with mass ``mass[k]``. Indices refer to the
    unsorted inputs.
    """
    va = np.asarray(va, dtype=float)
    vb = np.asarray(vb, dtype=float)
    oa = np.argsort(va, kind="stable")
    ob = np.argsort(vb, kind="stable")
    ca = np.cumsum(np.asarray(wa, dtype=float)[oa])
    cb = np.cumsum(np.asarray(wb, dtype=float)[ob])
    ca[-1] = 1.0
    cb[-1] = 1.0
    knots = np.union1d(ca, cb)
    knots = knots[knots > 0.0]
    mass = np.diff(knots, prepend=0.0)
    keep = mass > 0.0
    knots, mass = knots[keep], mass[keep]
    # evaluate both quantile functions at the middle of each segment
    mid = knots - 0.5 * mass
    ka = np.minimum(np.searchsorted(ca, mid, side="left"), ca.size - 1)
    kb = np.minimum(np.searchsorted(cb, mid, side="left"), cb.size - 1)
    return oa[ka], ob[kb], mass


def wasserstein_1d_general(a: Projected1D, b: Projected1D, p: float = 2.0) -> float:
    """``W_p^p`` for arbitrary weighted 1D measures via the quantile integral."""
    _check_order(p)
    ia, ib, mass = quantile_coupling(a.values, a.weights, b.values, b.weights)
    return float(np.sum(mass * np.abs(a.values[ia] - b.values[ib]) ** p))


def wasserstein_1d(a: Projected1D, b: Projected1D, p: float = 2.0) -> float:
    """Dispatch to the sorted formula when possible, else the quantile sweep."""
    return wasserstein_1d_equal(a, b, p, fallback=True)


def pth_root(cost: float, p: float) -> float:
    """Turn a ``W_p^p`` (or ``SW_p^p``) value into the distance itself."""
    return float(max(cost, 0.0) ** (1.0 / p))


def _check_order(p: float) -> None:
    if not np.isfinite(p) or p < 1:
        raise ValueError(f"order p must be >= 1, got {p!r}")


def projected_costs(mu: PointCloud, nu: PointCloud, slices: np.ndarray, p: float) -> np.ndarray:
    """Per-direction ``W_p^p`` for every row of ``slices`` (shape ``(m, d)``).

    Equal-size uniform clouds take a vectorised sort along the sample axis;
    anything else falls back to one quantile sweep per direction. The value for
    a direction does not depend on the other rows of ``slices``.
    """
    _check_order(p)
    slices = np.atleast_2d(np.asarray(slices, dtype=float))
    if slices.shape[1] != mu.dim or mu.dim != nu.dim:
        raise DimensionMismatchError(
            f"slices have dimension {slices.shape[1]}, clouds have {mu.dim} and {nu.dim}"
        )
    # one matrix-vector product per direction: a blocked matrix product would
    # round differently depending on where a direction sits in the block
    m = slices.shape[0]
    xa = np.empty((m, mu.n))
    xb = np.empty((m, nu.n))
    for j in range(m):
        np.dot(mu.points, slices[j], out=xa[j])
        np.dot(nu.points, slices[j], out=xb[j])
    if mu.n == nu.n and mu.uniform and nu.uniform:
        xa.sort(axis=1)
        xb.sort(axis=1)
        diff = np.abs(xa - xb)
        if p != 1:
            diff **= p
        return diff.mean(axis=1)
    out = np.empty(slices.shape[0])
    for j in range(slices.shape[0]):
        ia, ib, mass = quantile_coupling(xa[j], mu.weights, xb[j], nu.weights)
        out[j] = np.sum(mass * np.abs(xa[j, ia] - xb[j, ib]) ** p)
    return out
