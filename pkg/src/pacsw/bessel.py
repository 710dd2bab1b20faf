"""Modified Bessel function helpers for the von Mises-Fisher family.

The workhorse is the mean resultant length ``A_d(k) = I_{d/2}(k) / I_{d/2-1}(k)``,
evaluated as a continued fraction so that ``I_nu`` itself is never formed.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

_TINY = 1e-300
_CF_TOL = 1e-16
_CF_MAX_TERMS = 10_000_000


def bessel_ratio(d: int, kappa: float) -> float:
    """Mean resultant length ``A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa)``.

    Uses the Gauss continued fraction

        I_nu / I_{nu-1} = 1 / (2 nu / x + 1 / (2 (nu+1) / x + ...))

    evaluated with the modified Lentz algorithm.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    kappa = float(kappa)
    if not (kappa > 0 and math.isfinite(kappa)):
        raise ValueError(f"kappa must be finite and > 0, got {kappa!r}")
    nu = 0.5 * d
    # f = b0 + 1/(b1 + 1/(b2 + ...)), b_k = 2 (nu + k) / kappa, and A = 1/f.
    two_over_x = 2.0 / kappa
    f = nu * two_over_x
    c = f
    dd = 0.0
    for k in range(1, _CF_MAX_TERMS):
        b = (nu + k) * two_over_x
        dd = b + dd
        if dd == 0.0:
            dd = _TINY
        c = b + 1.0 / c
        if c == 0.0:
            c = _TINY
        dd = 1.0 / dd
        delta = c * dd
        f *= delta
        if abs(delta - 1.0) < _CF_TOL:
            break
    else:  # pragma: no cover - only reachable for absurd kappa
        raise ArithmeticError("Bessel ratio continued fraction did not converge")
    return 1.0 / f


def bessel_ratio_derivative(d: int, kappa: float) -> float:
    """``dA_d/dkappa = 1 - A^2 - (d-1) A / kappa``."""
    a = bessel_ratio(d, kappa)
    return 1.0 - a * a - (d - 1) * a / kappa


def _log_series_normalized(nu: float, x: float) -> float:
    """log of ``I_nu(x) Gamma(nu+1) (2/x)^nu = sum_k (x^2/4)^k / (k! (nu+1)_k)``."""
    q = 0.25 * x * x
    if q <= nu + 1.0:
        # terms shrink at least geometrically after the first one
        term, tail = 1.0, 0.0
        for k in range(1, 400):
            term *= q / (k * (nu + k))
            tail += term
            if term < 1e-17 * tail:
                break
        return math.log1p(tail)
    peak = 0.5 * (-nu + math.sqrt(nu * nu + x * x))
    kmax = int(peak + 40.0 * math.sqrt(peak + 1.0) + 60)
    k = np.arange(kmax, dtype=float)
    logs = k * math.log(q) - special.gammaln(k + 1.0) - (special.gammaln(nu + k + 1.0) - math.lgamma(nu + 1.0))
    return float(special.logsumexp(logs))


def log_bessel_i(nu: float, x: float) -> float:
    """``log I_nu(x)`` for ``nu >= 0`` and ``x > 0`` without overflow."""
    if x <= 0:
        raise ValueError("x must be > 0")
    if 0.25 * x * x > nu + 1.0:
        scaled = special.ive(nu, x)
        if math.isfinite(scaled) and scaled > 1e-290:
            return math.log(scaled) + x
    return _log_series_normalized(nu, x) + nu * math.log(0.5 * x) - math.lgamma(nu + 1.0)


def log_sphere_area(d: int) -> float:
    """log of the surface area of the unit sphere in ``R^d``."""
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d)


def log_vmf_normalizer(d: int, kappa: float) -> float:
    """``log C_{d/2}(kappa) = (d/2-1) log k - (d/2) log(2 pi) - log I_{d/2-1}(k)``."""
    nu = 0.5 * d - 1.0
    return nu * math.log(kappa) - 0.5 * d * math.log(2.0 * math.pi) - log_bessel_i(nu, kappa)


def log_normalized_series(d: int, kappa: float) -> float:
    """``log[I_nu(k) Gamma(nu+1) (2/k)^nu]`` with ``nu = d/2 - 1``.

    Equals ``-(log C_{d/2}(k) + log area(S^{d-1}))``; it vanishes as ``k -> 0`` and
    is computed directly so the KL divergence keeps full relative accuracy there.
    """
    nu = 0.5 * d - 1.0
    x = float(kappa)
    if 0.25 * x * x <= nu + 1.0:
        return _log_series_normalized(nu, x)
    return log_bessel_i(nu, x) - nu * math.log(0.5 * x) + math.lgamma(nu + 1.0)
