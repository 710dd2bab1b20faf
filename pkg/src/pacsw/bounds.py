"""PAC-Bayesian lower bounds on the population adaptive SW.

With probability at least ``1 - delta`` over the samples,

    SW_p^p(mu, nu; rho) >= SW_p^p(mu_n, nu_n; rho)
                           - lambda * phi / n
                           - (KL(rho || rho_0) + log(1/delta)) / lambda
                           - psi(n)

where ``phi`` bounds the moment generating function of one projected cost and
``psi`` is a sample-complexity rate. Both depend on a moment regime for
``mu, nu``. The rate constants ``C`` (bounded supports) and ``C'`` (unbounded
supports) are only known to exist; they are configuration, default to 1 and
are echoed in every report.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericalError


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class Bounded:
    diameter: float

    def __post_init__(self):
        _positive("diameter", self.diameter)


@dataclass(frozen=True)
class SubGaussian:
    sigma2: float
    tau2: float

    def __post_init__(self):
        _positive("sigma2", self.sigma2)
        _positive("tau2", self.tau2)

    @property
    def sigma2_star(self) -> float:
        return max(self.sigma2, self.tau2)


@dataclass(frozen=True)
class Bernstein:
    sigma2: float
    b: float
    tau2: float
    c: float

    def __post_init__(self):
        for name in ("sigma2", "b", "tau2", "c"):
            _positive(name, getattr(self, name))

    @property
    def sigma2_star(self) -> float:
        return max(self.sigma2, self.tau2)

    @property
    def b_star(self) -> float:
        return max(self.b, self.c)

    def lambda_limit(self, n: int) -> float:
        return n / (2.0 * self.b_star)


MomentRegime = Bounded | SubGaussian | Bernstein


@dataclass(frozen=True)
class BoundConstants:
    """Unnamed constants of the sample-complexity rates.

    ``q`` is the Bernstein moment order; None means ``2p + 2``.
    """

    C: float = 1.0
    C_prime: float = 1.0
    q: float | None = None

    def moment_order(self, p: float) -> float:
        q = 2.0 * p + 2.0 if self.q is None else float(self.q)
        if not q > 2.0 * p:
            raise ValueError(f"Bernstein moment order q must exceed 2p = {2 * p}, got {q}")
        return q


def regime_name(regime: MomentRegime) -> str:
    return {Bounded: "bounded", SubGaussian: "subgaussian", Bernstein: "bernstein"}[type(regime)]


def _require_p1(regime: MomentRegime, p: float) -> None:
    if not isinstance(regime, Bounded) and p != 1:
        raise ValueError("phi undefined for p>1 under this regime")


def phi_value(regime: MomentRegime, p: float, lam: float, n: int) -> float:
    """MGF constant of the per-slice cost.

    Bounded: ``Delta^{2p} / 2``. Sub-Gaussian (p = 1): ``sigma^2 + tau^2``.
    Bernstein (p = 1, ``lambda < n / (2 b*)``):
    ``2 sigma*^2 / n / (1 - 2 b* lambda / n)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    _require_p1(regime, p)
    if isinstance(regime, Bounded):
        return regime.diameter ** (2.0 * p) / 2.0
    if isinstance(regime, SubGaussian):
        return regime.sigma2 + regime.tau2
    if lam >= regime.lambda_limit(n):
        raise ValueError(f"Bernstein regime needs lambda < n / (2 b*) = {regime.lambda_limit(n)}, got {lam}")
    return 2.0 * regime.sigma2_star / n / (1.0 - 2.0 * regime.b_star * lam / n)


def psi_value(regime: MomentRegime, p: float, n: int, constants: BoundConstants = BoundConstants()) -> float:
    """Sample-complexity term ``psi(n)``."""
    if n < 2:
        raise ValueError("psi needs n >= 2")
    if isinstance(regime, Bounded):
        return constants.C * p * regime.diameter**p / math.sqrt(n)
    rate = math.sqrt(math.log(n) / n)
    if isinstance(regime, SubGaussian):
        return constants.C_prime * (4.0 * regime.sigma2_star) ** p * rate
    q = constants.moment_order(p)
    return (
        constants.C_prime
        * regime.sigma2_star ** (p / q)
        * regime.b_star ** (p * (q - 2.0) / q)
        * rate
    )


@dataclass(frozen=True)
class BoundReport:
    sw_hat: float
    kl: float
    lam: float
    delta: float
    phi_term: float
    psi_term: float
    kl_term: float
    lower_bound: float
    constants_used: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        order = ["sw_hat", "kl", "lambda", "delta", "phi_term", "psi_term", "kl_term", "lower_bound", "constants_used"]
        return {k: out[k] for k in order}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def _check_common(kl: float, lam: float, delta: float) -> None:
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if kl < 0:
        raise ValueError("KL must be >= 0")


def assemble_bound(
    sw_hat: float,
    kl: float,
    regime: MomentRegime,
    p: float,
    lam: float,
    n: int,
    delta: float = 0.05,
    constants: BoundConstants = BoundConstants(),
) -> BoundReport:
    """Evaluate the lower bound for one posterior ``rho``.

    ``delta = 1`` is accepted and simply removes the confidence term.
    """
    _check_common(kl, lam, delta)
    phi = phi_value(regime, p, lam, n)
    phi_term = lam * phi / n
    kl_term = (kl + math.log(1.0 / delta)) / lam
    psi_term = psi_value(regime, p, n, constants)
    lower = sw_hat - phi_term - kl_term - psi_term
    used = {"regime": regime_name(regime), **asdict(regime), "C": constants.C, "C_prime": constants.C_prime}
    if isinstance(regime, Bernstein):
        used["q"] = constants.moment_order(p)
    if not math.isfinite(lower) and math.isfinite(sw_hat) and math.isfinite(kl):
        raise NumericalError("lower bound is not finite")
    return BoundReport(
        sw_hat=float(sw_hat),
        kl=float(kl),
        lam=float(lam),
        delta=float(delta),
        phi_term=float(phi_term),
        psi_term=float(psi_term),
        kl_term=float(kl_term),
        lower_bound=float(lower),
        constants_used=used,
    )


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def best_lambda(
    kl: float,
    regime: MomentRegime,
    p: float,
    n: int,
    delta: float = 0.05,
    constants: BoundConstants = BoundConstants(),
) -> float:
    """``lambda`` maximising the bound for a fixed posterior.

    For constant ``phi`` this is ``sqrt(n (KL + log 1/delta) / phi)``; for the
    Bernstein regime a golden-section search runs over ``(0, n / (2 b*))``.
    When ``KL + log(1/delta) = 0`` the conventional ``sqrt(n)`` is returned.
    """
    _check_common(kl, 1.0, delta)
    budget = kl + math.log(1.0 / delta)
    if budget <= 0:
        return math.sqrt(n)
    if isinstance(regime, Bernstein):
        limit = regime.lambda_limit(n)

        def objective(lam):
            return -lam * phi_value(regime, p, lam, n) / n - budget / lam

        return _golden_max(objective, limit * 1e-12, limit * (1.0 - 1e-12))
    phi = phi_value(regime, p, 1.0, n)
    return math.sqrt(n * budget / phi)


# --- plug-in regime estimates (not covered by the guarantee) ------------------------


def estimate_diameter(*clouds, block: int = 2048) -> float:
    """Largest pairwise distance across the union of the given clouds.

    A plug-in guess for ``Delta``; the guarantee needs the true support diameter.
    """
    pts = np.vstack([np.asarray(getattr(c, "points", c), dtype=float) for c in clouds])
    sq = np.einsum("ij,ij->i", pts, pts)
    best = 0.0
    for s in range(0, pts.shape[0], block):
        blk = pts[s : s + block]
        d2 = sq[s : s + block, None] + sq[None, :] - 2.0 * blk @ pts.T
        best = max(best, float(d2.max()))
    return math.sqrt(max(best, 0.0))


def estimate_subgaussian_proxy(cloud, directions, lambdas=None) -> float:
    """Plug-in variance proxy: ``max over theta, lambda of 2 log M(lambda) / lambda^2``.

    ``M`` is the empirical MGF of the centred projections; the result is a
    heuristic, not a certified constant.
    """
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if lambdas is None:
        lambdas = np.concatenate([-np.geomspace(0.05, 3.0, 12), np.geomspace(0.05, 3.0, 12)])
    lambdas = np.asarray(lambdas, dtype=float)
    proj = pts @ directions.T
    proj -= proj.mean(axis=0)
    best = 0.0
    for lam in lambdas:
        a = lam * proj
        amax = a.max(axis=0)
        log_mgf = amax + np.log(np.mean(np.exp(a - amax), axis=0))
        best = max(best, float(np.max(2.0 * log_mgf / lam**2)))
    return best
