"""Learning slice distributions.

* :func:`pacsw_fit` ascends ``SW_p^p(mu_n, nu_n; vMF(m, k)) - KL(vMF || U) / lambda``.
* :func:`dsw_fit` ascends the same SW term with a hinge penalty on slice
  redundancy ``E|<theta, theta'>|`` instead of the KL term.
* :func:`maxsw_fit` finds a single direction by projected ascent.

Gradients with respect to the vMF parameters use the score-function
(likelihood-ratio) estimator, so nothing is differentiated through the
rejection sampler. The mean is moved in the tangent space and retracted onto
the sphere; the concentration is optimised in log scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel import bessel_ratio, bessel_ratio_derivative
from .errors import NumericalError
from .measures import PointCloud, quantile_coupling
from .rng import Stream, as_stream
from .sliced import per_slice_costs
from .sphere import VmfParams, VmfSlices, kl_vmf_uniform, sample_slices, sample_uniform_sphere

BASELINES = ("none", "leave-one-out-mean")
STEP_RULES = ("sgd", "adam")
LOG_KAPPA_RANGE = (math.log(1e-8), math.log(1e6))


@dataclass(frozen=True)
class PacSwConfig:
    lambda_exponent: float = 0.5
    lambda_override: float | None = None
    num_slices: int = 200
    iterations: int = 200
    learning_rate: float = 0.01
    p: float = 2.0
    seed: int = 0
    baseline: str = "leave-one-out-mean"
    step: str = "sgd"

    def __post_init__(self):
        if not 0.0 < self.lambda_exponent < 1.0:
            raise ValueError("lambda_exponent must lie in (0, 1)")
        if self.lambda_override is not None and not self.lambda_override > 0:
            raise ValueError("lambda_override must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.num_slices < 1:
            raise ValueError("num_slices must be >= 1")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.baseline == "leave-one-out-mean" and self.num_slices < 2:
            raise ValueError("a leave-one-out baseline needs num_slices >= 2")
        if self.step not in STEP_RULES:
            raise ValueError(f"step must be one of {STEP_RULES}")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    def lambda_for(self, n: int) -> float:
        if self.lambda_override is not None:
            return float(self.lambda_override)
        return float(n) ** self.lambda_exponent


@dataclass
class OptTrace:
    """One entry per iteration, recorded before the step is taken.

    ``objective = sw - penalty`` at every entry; for PAC-SW the penalty is
    ``kl / lambda``.
    """

    objective: list[float] = field(default_factory=list)
    sw: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    kappa: list[float] = field(default_factory=list)
    alignment: list[float] = field(default_factory=list)

    def append(self, objective, sw, kl, penalty, kappa, alignment):
        self.objective.append(float(objective))
        self.sw.append(float(sw))
        self.kl.append(float(kl))
        self.penalty.append(float(penalty))
        self.kappa.append(float(kappa))
        self.alignment.append(float(alignment))

    def __len__(self):
        return len(self.objective)

    def rows(self) -> list[dict]:
        keys = ("objective", "sw", "kl", "penalty", "kappa", "alignment")
        return [dict(iteration=t, **{k: getattr(self, k)[t] for k in keys}) for t in range(len(self))]


# --- score-function machinery ---------------------------------------------------


def score_terms(thetas: np.ndarray, params: VmfParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ``grad log vMF``: tangent part for the mean and the kappa part."""
    thetas = np.atleast_2d(thetas)
    cos = thetas @ params.mean
    tangent = params.kappa * (thetas - cos[:, None] * params.mean)
    dkappa = cos - bessel_ratio(params.dim, params.kappa)
    return tangent, dkappa


def centred_rewards(values: np.ndarray, baseline: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if baseline == "none":
        return values
    m = values.size
    if m < 2:
        raise ValueError("a leave-one-out baseline needs at least two samples")
    # w_j - mean of the others
    return (m * values - values.sum()) / (m - 1)


def score_function_gradient(
    values: np.ndarray, thetas: np.ndarray, params: VmfParams, baseline: str = "leave-one-out-mean"
) -> tuple[np.ndarray, float]:
    """Estimate ``grad E_{theta ~ vMF}[f(theta)]`` from samples and their ``f`` values.

    Returns the tangent-space gradient for the mean and the natural-scale
    derivative in kappa.
    """
    tangent, dkappa = score_terms(thetas, params)
    r = centred_rewards(values, baseline)
    return (r[:, None] * tangent).mean(axis=0), float(np.mean(r * dkappa))


# --- PAC-SW objective ------------------------------------------------------------


def _slices_for(params: VmfParams, m: int, stream: Stream) -> np.ndarray:
    return sample_slices(VmfSlices(params), m, stream)


def pacsw_objective(
    mu: PointCloud,
    nu: PointCloud,
    params: VmfParams,
    lam: float,
    p: float = 2.0,
    m: int = 200,
    stream: Stream | int | None = None,
) -> tuple[float, float, float]:
    """``(SW - KL / lambda, SW, KL)`` with SW estimated from ``m`` vMF slices."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    costs = per_slice_costs(mu, nu, _slices_for(params, m, as_stream(stream)), p)
    sw = float(costs.mean())
    kl = kl_vmf_uniform(params)
    return sw - kl / lam, sw, kl


def pacsw_gradient(
    mu: PointCloud,
    nu: PointCloud,
    params: VmfParams,
    lam: float,
    p: float = 2.0,
    m: int = 200,
    stream: Stream | int | None = None,
    baseline: str = "leave-one-out-mean",
) -> tuple[np.ndarray, float]:
    """Stochastic gradient of the PAC-SW objective.

    Returns ``(grad_mean_tangent, grad_log_kappa)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    slices = _slices_for(params, m, as_stream(stream))
    costs = per_slice_costs(mu, nu, slices, p)
    g_mean, g_kappa = score_function_gradient(costs, slices, params, baseline)
    g_kappa -= params.kappa * bessel_ratio_derivative(params.dim, params.kappa) / lam
    return g_mean, params.kappa * g_kappa


# --- the ascent loop -------------------------------------------------------------


class _Adam:
    def __init__(self, size: int, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def __call__(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def mean_abs_cosine(slices: np.ndarray) -> tuple[float, np.ndarray]:
    """U-statistic estimate of ``E|<theta, theta'>|`` over distinct pairs.

    Also returns, for each slice, the mean over the other slices.
    """
    m = slices.shape[0]
    if m < 2:
        raise ValueError("need at least two slices")
    g = np.abs(slices @ slices.T)
    np.fill_diagonal(g, 0.0)
    per = g.sum(axis=1) / (m - 1)
    return float(per.mean()), per


def _default_init(d: int, stream: Stream) -> VmfParams:
    return VmfParams(sample_uniform_sphere(d, stream.generator(0)), 1.0)


def _ascend(mu, nu, config: PacSwConfig, init: VmfParams | None, regulariser, tag: int):
    d = mu.dim
    stream = Stream(config.seed, (tag,))
    params = init if init is not None else _default_init(d, stream.child(0))
    if params.dim != d:
        raise ValueError(f"initial mean has dimension {params.dim}, data has {d}")
    m0 = params.mean.copy()
    mean = params.mean.copy()
    log_kappa = math.log(params.kappa)
    adam = _Adam(d + 1, config.learning_rate) if config.step == "adam" else None
    trace = OptTrace()
    for t in range(config.iterations):
        params = VmfParams(mean, math.exp(log_kappa))
        slices = _slices_for(params, config.num_slices, stream.child(1, t))
        costs = per_slice_costs(mu, nu, slices, config.p)
        sw = float(costs.mean())
        kl = kl_vmf_uniform(params)
        penalty, rewards, kappa_pull = regulariser(params, slices, costs, kl)
        objective = sw - penalty
        if not math.isfinite(objective):
            raise NumericalError(f"non-finite objective at iteration {t}")
        trace.append(objective, sw, kl, penalty, params.kappa, float(mean @ m0))
        g_mean, g_kappa = score_function_gradient(rewards, slices, params, config.baseline)
        g = np.append(g_mean, params.kappa * (g_kappa - kappa_pull))
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at iteration {t}")
        delta = adam(g) if adam is not None else config.learning_rate * g
        if np.any(delta[:d]):
            mean = mean + delta[:d]
            mean /= np.linalg.norm(mean)
        log_kappa = float(np.clip(log_kappa + delta[d], *LOG_KAPPA_RANGE))
    return VmfParams(mean, math.exp(log_kappa)), trace


def pacsw_fit(
    mu: PointCloud, nu: PointCloud, config: PacSwConfig = PacSwConfig(), init: VmfParams | None = None
) -> tuple[VmfParams, OptTrace]:
    """Stochastic ascent on ``SW_p^p(mu_n, nu_n; vMF) - KL / lambda``.

    ``lambda = n ** config.lambda_exponent`` with ``n`` the smaller sample size,
    unless ``config.lambda_override`` is set. Fresh slices are drawn at every
    iteration from an iteration-indexed stream.
    """
    lam = config.lambda_for(min(mu.n, nu.n))

    def kl_term(params, slices, costs, kl):
        return kl / lam, costs, bessel_ratio_derivative(params.dim, params.kappa) * params.kappa / lam

    return _ascend(mu, nu, config, init, kl_term, tag=1)


def dsw_fit(
    mu: PointCloud,
    nu: PointCloud,
    config: PacSwConfig = PacSwConfig(),
    lambda_c: float = 1.0,
    c_cap: float = 0.5,
    init: VmfParams | None = None,
) -> tuple[VmfParams, OptTrace]:
    """vMF-parameterised distributional SW.

    Ascends ``SW - lambda_c * max(0, E|<theta, theta'>| - c_cap)``; the
    ``penalty`` column of the trace holds the hinge term.
    """
    if lambda_c < 0:
        raise ValueError("lambda_c must be >= 0")
    if not 0.0 < c_cap <= 1.0:
        raise ValueError("c_cap must lie in (0, 1]")
    if config.num_slices < 2:
        raise ValueError("DSW needs at least two slices per iteration")

    def hinge(params, slices, costs, kl):
        redundancy, per = mean_abs_cosine(slices)
        excess = redundancy - c_cap
        if lambda_c == 0 or excess <= 0:
            return 0.0, costs, 0.0
        # grad E|<t, t'>| = 2 E[h(t) score(t)] with h(t) = E_t'|<t, t'>|
        return lambda_c * excess, costs - 2.0 * lambda_c * per, 0.0

    return _ascend(mu, nu, config, init, hinge, tag=2)


# --- max-SW ---------------------------------------------------------------------


def _maxsw_value_grad(mu: PointCloud, nu: PointCloud, theta: np.ndarray, p: float):
    xa = mu.points @ theta
    xb = nu.points @ theta
    if mu.n == nu.n and mu.uniform and nu.uniform:
        ia = np.argsort(xa, kind="stable")
        ib = np.argsort(xb, kind="stable")
        mass = np.full(mu.n, 1.0 / mu.n)
    else:
        ia, ib, mass = quantile_coupling(xa, mu.weights, xb, nu.weights)
    s = xa[ia] - xb[ib]
    value = float(np.sum(mass * np.abs(s) ** p))
    coef = mass * p * np.abs(s) ** (p - 1) * np.sign(s)
    grad = coef @ mu.points[ia] - coef @ nu.points[ib]
    return value, grad


def maxsw_fit(
    mu: PointCloud,
    nu: PointCloud,
    p: float = 2.0,
    iterations: int = 100,
    eta: float = 1.0,
    restarts: int = 5,
    stream: Stream | int | None = None,
) -> tuple[np.ndarray, float]:
    """Projected (sub)gradient ascent for the max-sliced direction.

    Each step re-solves the 1D matching along the current direction, moves
    along the subgradient of the matched cost and renormalises. For ``p = 2``
    this is a shifted power iteration on the matched second-moment matrix.
    The best direction seen over all restarts is returned with its ``W_p^p``.
    """
    if iterations < 1 or restarts < 1:
        raise ValueError("iterations and restarts must be >= 1")
    stream = as_stream(stream)
    best_theta, best_value = None, -np.inf
    for r in range(restarts):
        theta = sample_uniform_sphere(mu.dim, stream.generator(r))
        for _ in range(iterations):
            value, grad = _maxsw_value_grad(mu, nu, theta, p)
            if value > best_value:
                best_theta, best_value = theta.copy(), value
            step = theta + eta * grad
            norm = np.linalg.norm(step)
            if not norm > 0:
                break
            step /= norm
            if np.linalg.norm(step - theta) < 1e-13:
                break
            theta = step
        value, _ = _maxsw_value_grad(mu, nu, theta, p)
        if value > best_value:
            best_theta, best_value = theta.copy(), value
    return best_theta, best_value
