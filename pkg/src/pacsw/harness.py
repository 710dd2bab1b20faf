"""Experiment runner: convergence curves, discrimination, class pairs, bound validity.

Every experiment is a grid of independent tasks. Each task derives its random
streams from the experiment seed and its grid indices only, so results do not
depend on execution order or on the number of worker threads. Task outputs are
per-replicate :class:`Record` rows, which :func:`aggregate` turns into
:class:`CurvePoint` percentile summaries.
"""
from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import PacSwConfig, dsw_fit, maxsw_fit, pacsw_fit
from .bounds import BoundConstants, Bounded, assemble_bound
from .datasets import SyntheticSpec, generate, load_idx_images
from .errors import DataError
from .measures import PointCloud
from .rng import Stream
from .sliced import per_slice_costs, sw_translation
from .sphere import DiracSlices, UniformSlices, VmfParams, VmfSlices, kl_vmf_uniform, sample_slices, sample_uniform_sphere, sample_vmf

EXPERIMENTS = ("convergence", "discrimination", "class_pair", "bound_validity")
METHODS = ("sw_uniform", "pacsw", "dsw", "maxsw")
CURVE_COLUMNS = (
    "experiment", "law", "n", "d", "gamma", "kappa", "method", "statistic",
    "median", "p10", "p90", "mean", "count",
)

_EXPERIMENT_TAG = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}
_METHOD_TAG = {name: i + 1 for i, name in enumerate(METHODS)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that affects an experiment's output.

    Grids that an experiment does not use are ignored by it. ``laws`` selects
    the synthetic families (``uniform_cube``, ``gaussian``).
    """

    experiment: str = "convergence"
    n_grid: tuple[int, ...] = (100, 1000, 10000)
    d_grid: tuple[int, ...] = (5, 20)
    gamma_grid: tuple[float, ...] = (0.0,)
    kappa_grid: tuple[float, ...] = (1.0, 50.0)
    methods: tuple[str, ...] = ("sw_uniform",)
    laws: tuple[str, ...] = ("uniform_cube", "gaussian")
    replicates: int = 30
    seed: int = 0
    threads: int = 1
    p: float = 1.0
    eval_slices: int = 1000
    side: float = 5.0
    covariance: str = "random_psd"
    # fitting
    fit_slices: int = 200
    iterations: int = 200
    learning_rates: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0)
    step: str = "adam"
    baseline: str = "leave-one-out-mean"
    lambda_exponent: float = 0.5
    lambda_c: float = 1.0
    c_cap: float = 0.5
    maxsw_iterations: int = 100
    maxsw_restarts: int = 5
    test_size: int = 2000
    # bounds
    delta: float = 0.05
    C: float = 1.0
    C_prime: float = 1.0
    reference_slices: int = 100_000
    # class pairs
    images_path: str | None = None
    labels_path: str | None = None
    classes: tuple[int, int] = (4, 5)
    # outputs
    output_csv: str | None = None
    output_manifest: str | None = None

    def __post_init__(self):
        casts = {"n_grid": int, "d_grid": int, "gamma_grid": float, "kappa_grid": float,
                 "learning_rates": float, "classes": int, "methods": str, "laws": str}
        for name, cast in casts.items():
            object.__setattr__(self, name, tuple(cast(v) for v in getattr(self, name)))
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("n_grid", "d_grid", "gamma_grid", "kappa_grid", "methods", "laws", "learning_rates"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        for law in self.laws:
            SyntheticSpec(kind=law)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if min(self.n_grid) < 2 or min(self.d_grid) < 2:
            raise ValueError("grid values of n and d must be >= 2")
        if any(k < 0 for k in self.kappa_grid):
            raise ValueError("kappa grid values must be >= 0 (0 means uniform slices)")
        if len(self.classes) != 2:
            raise ValueError("classes must name exactly two labels")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise DataError("config file not found", path=str(path)) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def stream(self) -> Stream:
        return Stream(self.seed, (_EXPERIMENT_TAG[self.experiment],))


@dataclass(frozen=True)
class Record:
    """One statistic from one replicate. Unused coordinates are None."""

    experiment: str
    statistic: str
    value: float
    replicate: int
    law: str | None = None
    n: int | None = None
    d: int | None = None
    gamma: float | None = None
    kappa: float | None = None
    method: str | None = None

    def coords(self) -> tuple:
        return (self.experiment, self.law, self.n, self.d, self.gamma, self.kappa, self.method, self.statistic)


@dataclass(frozen=True)
class CurvePoint:
    experiment: str
    law: str | None
    n: int | None
    d: int | None
    gamma: float | None
    kappa: float | None
    method: str | None
    statistic: str
    median: float
    p10: float
    p90: float
    mean: float
    count: int

    def row(self) -> list:
        return [getattr(self, c) for c in CURVE_COLUMNS]


def _key_part(v):
    # None sorts before any value of the same column
    return (0, "") if v is None else (1, v)


def _coord_key(coords: tuple) -> tuple:
    return tuple(_key_part(v) for v in coords)


def aggregate(records: list[Record]) -> list[CurvePoint]:
    """Median, 10th/90th percentiles and mean per coordinate tuple."""
    groups: dict[tuple, list[tuple[int, float]]] = {}
    for r in records:
        groups.setdefault(r.coords(), []).append((r.replicate, r.value))
    out = []
    for coords in sorted(groups, key=_coord_key):
        vals = np.array([v for _, v in sorted(groups[coords])])
        p10, med, p90 = np.percentile(vals, [10, 50, 90])
        exp, law, n, d, gamma, kappa, method, stat = coords
        out.append(CurvePoint(exp, law, n, d, gamma, kappa, method, stat,
                              float(med), float(p10), float(p90), float(vals.mean()), int(vals.size)))
    return out


def loglog_slope(ns, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _run_tasks(tasks: list, fn, threads: int) -> list[Record]:
    if threads <= 1 or len(tasks) <= 1:
        chunks = [fn(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(fn, tasks))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (_coord_key(r.coords()), r.replicate))
    return records


def _spec(config: ExperimentConfig, law: str, d: int, n: int, gamma: float, stream: Stream) -> SyntheticSpec:
    return SyntheticSpec(
        kind=law, dim=d, n=n, seed=stream.derive_seed(), side=config.side,
        mean_shift=gamma, covariance=config.covariance, cov_seed=config.seed,
    )


def _slice_law(d: int, kappa: float, mean_stream: Stream):
    if kappa == 0:
        return UniformSlices(d)
    return VmfSlices(VmfParams(sample_uniform_sphere(d, mean_stream.generator(0)), kappa))


# --- convergence --------------------------------------------------------------------


def convergence_records(config: ExperimentConfig) -> list[Record]:
    """``SW_p^p(mu_n, nu_n; vMF(m, kappa))`` for two samples of the same law.

    The population value is 0, so each estimate is the approximation error.
    The vMF mean is uniformly random per replicate; the two clouds of a
    replicate are shared across the kappa grid.
    """
    root = config.stream()
    tasks = [
        (li, law, di, d, ni, n, r)
        for li, law in enumerate(config.laws)
        for di, d in enumerate(config.d_grid)
        for ni, n in enumerate(config.n_grid)
        for r in range(config.replicates)
    ]

    def task(t):
        li, law, di, d, ni, n, r = t
        s = root.child(li, di, ni, r)
        mu, nu = generate(_spec(config, law, d, n, 0.0, s.child(0)))
        out = []
        for ki, kappa in enumerate(config.kappa_grid):
            ks = s.child(1, ki)
            slices = sample_slices(_slice_law(d, kappa, ks.child(0)), config.eval_slices, ks.child(1))
            value = float(per_slice_costs(mu, nu, slices, config.p).mean())
            out.append(Record("convergence", "sw_error", value, r, law, n, d, 0.0, float(kappa), "sw_vmf"))
        return out

    return _run_tasks(tasks, task, config.threads)


def run_convergence(config: ExperimentConfig) -> list[CurvePoint]:
    return aggregate(convergence_records(config))


# --- fitting methods ----------------------------------------------------------------


@dataclass
class FitOutcome:
    rho: object
    train_objective: float | None = None
    objective_name: str | None = None
    params: VmfParams | None = None
    learning_rate: float | None = None
    extras: dict = field(default_factory=dict)


def _tail_mean(values: list[float]) -> float:
    k = max(1, len(values) // 10)
    return float(np.mean(values[-k:]))


def fit_method(method: str, mu: PointCloud, nu: PointCloud, config: ExperimentConfig, stream: Stream) -> FitOutcome:
    """Fit one method on a training pair, selecting the step size on train value."""
    d = mu.dim
    if method == "sw_uniform":
        return FitOutcome(UniformSlices(d))
    if method == "maxsw":
        best = None
        for i, eta in enumerate(config.learning_rates):
            theta, value = maxsw_fit(mu, nu, config.p, config.maxsw_iterations, eta, config.maxsw_restarts, stream.child(i))
            if best is None or value > best[1]:
                best = (theta, value, eta)
        theta, value, eta = best
        return FitOutcome(DiracSlices(theta[None, :]), value, "maxsw_value", learning_rate=eta)
    fit = pacsw_fit if method == "pacsw" else dsw_fit
    best = None
    for i, lr in enumerate(config.learning_rates):
        pc = PacSwConfig(
            lambda_exponent=config.lambda_exponent, num_slices=config.fit_slices,
            iterations=config.iterations, learning_rate=lr, p=config.p,
            seed=stream.child(i).derive_seed(), baseline=config.baseline, step=config.step,
        )
        if method == "pacsw":
            params, trace = fit(mu, nu, pc)
        else:
            params, trace = fit(mu, nu, pc, lambda_c=config.lambda_c, c_cap=config.c_cap)
        score = _tail_mean(trace.objective)
        if best is None or score > best[1]:
            best = (params, score, lr)
    params, score, lr = best
    name = "pacsw_objective" if method == "pacsw" else "dsw_penalized_objective"
    return FitOutcome(VmfSlices(params), score, name, params=params, learning_rate=lr)


def _direction_of(outcome: FitOutcome) -> np.ndarray | None:
    if outcome.params is not None:
        return outcome.params.mean
    if isinstance(outcome.rho, DiracSlices):
        return outcome.rho.directions[0]
    return None


def _method_records(
    experiment: str, method: str, outcome: FitOutcome, train, test, config: ExperimentConfig,
    stream: Stream, coords: dict, replicate: int, shift: np.ndarray | None = None,
) -> list[Record]:
    mu, nu = train
    mu_t, nu_t = test
    eval_slices = sample_slices(outcome.rho, config.eval_slices, stream.child(0))
    train_sw = float(per_slice_costs(mu, nu, eval_slices, config.p).mean())
    test_sw = float(per_slice_costs(mu_t, nu_t, eval_slices, config.p).mean())

    def rec(stat, value):
        return Record(experiment, stat, float(value), replicate, method=method, **coords)

    out = [rec("train_sw", train_sw), rec("test_sw", test_sw)]
    if outcome.objective_name is not None:
        out.append(rec(outcome.objective_name, outcome.train_objective))
    if outcome.learning_rate is not None:
        out.append(rec("learning_rate", outcome.learning_rate))
    direction = _direction_of(outcome)
    if direction is not None and shift is not None and np.any(shift):
        out.append(rec("alignment", abs(direction @ shift) / np.linalg.norm(shift)))
    if outcome.params is not None:
        out.append(rec("kappa", outcome.params.kappa))
    if method == "pacsw" and coords.get("law") == "uniform_cube" and shift is not None:
        out.extend(rec(k, v) for k, v in _bound_check(outcome.params, train_sw, test_sw, mu.n, coords, shift, config, stream.child(1)).items())
    return out


def _reference_slices(rho, m: int, stream: Stream) -> np.ndarray:
    # one vectorised draw; the reference is a plain Monte-Carlo integral
    gen = stream.generator(0)
    if isinstance(rho, VmfSlices):
        return sample_vmf(rho.params, gen, size=m)
    return sample_uniform_sphere(rho.dim, gen, size=m)


def _bound_check(params, train_sw, test_sw, n, coords, shift, config: ExperimentConfig, stream: Stream) -> dict:
    """Bounded-support lower bound against the exact population value.

    For ``nu = mu + s`` every projection is a translate, so the population
    ``SW_p^p(mu, nu; rho) = E_rho |<theta, s>|^p``; it is estimated from
    ``config.reference_slices`` draws of ``rho`` and needs no data samples.
    """
    d = coords["d"]
    regime = Bounded(math.sqrt(d) * (config.side + coords["gamma"]))
    lam = float(n) ** config.lambda_exponent
    report = assemble_bound(
        train_sw, kl_vmf_uniform(params), regime, config.p, lam, n, config.delta,
        BoundConstants(C=config.C, C_prime=config.C_prime),
    )
    reference = sw_translation(shift, _reference_slices(VmfSlices(params), config.reference_slices, stream), config.p)
    eps = report.phi_term + report.kl_term + report.psi_term
    gap = train_sw - test_sw
    return {
        "lower_bound": report.lower_bound,
        "reference_sw": reference,
        "bound_holds": float(report.lower_bound <= reference),
        "gap": gap,
        "epsilon": eps,
        "gap_within_epsilon": float(abs(gap) <= eps),
    }


# --- discrimination -----------------------------------------------------------------


def discrimination_records(config: ExperimentConfig) -> list[Record]:
    """Fit each method on ``n``-point training samples, evaluate on ``test_size`` fresh points.

    Within one replicate all methods see the same train and test pairs.
    Train and test SW use the same evaluation slices drawn from the learned
    distribution.
    """
    root = config.stream()
    tasks = [
        (li, law, di, d, ni, n, gi, gamma, r)
        for li, law in enumerate(config.laws)
        for di, d in enumerate(config.d_grid)
        for ni, n in enumerate(config.n_grid)
        for gi, gamma in enumerate(config.gamma_grid)
        for r in range(config.replicates)
    ]

    def task(t):
        li, law, di, d, ni, n, gi, gamma, r = t
        s = root.child(li, di, ni, gi, r)
        spec = _spec(config, law, d, n, gamma, s.child(0))
        train = generate(spec)
        test = generate(_spec(config, law, d, config.test_size, gamma, s.child(1)))
        shift = spec.shift_vector
        coords = dict(law=law, n=n, d=d, gamma=float(gamma))
        out = []
        for method in config.methods:
            ms = s.child(2, _METHOD_TAG[method])
            outcome = fit_method(method, *train, config, ms.child(0))
            out.extend(_method_records("discrimination", method, outcome, train, test, config, ms.child(1), coords, r, shift))
        return out

    return _run_tasks(tasks, task, config.threads)


def run_discrimination(config: ExperimentConfig) -> list[CurvePoint]:
    return aggregate(discrimination_records(config))


# --- class pairs --------------------------------------------------------------------


def _load_class_pair(config: ExperimentConfig) -> tuple[PointCloud, PointCloud]:
    if not config.images_path or not config.labels_path:
        raise DataError(
            "class_pair needs images_path and labels_path pointing at IDX files "
            "(e.g. train-images-idx3-ubyte and train-labels-idx1-ubyte)"
        )
    for p in (config.images_path, config.labels_path):
        if not Path(p).exists():
            raise DataError(
                "IDX file not found; place the uncompressed image and label files there "
                "or set images_path/labels_path in the config",
                path=str(p),
            )
    clouds = load_idx_images(config.images_path, config.labels_path, config.classes)
    a, b = config.classes
    return clouds[a], clouds[b]


def class_pair_records(config: ExperimentConfig) -> list[Record]:
    """Per training size: subsample each class, fit, evaluate on held-out points."""
    full_a, full_b = _load_class_pair(config)
    available = min(full_a.n, full_b.n)
    too_big = [n for n in config.n_grid if n >= available]
    if too_big:
        raise DataError(f"training sizes {too_big} leave no held-out points; smallest class has {available} images")
    root = config.stream()
    tasks = [(ni, n, r) for ni, n in enumerate(config.n_grid) for r in range(config.replicates)]

    def split(cloud, n, gen):
        perm = gen.permutation(cloud.n)
        held = perm[n:][: config.test_size]
        return PointCloud(cloud.points[perm[:n]]), PointCloud(cloud.points[held])

    def task(t):
        ni, n, r = t
        s = root.child(ni, r)
        tr_a, te_a = split(full_a, n, s.child(0).generator(0))
        tr_b, te_b = split(full_b, n, s.child(0).generator(1))
        coords = dict(law="idx_classes", n=n, d=full_a.dim)
        out = []
        for method in config.methods:
            ms = s.child(2, _METHOD_TAG[method])
            outcome = fit_method(method, tr_a, tr_b, config, ms.child(0))
            out.extend(_method_records("class_pair", method, outcome, (tr_a, tr_b), (te_a, te_b), config, ms.child(1), coords, r))
        return out

    return _run_tasks(tasks, task, config.threads)


def run_class_pair(config: ExperimentConfig) -> list[CurvePoint]:
    return aggregate(class_pair_records(config))


# --- bound validity -----------------------------------------------------------------


def bound_validity_records(config: ExperimentConfig) -> list[Record]:
    """Coverage of the bounded-support lower bound under a fixed slice law.

    Uses uniform-cube pairs ``nu = mu + gamma * 1``. The slice law (vMF with a
    seeded mean, or uniform when kappa is 0) is fixed before any data are
    drawn, and ``lambda = n ** lambda_exponent``.
    """
    root = config.stream()
    tasks = [
        (di, d, ni, n, gi, gamma, ki, kappa, r)
        for di, d in enumerate(config.d_grid)
        for ni, n in enumerate(config.n_grid)
        for gi, gamma in enumerate(config.gamma_grid)
        for ki, kappa in enumerate(config.kappa_grid)
        for r in range(config.replicates)
    ]
    constants = BoundConstants(C=config.C, C_prime=config.C_prime)

    def task(t):
        di, d, ni, n, gi, gamma, ki, kappa, r = t
        law_stream = root.child(0, di, ki)
        rho = _slice_law(d, kappa, law_stream)
        kl = kl_vmf_uniform(rho.params) if isinstance(rho, VmfSlices) else 0.0
        spec = _spec(config, "uniform_cube", d, n, gamma, root.child(1, di, ni, gi, r))
        mu, nu = generate(spec)
        slices = sample_slices(rho, config.eval_slices, root.child(2, di, ni, gi, ki, r))
        sw_hat = float(per_slice_costs(mu, nu, slices, config.p).mean())
        lam = float(n) ** config.lambda_exponent
        report = assemble_bound(sw_hat, kl, Bounded(spec.support_diameter()), config.p, lam, n, config.delta, constants)
        ref = sw_translation(spec.shift_vector, _reference_slices(rho, config.reference_slices, law_stream.child(1)), config.p)
        coords = dict(law="uniform_cube", n=n, d=d, gamma=float(gamma), kappa=float(kappa), method="fixed_rho")
        return [
            Record("bound_validity", stat, float(v), r, **coords)
            for stat, v in (
                ("sw_hat", sw_hat),
                ("lower_bound", report.lower_bound),
                ("reference_sw", ref),
                ("violation", float(ref < report.lower_bound)),
            )
        ]

    return _run_tasks(tasks, task, config.threads)


def run_bound_validity(config: ExperimentConfig) -> list[CurvePoint]:
    return aggregate(bound_validity_records(config))


RUNNERS = {
    "convergence": run_convergence,
    "discrimination": run_discrimination,
    "class_pair": run_class_pair,
    "bound_validity": run_bound_validity,
}


def run_experiment(config: ExperimentConfig) -> list[CurvePoint]:
    return RUNNERS[config.experiment](config)


# --- output -------------------------------------------------------------------------


def version_string() -> str:
    """Package version, plus ``git describe`` output when run from a checkout."""
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = res.stdout.strip()
    return f"{__version__}+{described}" if res.returncode == 0 and described else __version__


def manifest(config: dict, seed: int, command: str) -> dict:
    """Run description stored next to every output.

    The thread count is left out on purpose: results are identical for any
    number of workers, and keeping it would break byte-identical outputs.
    """
    config = {k: v for k, v in config.items() if k != "threads"}
    return {"command": command, "seed": int(seed), "version": version_string(), "config": config}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def curves_to_csv(points: list[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for p in points:
        w.writerow([_fmt(v) for v in p.row()])
    return buf.getvalue()


def curves_to_json(points: list[CurvePoint]) -> list[dict]:
    return [asdict(p) for p in points]


def write_outputs(points: list[CurvePoint], config: ExperimentConfig, csv_path=None, manifest_path=None) -> None:
    csv_path = csv_path or config.output_csv
    manifest_path = manifest_path or config.output_manifest
    if csv_path:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        Path(csv_path).write_text(curves_to_csv(points), encoding="utf-8")
    if manifest_path:
        Path(manifest_path).parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(manifest(config.to_dict(), config.seed, "experiment"), indent=2)
        Path(manifest_path).write_text(text + "\n", encoding="utf-8")
