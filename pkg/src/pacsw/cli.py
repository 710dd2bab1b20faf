"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command prints its result together with a manifest holding the full
set of options, the seed and the package version.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from .adaptive import BASELINES, STEP_RULES, PacSwConfig, dsw_fit, maxsw_fit, pacsw_fit
from .bounds import BoundConstants, Bernstein, Bounded, SubGaussian, assemble_bound
from .datasets import load_csv
from .errors import DataError, DimensionMismatchError, NumericalError
from .harness import ExperimentConfig, curves_to_csv, curves_to_json, manifest, run_experiment, write_outputs
from .rng import Stream
from .sliced import sw_estimate, sw_estimate_with_slices
from .sphere import UniformSlices, VmfParams, VmfSlices, as_direction, kl_vmf_uniform, sample_slices

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_pair(p):
    p.add_argument("--mu", required=True, help="CSV file with the first point cloud")
    p.add_argument("--nu", required=True, help="CSV file with the second point cloud")
    p.add_argument("--p", type=float, default=2.0, help="order of the cost (default 2)")


def _add_regime(p, required: bool):
    p.add_argument("--regime", choices=("bounded", "subgaussian", "bernstein"), required=required)
    p.add_argument("--diameter", type=float, help="support diameter (bounded)")
    p.add_argument("--sigma2", type=float, help="variance proxy of mu")
    p.add_argument("--tau2", type=float, help="variance proxy of nu")
    p.add_argument("--b", type=float, help="Bernstein scale of mu")
    p.add_argument("--c", type=float, help="Bernstein scale of nu")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--psi-constant", type=float, default=1.0, help="value of C and C' in the psi term")
    p.add_argument("--psi-q", type=float, default=None, help="Bernstein moment order (default 2p + 2)")


def _add_fit(p):
    _add_pair(p)
    p.add_argument("--slices", type=int, default=200, help="slices per iteration")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--step", choices=STEP_RULES, default="adam")
    p.add_argument("--baseline", choices=BASELINES, default="leave-one-out-mean")
    p.add_argument("--lambda-exponent", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed lambda (overrides n**alpha)")
    p.add_argument("--eval-slices", type=int, default=1000, help="slices for the final SW estimate")
    p.add_argument("--trace", action="store_true", help="include the per-iteration trace")


def _add_globals(p, defaults: bool):
    def d(v):
        return v if defaults else argparse.SUPPRESS

    p.add_argument("--seed", type=int, default=d(0), help="base seed of every random stream")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads")
    p.add_argument("--output", choices=("json", "csv"), default=d("json"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pacsw", description="Adaptive Sliced-Wasserstein distances and PAC-Bayes lower bounds.")
    _add_globals(parser, defaults=True)
    # the same flags are accepted after the subcommand; unset ones keep the top-level value
    common = _Parser(add_help=False)
    _add_globals(common, defaults=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("sw", help="Monte-Carlo SW_p^p estimate")
    _add_pair(p)
    p.add_argument("--slices", type=int, default=1000)
    p.add_argument("--rho", choices=("uniform", "vmf"), default="uniform")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--mean", type=_floats, default=None, help="vMF mean, comma separated")
    p.add_argument("--per-slice", action="store_true")

    p = sub.add_parser("maxsw", help="max-sliced direction by projected ascent")
    _add_pair(p)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--restarts", type=int, default=5)

    p = sub.add_parser("pacsw", help="fit a vMF slice law by PAC-Bayes bound ascent")
    _add_fit(p)
    _add_regime(p, required=False)

    p = sub.add_parser("dsw", help="fit a vMF slice law with the DSW diversity penalty")
    _add_fit(p)
    p.add_argument("--lambda-c", type=float, default=1.0)
    p.add_argument("--c-cap", type=float, default=0.5)

    p = sub.add_parser("bound", help="assemble the lower bound from its ingredients")
    p.add_argument("--sw-hat", type=float, required=True)
    p.add_argument("--kl", type=float, required=True)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="default sqrt(n)")
    _add_regime(p, required=True)

    p = sub.add_parser("experiment", help="run an experiment config (JSON)")
    p.add_argument("--config", required=True)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-manifest", default=None)
    return parser


def _regime(args):
    def need(*names):
        missing = [f"--{n}" for n in names if getattr(args, n) is None]
        if missing:
            raise _UsageError(f"pacsw: error: regime {args.regime} needs {', '.join(missing)}")
        return [getattr(args, n) for n in names]

    if args.regime == "bounded":
        return Bounded(*need("diameter"))
    if args.regime == "subgaussian":
        return SubGaussian(*need("sigma2", "tau2"))
    sigma2, b, tau2, c = need("sigma2", "b", "tau2", "c")
    return Bernstein(sigma2, b, tau2, c)


def _constants(args) -> BoundConstants:
    return BoundConstants(C=args.psi_constant, C_prime=args.psi_constant, q=args.psi_q)


def _cmd_sw(args):
    mu, nu = load_csv(args.mu), load_csv(args.nu)
    if args.rho == "uniform":
        rho = UniformSlices(mu.dim)
    else:
        mean = as_direction(args.mean, normalize=True) if args.mean else np.eye(mu.dim)[0]
        rho = VmfSlices(VmfParams(mean, args.kappa))
    est = sw_estimate(mu, nu, rho, args.p, args.slices, Stream(args.seed, (101,)),
                      keep_per_slice=args.per_slice, workers=args.threads)
    return est.to_dict()


def _cmd_maxsw(args):
    mu, nu = load_csv(args.mu), load_csv(args.nu)
    theta, value = maxsw_fit(mu, nu, args.p, args.iterations, args.eta, args.restarts, Stream(args.seed, (102,)))
    return {"value": value, "direction": theta.tolist()}


def _fit_config(args) -> PacSwConfig:
    return PacSwConfig(
        lambda_exponent=args.lambda_exponent, lambda_override=args.lam, num_slices=args.slices,
        iterations=args.iterations, learning_rate=args.lr, p=args.p, seed=args.seed,
        baseline=args.baseline, step=args.step,
    )


def _fit_result(args, mu, nu, params, trace, extra):
    slices = sample_slices(VmfSlices(params), args.eval_slices, Stream(args.seed, (103,)))
    est = sw_estimate_with_slices(mu, nu, slices, args.p, workers=args.threads)
    out = {
        "mean": params.mean.tolist(),
        "kappa": params.kappa,
        "kl": kl_vmf_uniform(params),
        "sw": est.value,
        "sw_std_error": est.std_error,
        "final_objective": trace.objective[-1],
        **extra,
    }
    if args.trace:
        out["trace"] = trace.rows()
    return out, est


def _cmd_pacsw(args):
    mu, nu = load_csv(args.mu), load_csv(args.nu)
    config = _fit_config(args)
    n = min(mu.n, nu.n)
    lam = config.lambda_for(n)
    params, trace = pacsw_fit(mu, nu, config)
    out, est = _fit_result(args, mu, nu, params, trace, {"lambda": lam})
    if args.regime is not None:
        report = assemble_bound(est.value, out["kl"], _regime(args), args.p, lam, n, args.delta, _constants(args))
        out["bound"] = report.to_dict()
    return out


def _cmd_dsw(args):
    mu, nu = load_csv(args.mu), load_csv(args.nu)
    params, trace = dsw_fit(mu, nu, _fit_config(args), lambda_c=args.lambda_c, c_cap=args.c_cap)
    out, _ = _fit_result(args, mu, nu, params, trace, {"lambda_c": args.lambda_c, "c_cap": args.c_cap})
    out["dsw_penalized_objective"] = out.pop("final_objective")
    return out


def _cmd_bound(args):
    lam = args.lam if args.lam is not None else math.sqrt(args.n)
    report = assemble_bound(args.sw_hat, args.kl, _regime(args), args.p, lam, args.n, args.delta, _constants(args))
    return report.to_dict()


def _cmd_experiment(args):
    config = ExperimentConfig.from_json(args.config)
    config = replace(config, seed=args.seed if args.seed_given else config.seed, threads=args.threads)
    points = run_experiment(config)
    write_outputs(points, config, args.out_csv, args.out_manifest)
    return config, points


COMMANDS = {
    "sw": _cmd_sw,
    "maxsw": _cmd_maxsw,
    "pacsw": _cmd_pacsw,
    "dsw": _cmd_dsw,
    "bound": _cmd_bound,
}


def _flat_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(result)
    w.writerow(keys)
    w.writerow([json.dumps(result[k]) if isinstance(result[k], (dict, list)) else repr(result[k]) for k in keys])
    return buf.getvalue()


def _emit(args, man: dict, result, csv_text: str | None = None) -> None:
    if args.output == "json":
        print(json.dumps({"manifest": man, "result": result}, indent=2))
    else:
        sys.stdout.write("# manifest: " + json.dumps(man) + "\n")
        sys.stdout.write(csv_text if csv_text is not None else _flat_csv(result))


def _options(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("seed_given",)}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
        if args.threads < 1:
            raise _UsageError("pacsw: error: --threads must be >= 1")
        if args.seed < 0:
            raise _UsageError("pacsw: error: --seed must be >= 0")
        if args.command == "experiment":
            config, points = _cmd_experiment(args)
            man = manifest(config.to_dict(), config.seed, "experiment")
            _emit(args, man, curves_to_json(points), curves_to_csv(points))
        else:
            result = COMMANDS[args.command](args)
            _emit(args, manifest(_options(args), args.seed, args.command), result)
        return EXIT_OK
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (DataError, DimensionMismatchError) as exc:
        print(f"pacsw: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"pacsw: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"pacsw: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
