"""Run one experiment config and print a compact summary of its curves.

Usage:
    python3 scripts/run_experiment.py scripts/configs/convergence.json --threads 4
"""
import argparse
import sys
import time
from dataclasses import replace

from pacsw.errors import DataError
from pacsw.harness import ExperimentConfig, run_experiment, write_outputs

SUMMARY_STATS = {
    "convergence": ("sw_error",),
    "discrimination": ("test_sw", "alignment", "bound_holds"),
    "class_pair": ("test_sw",),
    "bound_validity": ("violation", "lower_bound", "reference_sw"),
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    parser.add_argument("--out-csv", default=None)
    parser.add_argument("--out-manifest", default=None)
    args = parser.parse_args(argv)

    config = ExperimentConfig.from_json(args.config)
    overrides = {"threads": args.threads}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    config = replace(config, **overrides)

    start = time.perf_counter()
    try:
        points = run_experiment(config)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start
    write_outputs(points, config, args.out_csv, args.out_manifest)

    keep = SUMMARY_STATS[config.experiment]
    print(f"{config.experiment}: {len(points)} curve points in {elapsed:.1f}s")
    print(f"{'law':>13} {'n':>6} {'d':>4} {'gamma':>6} {'kappa':>6} {'method':>11} {'statistic':>13} "
          f"{'median':>10} {'p10':>10} {'p90':>10}")
    for p in points:
        if p.statistic not in keep:
            continue
        cells = [p.law or "", p.n or "", p.d or "", "" if p.gamma is None else p.gamma,
                 "" if p.kappa is None else p.kappa, p.method or "", p.statistic]
        print(f"{cells[0]:>13} {cells[1]:>6} {cells[2]:>4} {cells[3]:>6} {cells[4]:>6} {cells[5]:>11} "
              f"{cells[6]:>13} {p.median:10.4g} {p.p10:10.4g} {p.p90:10.4g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
