"""Fit log-log slopes of the median approximation error against n.

Reads the CSV written by a convergence run and prints one slope per
(law, d, kappa), plus the ordering of medians in d and in kappa.

Usage:
    python3 scripts/convergence_slopes.py results/convergence.csv
"""
import argparse
import csv
import sys
from collections import defaultdict

from pacsw.harness import loglog_slope


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv_path")
    args = parser.parse_args(argv)

    curves = defaultdict(dict)
    with open(args.csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["statistic"] != "sw_error":
                continue
            key = (row["law"], int(row["d"]), float(row["kappa"]))
            curves[key][int(row["n"])] = float(row["median"])

    print(f"{'law':>13} {'d':>4} {'kappa':>6} {'slope':>7}  medians")
    for (law, d, kappa), by_n in sorted(curves.items()):
        ns = sorted(by_n)
        slope = loglog_slope(ns, [by_n[n] for n in ns])
        medians = " ".join(f"{by_n[n]:.4g}" for n in ns)
        print(f"{law:>13} {d:>4} {kappa:>6g} {slope:7.3f}  {medians}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
