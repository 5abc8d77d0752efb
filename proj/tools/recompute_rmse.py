#!/usr/bin/env python3
"""Recompute Monte Carlo RMSE from montecarlo_replications.csv and compare with the JSON summary."""
import argparse
import csv
import json
import math
import sys
from collections import defaultdict
from pathlib import Path


def recompute(rows):
    sq = defaultdict(list)
    for row in rows:
        if row["converged"] != "1":
            continue
        for name in row:
            if not name.startswith("true_"):
                continue
            param = name[len("true_"):]
            est = float(row[param])
            if param.startswith("sigma_"):
                est = abs(est)
            sq[(row["method"], param)].append((est - float(row[name])) ** 2)
    return {key: math.sqrt(sum(v) / len(v)) for key, v in sq.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args()

    with open(args.out_dir / "montecarlo_replications.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    report = json.loads((args.out_dir / "montecarlo_report.json").read_text())

    ours = recompute(rows)
    checked, bad = 0, 0
    for method, summary in report["summary"].items():
        for p in summary["parameters"]:
            key = (method, p["name"])
            if key not in ours:
                if p["n"] != 0:
                    print(f"{method} {p['name']}: missing from CSV")
                    bad += 1
                continue
            diff = abs(ours[key] - p["rmse"])
            checked += 1
            if diff > args.tol * max(1.0, abs(p["rmse"])):
                print(f"{method} {p['name']}: report {p['rmse']!r} recomputed {ours[key]!r}")
                bad += 1
    print(f"checked {checked} RMSE entries, {bad} mismatches")
    return 1 if bad or checked == 0 else 0


if __name__ == "__main__":
    sys.exit(main())
