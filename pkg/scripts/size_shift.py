"""Accuracy and MAE when bag sizes are shifted by a factor tau."""

import argparse
import csv
from dataclasses import replace

from muoppo import experiment as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--taus", default="1.0,0.5,0.2,0.1")
    ap.add_argument("--mode", default="half-scaled", choices=["half-scaled", "random-simplex"])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--trainer", default="umssc", choices=["umssc", "mcm"])
    ap.add_argument("--out", default="size_shift.csv")
    args = ap.parse_args()

    base = ex.ExperimentConfig(desk=True, trainer=args.trainer, repeats=args.repeats, size_shift_mode=args.mode)
    rows = []
    for tau in map(float, args.taus.split(",")):
        res = ex.run_experiment(replace(base, size_shift_tau=tau))
        acc_mean, acc_std = ex.mean_std([r.accuracy for r in res])
        mae_mean, mae_std = ex.mean_std([r.mae for r in res])
        rows.append([tau, acc_mean, acc_std, mae_mean, mae_std])
        print(f"tau={tau} accuracy {acc_mean!r} MAE {mae_mean!r}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "accuracy_mean", "accuracy_std", "mae_mean", "mae_std"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
