"""Accuracy and MAE as the number of bags grows, m in {4, 8, ..., 28}."""

import argparse
import csv
from dataclasses import replace

from muoppo import experiment as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ms", default="4,8,12,16,20,24,28")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--total-rows", type=int, default=20000, help="rows split evenly across the m bags")
    ap.add_argument("--trainer", default="umssc", choices=["umssc", "mcm"])
    ap.add_argument("--out", default="set_number_sweep.csv")
    args = ap.parse_args()

    base = ex.ExperimentConfig(desk=True, trainer=args.trainer, repeats=args.repeats)
    rows = []
    for m in map(int, args.ms.split(",")):
        cfg = replace(base, m=m, bag_size=args.total_rows // m, gamma=min(4, ex.pair_count(m)))
        res = ex.run_experiment(cfg)
        acc_mean, acc_std = ex.mean_std([r.accuracy for r in res])
        mae_mean, mae_std = ex.mean_std([r.mae for r in res])
        rows.append([m, acc_mean, acc_std, mae_mean, mae_std, sum(r.status == "ok" for r in res)])
        print(f"m={m:2d} accuracy {acc_mean!r} MAE {mae_mean!r}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "accuracy_mean", "accuracy_std", "mae_mean", "mae_std", "succeeded"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
