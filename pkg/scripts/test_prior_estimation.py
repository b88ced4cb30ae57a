"""Given vs estimated test prior: accuracy and the estimated pi_D per repeat."""

import argparse
import csv
from dataclasses import replace

from muoppo import experiment as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--trainer", default="umssc", choices=["umssc", "mcm"])
    ap.add_argument("--out", default="test_prior_estimation.csv")
    args = ap.parse_args()

    base = ex.ExperimentConfig(desk=True, trainer=args.trainer, repeats=args.repeats)
    rows = []
    for mode in ("given", "estimate"):
        for r in ex.run_experiment(replace(base, pi_D_mode=mode)):
            rows.append([mode, r.seed, r.pi_D_used, r.accuracy, r.mae, r.status])
            print(f"{mode:8s} seed {r.seed} pi_D {r.pi_D_used!r} accuracy {r.accuracy!r}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pi_D_mode", "seed", "pi_D", "accuracy", "mae", "status"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
