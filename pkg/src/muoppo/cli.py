"""Command-line driver.

Subcommands: ``synth``, ``estimate``, ``train``, ``eval``, ``ablate``,
``report``. Results land under ``--out`` (default: ``$MUOPPO_OUTPUT`` or
``runs``). Exit status is 0 only when every repeat succeeds.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import experiment as ex
from .data import sample_bags
from .prior_est import EstimatorConfig, KappaConfig
from .scorer import load_scorer, save_scorer
from .classify import accuracy

OUTPUT_ENV = "MUOPPO_OUTPUT"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--out", help="output directory")
    g = p.add_argument_group("dataset")
    g.add_argument("--source", choices=["gaussian", "csv", "idx-image"])
    g.add_argument("--path")
    g.add_argument("--labels-path")
    g.add_argument("--test-path")
    g.add_argument("--test-labels-path")
    g.add_argument("--positive-classes", type=lambda s: [int(v) for v in s.split(",")])
    g.add_argument("--dim", type=int)
    g.add_argument("--separation", type=float)
    g = p.add_argument_group("bags")
    g.add_argument("--m", type=int)
    g.add_argument("--prior-lo", type=float)
    g.add_argument("--prior-hi", type=float)
    g.add_argument("--bag-size", type=int)
    g.add_argument("--pair", type=lambda s: [int(v) for v in s.split(",")], help="alpha,beta (0-based)")
    g.add_argument("--size-shift-tau", type=float)
    g.add_argument("--size-shift-mode", choices=["half-scaled", "random-simplex"])
    g = p.add_argument_group("estimation")
    g.add_argument("--prior-mode", choices=list(ex.PRIOR_MODES))
    g.add_argument("--selector", choices=["loss", "confident-joint", "alignment", "none"])
    g.add_argument("--estimator", choices=["standard", "rempe", "bbe"])
    g.add_argument("--gamma", type=int)
    g.add_argument("--warmup-epochs", type=int)
    g = p.add_argument_group("training")
    g.add_argument("--trainer", choices=list(ex.TRAINERS))
    g.add_argument("--architecture", choices=["linear", "mlp"])
    g.add_argument("--train-epochs", type=int)
    g.add_argument("--desk", action="store_true", default=None, help=f"use {ex.DESK_EPOCHS} final-training epochs")
    g.add_argument("--pi-d", dest="pi_D", type=float, help="given test prior")
    g.add_argument("--estimate-pi-d", action="store_true", help="estimate the test prior")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)


_DATASET_KEYS = {"source", "path", "labels_path", "test_path", "test_labels_path",
                 "positive_classes", "dim", "separation"}


def config_from_args(args) -> ex.ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    base.setdefault("dataset", {})
    if isinstance(base["dataset"], ex.DatasetConfig):
        base["dataset"] = asdict(base["dataset"])
    top = {f.name for f in fields(ex.ExperimentConfig)}
    for key, val in vars(args).items():
        if val is None:
            continue
        if key in _DATASET_KEYS:
            base["dataset"][key] = val
        elif key in top:
            base[key] = val
    if getattr(args, "estimate_pi_d", False):
        base["pi_D_mode"] = "estimate"
    out = args.out or os.environ.get(OUTPUT_ENV) or base.get("output_dir") or "runs"
    base["output_dir"] = out
    return ex.ExperimentConfig.from_dict(base)


def _defaults_echo():
    return {"kappa": asdict(KappaConfig()), "rempe_fraction": EstimatorConfig().rempe_fraction,
            "bag_sampling": "without replacement within a bag, with replacement across bags"}


def cmd_synth(cfg: ex.ExperimentConfig) -> int:
    train_pool, _ = ex.build_pools(cfg.dataset)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    manifest = {"m": cfg.m, "seed": cfg.seed, "files": [], "pair": None, "priors": [], "sizes": []}
    spec = cfg.bag_spec(cfg.seed)
    bags = sample_bags(train_pool, spec)
    d = bags.dim
    for j, (x, h) in enumerate(zip(bags.bags, bags.hidden_labels)):
        name = f"bag_{j:02d}.csv"
        ex.write_csv(os.path.join(out, name), ["hidden_label"] + [f"f{i + 1}" for i in range(d)],
                     [[int(y)] + [float(v) for v in row] for y, row in zip(h, x)])
        manifest["files"].append(name)
    manifest["pair"] = list(bags.pair)
    manifest["priors"] = list(spec.priors)
    manifest["sizes"] = list(spec.sizes)
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    ex.write_config_echo(cfg, out)
    print(f"wrote {cfg.m} bags to {out}")
    return 0


def _finish(results, out, name) -> int:
    rows = ex.summary_rows(results, name)
    ex.write_csv(os.path.join(out, "summary.csv"), ex.SUMMARY_HEADER, rows)
    r = rows[0]
    print(f"{name}: {r[2]}/{r[1]} repeats ok; MAE x100 {ex.fmt(r[3])} (std {ex.fmt(r[4])}); "
          f"accuracy {ex.fmt(r[5])} (std {ex.fmt(r[6])})")
    for res in results:
        if res.status != "ok":
            print(f"repeat {res.repeat} (seed {res.seed}): {res.status}", file=sys.stderr)
    return 0 if ex.all_ok(results) else 1


def cmd_estimate(cfg: ex.ExperimentConfig) -> int:
    results = ex.run_experiment(cfg, train=False)
    out = cfg.output_dir
    ex.write_csv(os.path.join(out, "estimation.csv"), ex.ESTIMATION_HEADER, ex.estimation_rows(results))
    ex.write_config_echo(cfg, out, _defaults_echo())
    return _finish(results, out, cfg.prior_mode)


def cmd_train(cfg: ex.ExperimentConfig) -> int:
    results = ex.run_experiment(cfg)
    out = cfg.output_dir
    ex.write_csv(os.path.join(out, "estimation.csv"), ex.ESTIMATION_HEADER, ex.estimation_rows(results))
    ex.write_csv(os.path.join(out, "accuracy.csv"), ex.ACCURACY_HEADER,
                 ex.accuracy_rows(results, cfg.trainer, cfg.pi_D_mode))
    for res in results:
        if res.scorer is not None:
            save_scorer(res.scorer, os.path.join(out, f"scorer_seed{res.seed}.plsc"))
    ex.write_config_echo(cfg, out, _defaults_echo())
    return _finish(results, out, cfg.trainer)


def cmd_eval(cfg: ex.ExperimentConfig, checkpoints) -> int:
    _, test = ex.build_pools(cfg.dataset)
    rows = []
    for path in checkpoints:
        s = load_scorer(path)
        rows.append([os.path.basename(path), accuracy(s, test.features, test.labels)])
        print(f"{path}: accuracy {rows[-1][1]!r}")
    ex.write_csv(os.path.join(cfg.output_dir, "eval.csv"), ["checkpoint", "accuracy"], rows)
    return 0 if rows else 1


def cmd_ablate(cfg: ex.ExperimentConfig, drop: str) -> int:
    results = ex.run_experiment(cfg, drop=drop)
    out = cfg.output_dir
    ex.write_csv(os.path.join(out, "ablation.csv"), ex.ACCURACY_HEADER,
                 ex.accuracy_rows(results, f"drop={drop}", cfg.pi_D_mode))
    ex.write_config_echo(cfg, out, dict(_defaults_echo(), drop=drop))
    return _finish(results, out, f"drop={drop}")


def cmd_report(directory) -> int:
    """Collect every summary.csv below ``directory`` into one table."""
    paths = sorted(glob.glob(os.path.join(directory, "**", "summary.csv"), recursive=True))
    rows = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append([os.path.relpath(os.path.dirname(path), directory)] + [rec[k] for k in ex.SUMMARY_HEADER])
    ex.write_csv(os.path.join(directory, "report.csv"), ["run"] + ex.SUMMARY_HEADER, rows)
    for row in rows:
        print(",".join(row))
    return 0 if rows else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muoppo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "write a bag collection to CSV files"),
        ("estimate", "estimate bag priors over repeats"),
        ("train", "estimate priors, train and evaluate"),
        ("eval", "evaluate saved scorers on the test pool"),
        ("ablate", "train with one pipeline stage removed"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        if name == "eval":
            p.add_argument("checkpoints", nargs="+")
        if name == "ablate":
            p.add_argument("--drop", required=True, choices=list(ex.DROPS))
    p = sub.add_parser("report", help="collect summaries below a directory")
    p.add_argument("directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args.directory)
    cfg = config_from_args(args)
    if args.command == "synth":
        return cmd_synth(cfg)
    if args.command == "estimate":
        return cmd_estimate(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "eval":
        return cmd_eval(cfg, args.checkpoints)
    return cmd_ablate(cfg, args.drop)


if __name__ == "__main__":
    sys.exit(main())
