"""Experiment configuration and the end-to-end pipeline behind the CLI.

Every repeat ``r`` runs with seed ``config.seed + r``; that seed drives bag
sampling, every pair pipeline and final training, so a single report row can
be regenerated from its seed alone.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .ccpe import CcpeConfig, PriorVector, run_ccpe, run_eccpe, run_mos_m, run_pair
from .classify import accuracy, estimate_test_prior, train_mcm, train_umssc
from .data import (
    BagCollection,
    BagSpec,
    LabeledPool,
    apply_size_shift,
    even_priors,
    gaussian_pool,
    load_pool,
    sample_bags,
)
from .errors import MuoppoError
from .prior_est import EstimatorConfig, KappaConfig, PriorEstimate
from .scorer import ScorerConfig, train_binary

PRIOR_MODES = ("ccpe", "eccpe", "mos-m", "true")
TRAINERS = ("umssc", "mcm", "none")
DROPS = ("none", "prior-estimation", "confident-collection", "warmup")
FULL_EPOCHS = 300
DESK_EPOCHS = 50
WARMUP_ABLATION_FACTOR = 10


@dataclass
class DatasetConfig:
    """Where the labeled pools come from.

    ``gaussian`` draws two unit-variance isotropic classes; ``csv`` and
    ``idx-image`` read files (``test_path`` then supplies the test pool).
    """

    source: str = "gaussian"
    path: str | None = None
    labels_path: str | None = None
    test_path: str | None = None
    test_labels_path: str | None = None
    positive_classes: list[int] | None = None
    dim: int = 2
    separation: float = 4.0
    train_per_class: int = 20000
    test_per_class: int = 5000
    pool_seed: int = 123
    test_seed: int = 999

    def __post_init__(self):
        if self.source not in ("gaussian", "csv", "idx-image"):
            raise ValueError(f"unknown dataset source {self.source!r}")
        if self.source != "gaussian" and not self.path:
            raise ValueError("file-backed datasets need a path")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    m: int = 10
    prior_lo: float = 0.1
    prior_hi: float = 0.9
    bag_size: int = 2000
    pair: list[int] | None = None
    size_shift_tau: float = 1.0
    size_shift_mode: str = "half-scaled"
    prior_mode: str = "eccpe"
    selector: str = "alignment"
    estimator: str = "standard"
    gamma: int = 4
    warmup_epochs: int = 10
    warmup_hidden: int = 16
    trainer: str = "umssc"
    architecture: str = "linear"
    hidden_width: int = 16
    learning_rate: float = 0.05
    batch_size: int = 64
    train_epochs: int = FULL_EPOCHS
    desk: bool = False
    pi_D_mode: str = "given"
    pi_D: float = 0.5
    repeats: int = 5
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            self.dataset = DatasetConfig(**self.dataset)
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.prior_mode not in PRIOR_MODES:
            raise ValueError(f"unknown prior mode {self.prior_mode!r}")
        if self.trainer not in TRAINERS:
            raise ValueError(f"unknown trainer {self.trainer!r}")
        if self.pi_D_mode not in ("given", "estimate"):
            raise ValueError("pi_D_mode must be 'given' or 'estimate'")
        if self.pi_D_mode == "given" and not 0.0 < self.pi_D < 1.0:
            raise ValueError("given pi_D must lie in (0, 1)")
        if self.pair is not None:
            self.pair = [int(v) for v in self.pair]
        # constructing the nested configs validates them early
        self.ccpe_config(0)
        self.bag_spec(0)

    @property
    def epochs(self) -> int:
        return DESK_EPOCHS if self.desk else self.train_epochs

    def bag_spec(self, seed: int) -> BagSpec:
        pair = tuple(self.pair) if self.pair is not None else (self.m - 1, 0)
        spec = BagSpec(even_priors(self.m, self.prior_lo, self.prior_hi), [self.bag_size] * self.m, pair, seed)
        return apply_size_shift(spec, self.size_shift_tau, self.size_shift_mode, seed)

    def ccpe_config(self, seed: int) -> CcpeConfig:
        return CcpeConfig(
            selector=self.selector,
            estimator=EstimatorConfig(method=self.estimator, kappa=KappaConfig()),
            gamma=self.gamma,
            warmup=ScorerConfig(architecture="mlp", hidden_width=self.warmup_hidden,
                                epochs=self.warmup_epochs, seed=seed),
            seed=seed,
        )

    def train_config(self, seed: int) -> ScorerConfig:
        return ScorerConfig(self.architecture, self.hidden_width, self.learning_rate,
                            self.batch_size, self.epochs, 0.0, seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def build_pools(ds: DatasetConfig) -> tuple[LabeledPool, LabeledPool]:
    if ds.source == "gaussian":
        train = gaussian_pool(ds.train_per_class, ds.dim, ds.separation, ds.pool_seed, "gauss-train")
        test = gaussian_pool(ds.test_per_class, ds.dim, ds.separation, ds.test_seed, "gauss-test")
        return train, test
    train = load_pool(ds.path, ds.source, ds.labels_path, ds.positive_classes)
    if not ds.test_path:
        raise ValueError("file-backed datasets need a test_path")
    test = load_pool(ds.test_path, ds.source, ds.test_labels_path, ds.positive_classes)
    return train, test


def true_vector(bags: BagCollection) -> PriorVector:
    pri = bags.empirical_priors()
    ests = [PriorEstimate(float(p), float(p), float(p), "true", j) for j, p in enumerate(pri)]
    return PriorVector(ests, [[tuple(bags.pair)] for _ in ests])


def estimate_priors(cfg: ExperimentConfig, bags: BagCollection, ccfg: CcpeConfig) -> PriorVector:
    if cfg.prior_mode == "true":
        return true_vector(bags)
    if cfg.prior_mode == "ccpe":
        return run_ccpe(bags, ccfg)
    if cfg.prior_mode == "eccpe":
        return run_eccpe(bags, ccfg)
    return run_mos_m(bags, ccfg)


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    status: str
    true_priors: list[float] = field(default_factory=list)
    priors: PriorVector | None = None
    accuracy: float | None = None
    pi_D_used: float | None = None
    scorer: object = None

    @property
    def mae(self) -> float | None:
        if self.priors is None:
            return None
        return float(np.mean(np.abs(self.priors.values - np.asarray(self.true_priors))))


def run_repeat(cfg: ExperimentConfig, repeat: int, pools=None, drop: str = "none",
               train: bool = True) -> RepeatResult:
    """One seed of the pipeline: bags, priors, optional training and evaluation."""
    if drop not in DROPS:
        raise ValueError(f"unknown ablation {drop!r}")
    seed = cfg.seed + repeat
    train_pool, test_pool = build_pools(cfg.dataset) if pools is None else pools
    res = RepeatResult(repeat, seed, "ok")
    try:
        bags = sample_bags(train_pool, cfg.bag_spec(seed))
        res.true_priors = [float(v) for v in bags.empirical_priors()]
        ccfg = cfg.ccpe_config(seed)
        if drop == "confident-collection":
            ccfg = replace(ccfg, selector="none")
        elif drop == "warmup":
            ccfg = replace(ccfg, warmup=replace(ccfg.warmup, epochs=ccfg.warmup.epochs * WARMUP_ABLATION_FACTOR))
        tcfg = cfg.train_config(seed)
        if drop == "prior-estimation":
            run = run_pair(bags, bags.pair, ccfg)
            pos, neg = run.confident.positives(run.source), run.confident.negatives(run.source)
            x = np.vstack([pos, neg])
            y = np.concatenate([np.ones(pos.shape[0], int), -np.ones(neg.shape[0], int)])
            if train:
                res.scorer = train_binary(tcfg, x, y)
                res.accuracy = accuracy(res.scorer, test_pool.features, test_pool.labels)
            return res
        res.priors = estimate_priors(cfg, bags, ccfg)
        if not train or cfg.trainer == "none":
            return res
        if cfg.pi_D_mode == "given":
            pi_D = cfg.pi_D
        else:
            run = run_pair(bags, bags.pair, ccfg)
            pi_D = estimate_test_prior(test_pool.features, run.confident, run.source,
                                       replace(ccfg.estimator, seed=seed))
            pi_D = float(np.clip(pi_D, 1e-3, 1 - 1e-3))
        res.pi_D_used = pi_D
        trainer = train_umssc if cfg.trainer == "umssc" else train_mcm
        res.scorer = trainer(bags, res.priors, pi_D, tcfg)
        res.accuracy = accuracy(res.scorer, test_pool.features, test_pool.labels)
    except MuoppoError as exc:
        res.status = f"error: {type(exc).__name__}: {exc}"
    return res


def run_experiment(cfg: ExperimentConfig, drop: str = "none", train: bool = True) -> list[RepeatResult]:
    pools = build_pools(cfg.dataset)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return [run_repeat(cfg, r, pools, drop, train) for r in range(cfg.repeats)]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


ESTIMATION_HEADER = ["repeat", "seed", "bag", "true_prior", "estimated_prior", "abs_error",
                     "side1", "side2", "method", "flags", "pairs", "skipped_pairs", "declared_included", "status"]


def estimation_rows(results: list[RepeatResult]):
    rows = []
    for r in results:
        if r.priors is None:
            rows.append([r.repeat, r.seed, "", "", "", "", "", "", "", "", "", "", "", r.status])
            continue
        skipped = ";".join(f"{a}-{b}" for a, b in r.priors.skipped_pairs)
        for j, e in enumerate(r.priors.estimates):
            rows.append([
                r.repeat, r.seed, j, r.true_priors[j], e.value, abs(e.value - r.true_priors[j]),
                e.side1, e.side2, e.method, ";".join(e.flags),
                ";".join(f"{a}-{b}" for a, b in r.priors.provenance[j]),
                skipped, r.priors.declared_included, r.status,
            ])
    return rows


ACCURACY_HEADER = ["repeat", "seed", "variant", "accuracy", "mae", "pi_D", "pi_D_mode", "status"]


def accuracy_rows(results, variant, pi_D_mode):
    return [[r.repeat, r.seed, variant, r.accuracy, r.mae, r.pi_D_used, pi_D_mode, r.status] for r in results]


def mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.array(vals, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def summary_rows(results, variant):
    mae_mean, mae_std = mean_std([r.mae for r in results])
    acc_mean, acc_std = mean_std([r.accuracy for r in results])
    ok = sum(r.status == "ok" for r in results)
    scale = (lambda v: None if v is None else 100.0 * v)
    return [[variant, len(results), ok, scale(mae_mean), scale(mae_std), acc_mean, acc_std]]


SUMMARY_HEADER = ["variant", "repeats", "succeeded", "mae_x100_mean", "mae_x100_std", "accuracy_mean", "accuracy_std"]


def write_config_echo(cfg: ExperimentConfig, out_dir, extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
    if extra:
        with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(extra, sort_keys=True, indent=2) + "\n")


def all_ok(results) -> bool:
    return all(r.status == "ok" for r in results)


def pair_count(m: int) -> int:
    return math.comb(m, 2)
