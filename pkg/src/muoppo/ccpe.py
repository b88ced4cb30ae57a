"""Confident class-prior estimation over all bags.

``run_ccpe`` pseudo-labels the declared pair, warms up a scorer, collects
confident sets and estimates every bag's prior from them. ``run_eccpe``
then ranks all bag pairs by estimated prior gap, repeats the pipeline on
the top ``gamma`` pairs and averages. ``run_mos_m`` swaps the per-bag
estimator for the pairwise mutual model on the top pairs.

Each pair's pipeline is seeded from ``(seed, larger bag, smaller bag)``, so a
pair gives the same estimates whichever routine runs it.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .confident import SELECTORS, assign_pseudo_labels, select, warm_up
from .data import BagCollection
from .errors import EstimationError, MuoppoError
from .prior_est import EstimatorConfig, PriorEstimate, estimate_bag, estimate_pair_mutual
from .scorer import ScorerConfig


@dataclass
class CcpeConfig:
    """Pipeline settings; ``gamma`` is the number of ranked pairs averaged."""

    selector: str = "alignment"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    gamma: int = 4
    warmup: ScorerConfig = field(
        default_factory=lambda: ScorerConfig(architecture="mlp", hidden_width=16, epochs=10)
    )
    loss_threshold: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.warmup.epochs < 1:
            raise ValueError("warm-up epochs must be >= 1")

    @property
    def warmup_epochs(self) -> int:
        return self.warmup.epochs


@dataclass
class PriorVector:
    estimates: list[PriorEstimate]
    provenance: list[list[tuple[int, int]]]
    skipped_pairs: list[tuple[int, int]] = field(default_factory=list)
    declared_included: bool = True

    def __post_init__(self):
        if len(self.estimates) != len(self.provenance):
            raise ValueError("one provenance list per estimate")
        if any(len(p) == 0 for p in self.provenance):
            raise ValueError("every estimate needs a provenance pair")

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    def __len__(self):
        return len(self.estimates)


@dataclass
class PairRun:
    pair: tuple[int, int]
    estimates: list[PriorEstimate]
    confident: object
    source: object


def pair_seed(seed: int, pair) -> int:
    return int(np.random.SeedSequence([seed, int(pair[0]), int(pair[1])]).generate_state(1)[0])


def run_pair(bags: BagCollection, pair, cfg: CcpeConfig) -> PairRun:
    """Pseudo-label ``pair`` (larger prior first), select, estimate every bag."""
    a, b = pair
    s = pair_seed(cfg.seed, pair)
    source = assign_pseudo_labels(bags.bags[a], bags.bags[b], ids=(a, b))
    warm = warm_up(replace(cfg.warmup, seed=s), source)
    confident = select(cfg.selector, warm, source, cfg.loss_threshold)
    est_cfg = replace(cfg.estimator, seed=s)
    estimates = []
    for j, bag in enumerate(bags.bags):
        try:
            estimates.append(estimate_bag(bag, confident, source, est_cfg, bag_id=j))
        except EstimationError:
            raise
        except MuoppoError as exc:
            raise EstimationError(j, exc) from exc
    return PairRun((a, b), estimates, confident, source)


def _check_estimator(cfg):
    if cfg.estimator.method == "mutual":
        raise ValueError("the mutual model is pairwise; use run_mos_m")


def run_ccpe(bags: BagCollection, cfg: CcpeConfig | None = None) -> PriorVector:
    cfg = CcpeConfig() if cfg is None else cfg
    _check_estimator(cfg)
    run = run_pair(bags, bags.pair, cfg)
    return PriorVector(run.estimates, [[tuple(bags.pair)] for _ in run.estimates])


def rank_pairs(priors) -> list[tuple[int, int]]:
    """All bag pairs by descending estimated gap, larger-prior bag first.

    Gaps are compared after rounding to 12 decimals; ties go to the pair
    with the lower smaller index, then the lower larger index.
    """
    vals = priors.values if isinstance(priors, PriorVector) else np.asarray(priors, dtype=float)
    if vals.size < 2:
        raise ValueError("need at least two priors")
    keyed = []
    for i, j in itertools.combinations(range(vals.size), 2):
        hi, lo = (i, j) if vals[i] >= vals[j] else (j, i)
        keyed.append((-round(float(vals[hi] - vals[lo]), 12), min(i, j), max(i, j), (hi, lo)))
    keyed.sort(key=lambda k: k[:3])
    return [k[3] for k in keyed]


def _check_gamma(m, gamma):
    if gamma > math.comb(m, 2):
        raise ValueError(f"gamma={gamma} exceeds the {math.comb(m, 2)} available pairs")


def _mean_opt(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def _average(m, per_pair, method):
    """Fixed-order per-bag average over pair runs: list of (pair, [estimates])."""
    estimates, provenance = [], []
    for j in range(m):
        contrib = [(pair, ests[j]) for pair, ests in per_pair if ests[j] is not None]
        vals = [e for _, e in contrib]
        flags = tuple(sorted({f for e in vals for f in e.flags}))
        estimates.append(PriorEstimate(
            float(np.mean([e.value for e in vals])),
            _mean_opt([e.side1 for e in vals]),
            _mean_opt([e.side2 for e in vals]),
            method, j, flags,
        ))
        provenance.append([p for p, _ in contrib])
    return estimates, provenance


def run_eccpe(bags: BagCollection, cfg: CcpeConfig | None = None, pairs=None) -> PriorVector:
    """Average per-bag estimates over the top ``gamma`` ranked pairs.

    ``pairs`` overrides the ranking (used to force a specific pair list).
    Pairs whose pipeline fails are skipped with a warning.
    """
    cfg = CcpeConfig() if cfg is None else cfg
    _check_estimator(cfg)
    _check_gamma(bags.m, cfg.gamma)
    if pairs is None:
        init = run_ccpe(bags, cfg)
        pairs = rank_pairs(init)[: cfg.gamma]
    pairs = [tuple(p) for p in pairs]
    per_pair, skipped = [], []
    for pair in pairs:
        try:
            per_pair.append((pair, run_pair(bags, pair, cfg).estimates))
        except MuoppoError as exc:
            warnings.warn(f"pair {pair} skipped: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(pair)
    if not per_pair:
        raise EstimationError(-1, "every selected pair failed")
    estimates, provenance = _average(bags.m, per_pair, cfg.estimator.method)
    declared = tuple(bags.pair)
    return PriorVector(estimates, provenance, skipped, declared in [p for p, _ in per_pair])


def run_mos_m(bags: BagCollection, cfg: CcpeConfig | None = None) -> PriorVector:
    """Mutual-model priors averaged over the top ranked pairs.

    Ranking uses a standard-estimator initialization; bags that no
    surviving pair covers keep that initialization and carry the flag
    ``ccpe-init``.
    """
    cfg = CcpeConfig() if cfg is None else cfg
    _check_gamma(bags.m, cfg.gamma)
    init_cfg = cfg
    if cfg.estimator.method == "mutual":
        init_cfg = replace(cfg, estimator=replace(cfg.estimator, method="standard"))
    init = run_ccpe(bags, init_cfg)
    if bags.m == 2:
        pairs = [tuple(bags.pair)]
    else:
        pairs = rank_pairs(init)[: cfg.gamma]
    mcfg = replace(cfg.estimator, method="mutual")
    per_pair, skipped = [], []
    for hi, lo in pairs:
        try:
            e_hi, e_lo = estimate_pair_mutual(
                bags.bags[hi], bags.bags[lo], replace(mcfg, seed=pair_seed(cfg.seed, (hi, lo))), ids=(hi, lo)
            )
        except MuoppoError as exc:
            warnings.warn(f"pair {(hi, lo)} skipped: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append((hi, lo))
            continue
        ests = [None] * bags.m
        ests[hi], ests[lo] = e_hi, e_lo
        per_pair.append(((hi, lo), ests))
    estimates, provenance = [], []
    for j in range(bags.m):
        contrib = [(p, e[j]) for p, e in per_pair if e[j] is not None]
        if contrib:
            v = float(np.mean([e.value for _, e in contrib]))
            estimates.append(PriorEstimate(v, v, v, "mutual", j))
            provenance.append([p for p, _ in contrib])
        else:
            base = init.estimates[j]
            estimates.append(replace(base, flags=base.flags + ("ccpe-init",)))
            provenance.append(list(init.provenance[j]))
    return PriorVector(estimates, provenance, skipped, tuple(bags.pair) in [p for p, _ in per_pair])
