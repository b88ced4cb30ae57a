"""Class-prior estimation for one bag from a pair's confident sets.

The largest weight of a reference distribution inside a mixture is
estimated over threshold sets ``{score >= z}`` of a scorer trained to
separate reference rows from mixture rows. Against confident positives
this weight is the bag prior; against confident negatives it is one
minus the prior. The reported value averages both sides.

Estimators: ``standard`` (threshold-set minimum with finite-sample slack),
``rempe`` (regrouped references), ``bbe`` (hold-out scores with an upper
confidence bound on the threshold choice) and the pairwise ``mutual``
model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .confident import ConfidentSets, PseudoLabeledSet
from .errors import EstimationError, UnstableInversionError, UnstableTailError
from .numerics import TailCurve, tail_fraction
from .scorer import ScorerConfig, balanced_weights, predict_proba, train_binary

METHODS = ("standard", "rempe", "bbe", "mutual")
INVERSION_GUARD = 1e-6


@dataclass
class KappaConfig:
    delta: float = 0.1
    gamma_bbe: float = 0.01
    min_tail: float = 0.1
    slack: bool = True

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.gamma_bbe < 0:
            raise ValueError("gamma_bbe must be nonnegative")
        if not 0.0 < self.min_tail < 1.0:
            raise ValueError("min_tail must lie in (0, 1)")


@dataclass
class EstimatorConfig:
    """Settings for one-bag estimation.

    ``scorer`` trains the reference-vs-bag scorers; ``rempe_fraction`` is the
    share of each confident side copied across when regrouping.
    """

    method: str = "standard"
    kappa: KappaConfig = field(default_factory=KappaConfig)
    scorer: ScorerConfig = field(default_factory=lambda: ScorerConfig(epochs=20))
    rempe_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown estimator {self.method!r}")
        if not 0.0 < self.rempe_fraction <= 0.5:
            raise ValueError("rempe_fraction must lie in (0, 0.5]")


@dataclass
class PriorEstimate:
    value: float
    side1: float | None
    side2: float | None
    method: str
    bag_id: int = -1
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("value", "side1", "side2"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def finite_sample_slack(n: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def kappa_hat(component_scores, mixture_scores, cfg: KappaConfig | None = None) -> float:
    """Largest weight of the component inside the mixture, over threshold sets.

    Minimizes ``(q_u(z) + eps_u) / (q_p(z) - eps_p)`` over candidate
    thresholds ``z`` drawn from both score lists, where ``q`` is the tail
    fraction ``#{score >= z}/n`` and ``eps = sqrt(ln(2/delta)/(2n))`` (zero
    when ``cfg.slack`` is off). Only thresholds with ``q_p(z) >= min_tail``
    and a positive denominator compete. The result is clipped to [0, 1].
    """
    cfg = KappaConfig() if cfg is None else cfg
    comp = TailCurve(component_scores)
    mix = TailCurve(mixture_scores)
    cand = np.unique(np.concatenate([comp.samples, mix.samples]))
    q_p = tail_fraction(comp, cand)
    q_u = tail_fraction(mix, cand)
    eps_p = finite_sample_slack(len(comp), cfg.delta) if cfg.slack else 0.0
    eps_u = finite_sample_slack(len(mix), cfg.delta) if cfg.slack else 0.0
    ok = (q_p >= cfg.min_tail) & (q_p - eps_p > 0.0)
    if not np.any(ok):
        raise UnstableTailError(
            f"no threshold keeps the component tail above {cfg.min_tail} after slack"
        )
    ratio = (q_u[ok] + eps_u) / (q_p[ok] - eps_p)
    return float(np.clip(ratio.min(), 0.0, 1.0))


def bbe_objective(q_p, q_u, n_p, n_u, delta, gamma):
    """Upper confidence bound on the tail ratio; infinite where q_p = 0."""
    q_p = np.asarray(q_p, dtype=float)
    q_u = np.asarray(q_u, dtype=float)
    width = math.sqrt(math.log(4.0 / delta) / (2 * n_u)) + math.sqrt(math.log(4.0 / delta) / (2 * n_p))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = q_u / q_p + (1.0 + gamma) / q_p * width
    return np.where(q_p > 0, out, np.inf)


def bbe_threshold(z_p, z_u, delta: float = 0.1, gamma: float = 0.01) -> tuple[float, float]:
    """Return ``(c_hat, ratio)`` minimizing the BBE bound over sample points.

    Candidates are the distinct values of ``z_p`` and ``z_u``; among tied
    minima the smallest candidate wins. ``ratio`` is ``q_u(c)/q_p(c)``.
    """
    comp = TailCurve(z_p)
    mix = TailCurve(z_u)
    cand = np.unique(np.concatenate([comp.samples, mix.samples]))
    q_p = tail_fraction(comp, cand)
    q_u = tail_fraction(mix, cand)
    obj = bbe_objective(q_p, q_u, len(comp), len(mix), delta, gamma)
    k = int(np.argmin(obj))
    return float(cand[k]), float(q_u[k] / q_p[k])


def _reference_scores(reference, bag, scorer_cfg: ScorerConfig, seed: int):
    """Train reference(+1) vs bag(-1) with class balance; score both sets."""
    x = np.vstack([reference, bag])
    y = np.concatenate([np.ones(reference.shape[0], int), -np.ones(bag.shape[0], int)])
    s = train_binary(replace(scorer_cfg, seed=seed), x, y, balanced_weights(y))
    return predict_proba(s, reference), predict_proba(s, bag)


def _two_sided(side1_fn, side2_fn, method, bag_id) -> PriorEstimate:
    sides, errors = [], []
    for fn in (side1_fn, side2_fn):
        try:
            sides.append(fn())
        except UnstableTailError as exc:
            sides.append(None)
            errors.append(exc)
    s1, s2 = sides
    if s1 is None and s2 is None:
        raise EstimationError(bag_id, errors[0])
    if s1 is None or s2 is None:
        kept = s1 if s1 is not None else s2
        flag = "side1-failed" if s1 is None else "side2-failed"
        warnings.warn(f"bag {bag_id}: {flag}; using the surviving side", RuntimeWarning, stacklevel=3)
        return PriorEstimate(kept, s1, s2, method, bag_id, (flag,))
    return PriorEstimate(0.5 * (s1 + s2), s1, s2, method, bag_id)


def _check_sets(confident: ConfidentSets):
    if confident.positive_idx.size == 0 or confident.negative_idx.size == 0:
        raise ValueError("both confident sets must be nonempty")


def estimate_standard(bag, confident: ConfidentSets, source: PseudoLabeledSet,
                      cfg: EstimatorConfig | None = None, bag_id: int = -1,
                      method: str = "standard") -> PriorEstimate:
    cfg = EstimatorConfig() if cfg is None else cfg
    _check_sets(confident)
    bag = np.asarray(bag, dtype=float)
    pos = confident.positives(source)
    neg = confident.negatives(source)

    def side1():
        zp, zu = _reference_scores(pos, bag, cfg.scorer, cfg.seed)
        return kappa_hat(zp, zu, cfg.kappa)

    def side2():
        zn, zu = _reference_scores(neg, bag, cfg.scorer, cfg.seed + 1)
        return 1.0 - kappa_hat(zn, zu, cfg.kappa)

    return _two_sided(side1, side2, method, bag_id)


def regroup(confident: ConfidentSets, source: PseudoLabeledSet, p: float = 0.1,
            scorer_cfg: ScorerConfig | None = None, seed: int = 0) -> ConfidentSets:
    """Copy the most positive-looking negatives into the positive set and vice versa.

    A scorer trained on confident positives vs negatives ranks rows; the
    ``ceil(p*|neg|)`` negatives with the smallest negative posterior join the
    positive set and the ``ceil(p*|pos|)`` positives with the smallest
    positive posterior join the negative set. Ties keep input order.
    """
    if not 0.0 < p <= 0.5:
        raise ValueError("p must lie in (0, 0.5]")
    _check_sets(confident)
    scorer_cfg = ScorerConfig(epochs=20) if scorer_cfg is None else scorer_cfg
    pos_idx, neg_idx = confident.positive_idx, confident.negative_idx
    x = np.vstack([source.features[pos_idx], source.features[neg_idx]])
    y = np.concatenate([np.ones(pos_idx.size, int), -np.ones(neg_idx.size, int)])
    s = train_binary(replace(scorer_cfg, seed=seed), x, y, balanced_weights(y))
    neg_post = 1.0 - predict_proba(s, source.features[neg_idx])
    pos_post = predict_proba(s, source.features[pos_idx])
    k_neg = math.ceil(p * neg_idx.size)
    k_pos = math.ceil(p * pos_idx.size)
    to_pos = neg_idx[np.argsort(neg_post, kind="stable")[:k_neg]]
    to_neg = pos_idx[np.argsort(pos_post, kind="stable")[:k_pos]]
    return ConfidentSets(
        np.concatenate([pos_idx, to_pos]), np.concatenate([neg_idx, to_neg]), "regrouped"
    )


def estimate_rempe(bag, confident, source, p: float | None = None,
                   cfg: EstimatorConfig | None = None, bag_id: int = -1) -> PriorEstimate:
    cfg = EstimatorConfig(method="rempe") if cfg is None else cfg
    p = cfg.rempe_fraction if p is None else p
    regrouped = regroup(confident, source, p, cfg.scorer, cfg.seed + 7)
    return estimate_standard(bag, regrouped, source, cfg, bag_id, method="rempe")


def _halves(n, rng):
    perm = rng.permutation(n)
    half = n // 2
    return perm[:half], perm[half:]


def estimate_bbe(bag, confident, source, cfg: EstimatorConfig | None = None,
                 bag_id: int = -1) -> PriorEstimate:
    cfg = EstimatorConfig(method="bbe") if cfg is None else cfg
    _check_sets(confident)
    bag = np.asarray(bag, dtype=float)
    kc = cfg.kappa

    def side(reference, seed):
        rng = np.random.default_rng(seed)
        r_fit, r_hold = _halves(reference.shape[0], rng)
        u_fit, u_hold = _halves(bag.shape[0], rng)
        if r_fit.size == 0 or r_hold.size == 0 or u_fit.size == 0 or u_hold.size == 0:
            raise ValueError("hold-out split left an empty half")
        x = np.vstack([reference[r_fit], bag[u_fit]])
        y = np.concatenate([np.ones(r_fit.size, int), -np.ones(u_fit.size, int)])
        s = train_binary(replace(cfg.scorer, seed=seed), x, y, balanced_weights(y))
        zp = predict_proba(s, reference[r_hold])
        zu = predict_proba(s, bag[u_hold])
        _, ratio = bbe_threshold(zp, zu, kc.delta, kc.gamma_bbe)
        return float(np.clip(ratio, 0.0, 1.0))

    s1 = side(confident.positives(source), cfg.seed)
    s2 = 1.0 - side(confident.negatives(source), cfg.seed + 1)
    return PriorEstimate(0.5 * (s1 + s2), s1, s2, "bbe", bag_id)


def estimate_bag(bag, confident, source, cfg: EstimatorConfig, bag_id: int = -1) -> PriorEstimate:
    if cfg.method == "standard":
        return estimate_standard(bag, confident, source, cfg, bag_id)
    if cfg.method == "rempe":
        return estimate_rempe(bag, confident, source, None, cfg, bag_id)
    if cfg.method == "bbe":
        return estimate_bbe(bag, confident, source, cfg, bag_id)
    raise ValueError(f"{cfg.method!r} is not a per-bag estimator")


def forward_mutual(pi_plus: float, pi_minus: float) -> tuple[float, float]:
    """Mixture weights implied by true priors: (weight of the minus bag in the
    plus bag, weight of the plus bag in the minus bag)."""
    return (1.0 - pi_plus) / (1.0 - pi_minus), pi_minus / pi_plus


def invert_mutual(kappa_plus: float, kappa_minus: float) -> tuple[float, float]:
    denom = 1.0 - kappa_plus * kappa_minus
    if kappa_plus * kappa_minus >= 1.0 - INVERSION_GUARD:
        raise UnstableInversionError(
            f"kappa product {kappa_plus * kappa_minus:.9f} too close to 1"
        )
    pi_plus = (1.0 - kappa_plus) / denom
    return pi_plus, pi_plus * kappa_minus


def estimate_pair_mutual(bag_plus, bag_minus, cfg: EstimatorConfig | None = None,
                         ids=(0, 1)) -> tuple[PriorEstimate, PriorEstimate]:
    """Mutual-model priors for an ordered pair (plus bag has the larger prior)."""
    cfg = EstimatorConfig(method="mutual") if cfg is None else cfg
    bp = np.asarray(bag_plus, dtype=float)
    bm = np.asarray(bag_minus, dtype=float)
    z_comp, z_mix = _reference_scores(bm, bp, cfg.scorer, cfg.seed)
    k_plus = kappa_hat(z_comp, z_mix, cfg.kappa)
    z_comp, z_mix = _reference_scores(bp, bm, cfg.scorer, cfg.seed + 1)
    k_minus = kappa_hat(z_comp, z_mix, cfg.kappa)
    pi_plus, pi_minus = invert_mutual(k_plus, k_minus)
    pi_plus = float(np.clip(pi_plus, 0.0, 1.0))
    pi_minus = float(np.clip(pi_minus, 0.0, 1.0))
    return (
        PriorEstimate(pi_plus, pi_plus, pi_plus, "mutual", ids[0]),
        PriorEstimate(pi_minus, pi_minus, pi_minus, "mutual", ids[1]),
    )
