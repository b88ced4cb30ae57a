"""Final classifier training from bags plus estimated priors.

Two prior-consuming trainers are provided:

* surrogate-set training: the binary posterior ``eta`` is mapped through a
  linear-fractional transition to a posterior over bag membership, and the
  scorer is fit by maximum likelihood on "which bag did this row come
  from";
* pairwise mutual-contamination training: bags are paired by prior gap and
  each pair contributes a non-negatively corrected two-bag risk, weighted
  by ``n_bar * gap**2``.

Both work on raw scores so the scorer module's trainer can drive them.
Prediction is ``sign(f(x))`` with ties to +1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import SingularTransitionError
from .prior_est import EstimatorConfig, estimate_bag
from .scorer import (
    Scorer,
    ScorerConfig,
    fit_minibatch,
    init_scorer,
    logistic_loss,
    logistic_loss_grad,
)

PROB_FLOOR = 1e-12
EXACT_MATCHING_MAX = 10


@dataclass(frozen=True)
class TransitionLayer:
    """``T_j(eta) = (a_j eta + b_j) / (c eta + d)`` over bags ``j``."""

    a: np.ndarray
    b: np.ndarray
    c: float
    d: float
    degenerate: bool = False

    @property
    def m(self) -> int:
        return self.a.size

    def __call__(self, eta):
        """(n, m) matrix of bag posteriors for a vector of binary posteriors."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return (np.outer(eta, self.a) + self.b) / (self.c * eta + self.d)[:, None]

    def derivative(self, eta):
        """(n, m) matrix of dT_j/d eta."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        num = self.a * self.d - self.b * self.c
        return np.broadcast_to(num, (eta.size, self.m)) / ((self.c * eta + self.d) ** 2)[:, None]


def _values(priors):
    return np.asarray(getattr(priors, "values", priors), dtype=float)


def build_transition(priors, rho, pi_D: float) -> TransitionLayer:
    pri = _values(priors)
    rho = np.asarray(rho, dtype=float)
    if not 0.0 < pi_D < 1.0:
        raise ValueError("pi_D must lie in (0, 1)")
    if pri.shape != rho.shape:
        raise ValueError("priors and rho differ in length")
    a = rho * (pri - pi_D)
    b = rho * pi_D * (1.0 - pri)
    c = float(a.sum())
    d = float(b.sum())
    # the denominator is linear in eta, so checking both endpoints suffices
    if d <= 0.0 or c + d <= 0.0:
        raise SingularTransitionError(f"transition denominator vanishes on [0, 1] (c={c}, d={d})")
    layer = TransitionLayer(a, b, c, d, degenerate=bool(np.all(a == 0.0)))
    sums = layer(np.array([0.0, 0.5, 1.0])).sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-9:
        raise SingularTransitionError("transition rows do not sum to one")
    return layer


def surrogate_objective(scores, bag_ids, layer: TransitionLayer):
    """Mean negative log surrogate probability and its gradient in raw scores."""
    s = np.asarray(scores, dtype=float)
    ids = np.asarray(bag_ids, dtype=int)
    eta = expit(s)
    rows = np.arange(s.size)
    t = layer(eta)[rows, ids]
    floored = t <= PROB_FLOOR
    loss = float(-np.log(np.maximum(t, PROB_FLOOR)).mean())
    dt = layer.derivative(eta)[rows, ids]
    grad = np.where(floored, 0.0, -dt / np.where(floored, 1.0, t)) * eta * (1.0 - eta)
    return loss, grad / s.size


def surrogate_loss(eta, bag_ids, layer: TransitionLayer) -> float:
    """Mean of ``-log max(T_{bag}(eta), 1e-12)`` for posteriors ``eta``."""
    eta = np.asarray(eta, dtype=float)
    ids = np.asarray(bag_ids, dtype=int)
    if eta.shape != ids.shape:
        raise ValueError("one bag id per score")
    if ids.size and (ids.min() < 0 or ids.max() >= layer.m):
        raise ValueError("bag id out of range")
    t = layer(eta)[np.arange(eta.size), ids]
    return float(-np.log(np.maximum(t, PROB_FLOOR)).mean())


def _stack(bags):
    x = np.vstack([np.asarray(b, dtype=float) for b in bags])
    ids = np.concatenate([np.full(np.asarray(b).shape[0], j) for j, b in enumerate(bags)])
    return x, ids


def _bag_list(bags):
    return bags.bags if hasattr(bags, "bags") else list(bags)


def train_umssc(bags, priors, pi_D: float, config: ScorerConfig) -> Scorer:
    bag_list = _bag_list(bags)
    x, ids = _stack(bag_list)
    rho = np.array([b.shape[0] for b in bag_list], dtype=float)
    layer = build_transition(priors, rho / rho.sum(), pi_D)

    def batch_fn(idx, s):
        return surrogate_objective(s, ids[idx], layer)

    rng = np.random.default_rng(config.seed)
    return fit_minibatch(init_scorer(config, x.shape[1], rng), config, x, batch_fn, rng)


@dataclass(frozen=True)
class McmPairing:
    pairs: tuple[tuple[int, int], ...]
    weights: np.ndarray
    dropped: int | None = None
    objective: float = 0.0


def pair_weight(pi_hi, pi_lo, n_hi, n_lo) -> float:
    return 2.0 * n_hi * n_lo / (n_hi + n_lo) * (pi_hi - pi_lo) ** 2


def _orient(i, j, pri):
    return (i, j) if pri[i] >= pri[j] else (j, i)


def _objective(pairs, pri, sizes):
    return sum(pair_weight(pri[i], pri[j], sizes[i], sizes[j]) for i, j in pairs)


def perfect_matchings(items):
    """Every perfect matching of an even-length sequence (first item pairs first)."""
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for sub in perfect_matchings(rest):
            yield [(first, items[k])] + sub


def _sorted_matching(idx, pri):
    order = sorted(idx, key=lambda j: (-pri[j], j))
    h = len(order) // 2
    return [(order[k], order[-1 - k]) for k in range(h)]


def _exact_matching(idx, pri, sizes):
    best, best_val = None, -math.inf
    for mt in perfect_matchings(idx):
        v = _objective(mt, pri, sizes)
        if v > best_val + 1e-15:
            best, best_val = mt, v
    return best


def _greedy_matching(idx, pri, sizes):
    cand = sorted(
        ((pair_weight(pri[i], pri[j], sizes[i], sizes[j]), i, j) for i, j in itertools.combinations(idx, 2)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used, out = set(), []
    for _, i, j in cand:
        if i not in used and j not in used:
            out.append((i, j))
            used.update((i, j))
    return out


def pair_bags_mcm(priors, sizes, mode: str = "auto") -> McmPairing:
    """Pair bags to maximize ``sum n_bar * gap**2``.

    Equal sizes use the sorted matching (largest prior with smallest),
    which is optimal there. Unequal sizes use exhaustive search when
    ``m <= 10`` and a greedy heaviest-edge-first matching otherwise. With
    odd ``m`` the bag whose removal leaves the best objective is dropped.
    Weights are normalized to sum to one; zero-gap pairs are excluded.
    """
    pri = _values(priors)
    sizes = np.asarray(sizes, dtype=float)
    m = pri.size
    if m < 2 or sizes.size != m:
        raise ValueError("need at least two bags with one size each")
    equal = bool(np.all(sizes == sizes[0]))
    if mode == "auto":
        mode = "sorted" if equal else ("exact" if m <= EXACT_MATCHING_MAX else "greedy")

    def solve(idx):
        if mode == "sorted":
            return _sorted_matching(idx, pri)
        if mode == "exact":
            return _exact_matching(idx, pri, sizes)
        if mode == "greedy":
            return _greedy_matching(idx, pri, sizes)
        raise ValueError(f"unknown matching mode {mode!r}")

    dropped = None
    if m % 2 == 0:
        matching = solve(list(range(m)))
    else:
        best_val = -math.inf
        for k in range(m):
            mt = solve([j for j in range(m) if j != k])
            v = _objective(mt, pri, sizes)
            if v > best_val + 1e-15:
                matching, best_val, dropped = mt, v, k
    pairs = [_orient(i, j, pri) for i, j in matching if pri[i] != pri[j]]
    pairs.sort()
    if not pairs:
        raise ValueError("every pair has equal priors; nothing to train on")
    w = np.array([pair_weight(pri[i], pri[j], sizes[i], sizes[j]) for i, j in pairs])
    total = float(w.sum())
    return McmPairing(tuple(pairs), w / total, dropped, total)


def uu_risk_and_grad(scores_plus, scores_minus, theta_plus, theta_minus, pi_D, correction=True):
    """Two-bag risk with per-class partial risks; returns (risk, d/ds_plus, d/ds_minus).

    ``R_p = [(1-t-) L(plus,+1) - (1-t+) L(minus,+1)] / (t+ - t-)`` and
    ``R_n = [t+ L(minus,-1) - t- L(plus,-1)] / (t+ - t-)`` with ``L`` the mean
    logistic loss of a bag's rows against a label. The risk is
    ``pi_D R_p + (1 - pi_D) R_n`` with each term clamped at zero when
    ``correction`` is on.
    """
    sp = np.asarray(scores_plus, dtype=float)
    sm = np.asarray(scores_minus, dtype=float)
    gap = float(theta_plus - theta_minus)
    if not gap > 0.0:
        raise ValueError("theta_plus must exceed theta_minus")
    if sp.size == 0 or sm.size == 0:
        raise ValueError("both bags need rows")
    npl, nmi = sp.size, sm.size
    r_p = ((1 - theta_minus) * logistic_loss(sp, 1).mean() - (1 - theta_plus) * logistic_loss(sm, 1).mean()) / gap
    r_n = (theta_plus * logistic_loss(sm, -1).mean() - theta_minus * logistic_loss(sp, -1).mean()) / gap
    term_p = pi_D * r_p
    term_n = (1 - pi_D) * r_n
    on_p = 1.0 if (not correction or term_p > 0) else 0.0
    on_n = 1.0 if (not correction or term_n > 0) else 0.0
    risk = (max(0.0, term_p) if correction else term_p) + (max(0.0, term_n) if correction else term_n)
    g_plus = (
        on_p * pi_D * (1 - theta_minus) * logistic_loss_grad(sp, 1) / npl
        - on_n * (1 - pi_D) * theta_minus * logistic_loss_grad(sp, -1) / npl
    ) / gap
    g_minus = (
        -on_p * pi_D * (1 - theta_plus) * logistic_loss_grad(sm, 1) / nmi
        + on_n * (1 - pi_D) * theta_plus * logistic_loss_grad(sm, -1) / nmi
    ) / gap
    return float(risk), g_plus, g_minus


def uu_c_risk(scores_plus, scores_minus, theta_plus, theta_minus, pi_D, correction=True) -> float:
    return uu_risk_and_grad(scores_plus, scores_minus, theta_plus, theta_minus, pi_D, correction)[0]


def supervised_risk(scores, labels, pi_D) -> float:
    """Class-prior-weighted logistic risk on labeled rows."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    return float(pi_D * logistic_loss(s[y == 1], 1).mean() + (1 - pi_D) * logistic_loss(s[y == -1], -1).mean())


def mcm_objective(pairing: McmPairing, priors, pi_D, ids, correction=True):
    """Batch objective over a stacked dataset whose rows carry bag ``ids``."""
    pri = _values(priors)

    def fn(idx, s):
        b = ids[idx]
        loss, grad = 0.0, np.zeros_like(s)
        for w, (hi, lo) in zip(pairing.weights, pairing.pairs):
            mp, mm = b == hi, b == lo
            if not mp.any() or not mm.any():
                continue
            r, gp, gm = uu_risk_and_grad(s[mp], s[mm], pri[hi], pri[lo], pi_D, correction)
            loss += w * r
            grad[mp] += w * gp
            grad[mm] += w * gm
        return loss, grad

    return fn


def train_mcm(bags, priors, pi_D: float, config: ScorerConfig, normalize: bool = True,
              weight_scale: float = 1.0) -> Scorer:
    bag_list = _bag_list(bags)
    x, ids = _stack(bag_list)
    pairing = pair_bags_mcm(priors, [b.shape[0] for b in bag_list])
    weights = pairing.weights if normalize else pairing.weights * pairing.objective
    pairing = McmPairing(pairing.pairs, weights * weight_scale, pairing.dropped, pairing.objective)
    rng = np.random.default_rng(config.seed)
    return fit_minibatch(init_scorer(config, x.shape[1], rng), config, x,
                         mcm_objective(pairing, priors, pi_D, ids), rng)


def predict_labels(scorer: Scorer, x) -> np.ndarray:
    return np.where(scorer.raw_score(x) >= 0.0, 1, -1)


def accuracy(scorer: Scorer, x, labels) -> float:
    return float(np.mean(predict_labels(scorer, x) == np.asarray(labels)))


def estimate_test_prior(test_features, confident, source, cfg: EstimatorConfig | None = None,
                        given: float | None = None) -> float:
    """Prior of the unlabeled test set, estimated as one more bag unless ``given``."""
    if given is not None:
        return float(given)
    cfg = EstimatorConfig() if cfg is None else cfg
    return estimate_bag(test_features, confident, source, cfg, bag_id=-1).value
