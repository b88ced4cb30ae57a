"""Pseudo-labeling of the declared pair and confident-example selection.

Rows of the larger-prior bag are pseudo-labeled +1 and rows of the other bag
-1. A briefly trained ("warm-up") scorer then decides which pseudo labels
are trustworthy. Three selectors are provided: a two-component mixture over
per-example losses, per-class self-confidence thresholds, and squared
alignment of embeddings with each pseudo class's dominant direction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyBagError, EmptySelectionError
from .numerics import em_fit_gmm2, gmm2_posterior, top_eigvec
from .scorer import (
    Scorer,
    ScorerConfig,
    embed,
    per_example_logistic_loss,
    predict_proba,
    train_binary,
)

SELECTORS = ("loss", "confident-joint", "alignment", "none")


@dataclass
class PseudoLabeledSet:
    features: np.ndarray
    pseudo_labels: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return self.pseudo_labels.shape[0]

    @property
    def positive_rows(self) -> np.ndarray:
        return np.flatnonzero(self.pseudo_labels == 1)

    @property
    def negative_rows(self) -> np.ndarray:
        return np.flatnonzero(self.pseudo_labels == -1)


@dataclass
class ConfidentSets:
    positive_idx: np.ndarray
    negative_idx: np.ndarray
    method: str

    def __post_init__(self):
        self.positive_idx = np.asarray(self.positive_idx, dtype=int)
        self.negative_idx = np.asarray(self.negative_idx, dtype=int)

    def check_against(self, source: PseudoLabeledSet) -> "ConfidentSets":
        """Assert both sides are nonempty subsets of their pseudo-label side."""
        if self.positive_idx.size == 0:
            raise EmptySelectionError("positive", self.method)
        if self.negative_idx.size == 0:
            raise EmptySelectionError("negative", self.method)
        if self.method != "regrouped":
            assert np.all(source.pseudo_labels[self.positive_idx] == 1)
            assert np.all(source.pseudo_labels[self.negative_idx] == -1)
            assert np.intersect1d(self.positive_idx, self.negative_idx).size == 0
        return self

    def positives(self, source: PseudoLabeledSet) -> np.ndarray:
        return source.features[self.positive_idx]

    def negatives(self, source: PseudoLabeledSet) -> np.ndarray:
        return source.features[self.negative_idx]


def assign_pseudo_labels(bag_alpha, bag_beta, ids=(0, 1)) -> PseudoLabeledSet:
    """Stack the larger-prior bag (label +1) over the smaller-prior bag (label -1)."""
    xa = np.asarray(bag_alpha, dtype=float)
    xb = np.asarray(bag_beta, dtype=float)
    if xa.shape[0] == 0 or xb.shape[0] == 0:
        raise EmptyBagError("pseudo-labeling needs two nonempty bags")
    if xa.ndim != 2 or xb.ndim != 2 or xa.shape[1] != xb.shape[1]:
        raise ValueError("bags must be matrices with matching feature counts")
    labels = np.concatenate([np.ones(xa.shape[0], int), -np.ones(xb.shape[0], int)])
    origin = np.concatenate([np.full(xa.shape[0], ids[0]), np.full(xb.shape[0], ids[1])])
    return PseudoLabeledSet(np.vstack([xa, xb]), labels, origin)


def warm_up(config: ScorerConfig, source: PseudoLabeledSet) -> Scorer:
    """Short training on pseudo labels; ``config.epochs`` is the warm-up length."""
    return train_binary(config, source.features, source.pseudo_labels)


def _split(source, keep, method) -> ConfidentSets:
    keep = np.asarray(keep, dtype=bool)
    pos = np.flatnonzero(keep & (source.pseudo_labels == 1))
    neg = np.flatnonzero(keep & (source.pseudo_labels == -1))
    return ConfidentSets(pos, neg, method).check_against(source)


def select_by_loss(warm: Scorer, source: PseudoLabeledSet, threshold: float = 0.7) -> ConfidentSets:
    """Keep rows whose low-loss mixture posterior reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    losses = per_example_logistic_loss(warm, source.features, source.pseudo_labels)
    model = em_fit_gmm2(losses)
    clean_post = gmm2_posterior(model, losses)
    return _split(source, clean_post >= threshold, "loss")


def confident_joint_from_proba(prob_pos, pseudo_labels) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal cells of the confident joint for binary probabilities.

    Per class ``s`` the threshold is the mean probability of ``s`` over rows
    pseudo-labeled ``s``. A row counts toward class ``s`` when ``s`` is its
    argmax class (ties at 0.5 go to +1) and its probability of ``s`` reaches
    the threshold. Returns boolean masks for the (+1, +1) and (-1, -1) cells.
    """
    p = np.asarray(prob_pos, dtype=float)
    y = np.asarray(pseudo_labels)
    if not np.any(y == 1) or not np.any(y == -1):
        raise ValueError("both pseudo classes must be nonempty")
    t_pos = p[y == 1].mean()
    t_neg = (1.0 - p[y == -1]).mean()
    argmax_pos = p >= 0.5
    class_pos = argmax_pos & (p >= t_pos)
    class_neg = ~argmax_pos & ((1.0 - p) >= t_neg)
    return class_pos & (y == 1), class_neg & (y == -1)


def select_by_confident_joint(
    warm: Scorer,
    source: PseudoLabeledSet,
    cv_folds: int = 0,
    config: ScorerConfig | None = None,
) -> ConfidentSets:
    """Confident-joint selection, in-sample by default.

    With ``cv_folds >= 2`` each row's probability comes from a scorer trained
    with ``config`` on the other folds instead of from ``warm``.
    """
    if cv_folds and cv_folds >= 2:
        if config is None:
            raise ValueError("cross-validated mode needs a scorer config")
        rng = np.random.default_rng(config.seed)
        folds = np.array_split(rng.permutation(len(source)), cv_folds)
        prob = np.empty(len(source))
        for k, held in enumerate(folds):
            train = np.concatenate([f for j, f in enumerate(folds) if j != k])
            s = train_binary(replace(config, seed=config.seed + k + 1),
                             source.features[train], source.pseudo_labels[train])
            prob[held] = predict_proba(s, source.features[held])
    else:
        prob = predict_proba(warm, source.features)
    pos_cell, neg_cell = confident_joint_from_proba(prob, source.pseudo_labels)
    return _split(source, pos_cell | neg_cell, "confident-joint")


def alignment_mask(embeddings, normalize: bool = True) -> np.ndarray:
    """Rows whose squared projection on the dominant direction falls in the high-mean component.

    With ``normalize`` each embedding is scaled to unit length first, so the
    squared projection measures direction only and not activation magnitude.
    """
    z = np.asarray(embeddings, dtype=float)
    if z.shape[0] < 4:
        raise ValueError("alignment selection needs at least 4 rows per pseudo class")
    if normalize:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        z = np.divide(z, norms, out=np.zeros_like(z), where=norms > 0)
    u, _ = top_eigvec(z.T @ z)
    score = (z @ u) ** 2
    model = em_fit_gmm2(score)
    # component 1 carries the larger mean; posterior exactly 0.5 counts as confident
    return (1.0 - gmm2_posterior(model, score)) >= 0.5


def select_by_alignment(warm: Scorer, source: PseudoLabeledSet, normalize: bool = True) -> ConfidentSets:
    if warm.architecture != "mlp":
        raise ValueError("alignment selection needs an mlp scorer with hidden embeddings")
    z = embed(warm, source.features)
    keep = np.zeros(len(source), dtype=bool)
    for rows in (source.positive_rows, source.negative_rows):
        keep[rows] = alignment_mask(z[rows], normalize)
    return _split(source, keep, "alignment")


def select_all(source: PseudoLabeledSet) -> ConfidentSets:
    """Treat every pseudo label as confident (no selection)."""
    return ConfidentSets(source.positive_rows, source.negative_rows, "none").check_against(source)


def select(method: str, warm: Scorer, source: PseudoLabeledSet, loss_threshold: float = 0.7) -> ConfidentSets:
    if method == "loss":
        return select_by_loss(warm, source, loss_threshold)
    if method == "confident-joint":
        return select_by_confident_joint(warm, source)
    if method == "alignment":
        return select_by_alignment(warm, source)
    if method == "none":
        return select_all(source)
    raise ValueError(f"unknown selector {method!r}")
