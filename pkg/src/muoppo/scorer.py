"""Differentiable binary scorers and a deterministic minibatch trainer.

Two architectures are provided:

* ``linear``: ``f(x) = x @ w + b``
* ``mlp``: one hidden layer with sigmoid units, ``f(x) = sigmoid(x @ W1 + b1) @ w2 + b2``

The hidden activation is nonnegative so that penultimate embeddings of
different classes point in different directions (the alignment selector
depends on that). Only raw scores, probabilities, per-example losses and
embeddings leave this module.

Checkpoints are written in a small binary container::

    b"PLSC1" | u32 header length | UTF-8 JSON header | float64 LE payload

The header carries the architecture and an ordered list of
``{"name", "shape"}`` entries; the payload is the arrays concatenated in
that order.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

MAGIC = b"PLSC1"
ARCHITECTURES = ("linear", "mlp")


@dataclass
class ScorerConfig:
    """Training configuration.

    Defaults: learning_rate 0.05, batch_size 64, epochs 10 (the warm-up
    length), no weight decay.
    """

    architecture: str = "linear"
    hidden_width: int = 16
    learning_rate: float = 0.05
    batch_size: int = 64
    epochs: int = 10
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.architecture == "mlp" and self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1 for mlp")


class Scorer:
    """Parameter container with forward/backward passes."""

    def __init__(self, architecture: str, params: dict[str, np.ndarray]):
        if architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {architecture!r}")
        self.architecture = architecture
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}

    @property
    def input_dim(self) -> int:
        key = "w" if self.architecture == "linear" else "W1"
        return self.params[key].shape[0]

    @property
    def embed_dim(self) -> int:
        if self.architecture == "linear":
            return self.input_dim
        return self.params["W1"].shape[1]

    def copy(self) -> "Scorer":
        return Scorer(self.architecture, self.params)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected inputs with {self.input_dim} features, got shape {x.shape}"
            )
        return x

    def forward(self, x):
        x = self._check(x)
        p = self.params
        if self.architecture == "linear":
            return x @ p["w"] + p["b"][0], (x,)
        h = expit(x @ p["W1"] + p["b1"])
        return h @ p["w2"] + p["b2"][0], (x, h)

    def backward(self, cache, dscores) -> dict[str, np.ndarray]:
        """Parameter gradients given d(objective)/d(raw scores)."""
        p = self.params
        if self.architecture == "linear":
            (x,) = cache
            return {"w": x.T @ dscores, "b": np.array([dscores.sum()])}
        x, h = cache
        dh = np.outer(dscores, p["w2"]) * h * (1.0 - h)
        return {
            "W1": x.T @ dh,
            "b1": dh.sum(axis=0),
            "w2": h.T @ dscores,
            "b2": np.array([dscores.sum()]),
        }

    def raw_score(self, x):
        return self.forward(x)[0]

    # weights that weight decay applies to; biases are exempt
    def decayed(self):
        return ("w",) if self.architecture == "linear" else ("W1", "w2")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])


def init_scorer(config: ScorerConfig, input_dim: int, rng=None) -> Scorer:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if config.architecture == "linear":
        params = {
            "w": rng.normal(0.0, 0.01, size=input_dim),
            "b": np.zeros(1),
        }
    else:
        h = config.hidden_width
        params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(input_dim, h)),
            "b1": rng.normal(0.0, 0.1, size=h),
            "w2": rng.normal(0.0, 1.0 / np.sqrt(h), size=h),
            "b2": np.zeros(1),
        }
    return Scorer(config.architecture, params)


def predict_proba(scorer: Scorer, x):
    """P(y=+1|x) as the sigmoid of the raw score, kept strictly inside (0, 1)."""
    s = np.clip(scorer.raw_score(x), -30.0, 30.0)
    return expit(s)


def embed(scorer: Scorer, x):
    """Hidden-layer activations (mlp) or the raw input (linear)."""
    x = scorer._check(x)
    if scorer.architecture == "linear":
        return x.copy()
    p = scorer.params
    return expit(x @ p["W1"] + p["b1"])


def logistic_loss(scores, labels):
    """ln(1 + exp(-y s)) elementwise, computed stably."""
    return np.logaddexp(0.0, -np.asarray(labels, dtype=float) * np.asarray(scores, dtype=float))


def logistic_loss_grad(scores, labels):
    """Derivative of ``logistic_loss`` with respect to the score."""
    y = np.asarray(labels, dtype=float)
    return -y * expit(-y * np.asarray(scores, dtype=float))


def per_example_logistic_loss(scorer: Scorer, features, pseudo_labels):
    y = np.asarray(pseudo_labels)
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be +1 or -1")
    s = scorer.raw_score(features)
    if s.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    return logistic_loss(s, y)


# batch objective: (row indices, raw scores of those rows) -> (loss, d loss / d scores)
BatchObjective = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


def objective_and_grad(scorer: Scorer, x, batch_fn: BatchObjective, idx=None, weight_decay=0.0):
    """Evaluate a score-level objective plus L2 penalty and its parameter gradient."""
    x = np.asarray(x, dtype=float)
    idx = np.arange(x.shape[0]) if idx is None else idx
    s, cache = scorer.forward(x[idx])
    loss, ds = batch_fn(idx, s)
    grads = scorer.backward(cache, ds)
    if weight_decay:
        for k in scorer.decayed():
            loss += 0.5 * weight_decay * float(np.sum(scorer.params[k] ** 2))
            grads[k] = grads[k] + weight_decay * scorer.params[k]
    return float(loss), grads


def fit_minibatch(scorer: Scorer, config: ScorerConfig, x, batch_fn: BatchObjective, rng=None) -> Scorer:
    """Plain minibatch gradient descent for ``config.epochs`` passes.

    Batches come from a fresh permutation each epoch drawn from ``rng``
    (seeded from ``config.seed`` when omitted). Returns a new scorer; the
    input scorer is left untouched.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rng = np.random.default_rng(config.seed) if rng is None else rng
    model = scorer.copy()
    lr = config.learning_rate
    bs = config.batch_size
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            _, grads = objective_and_grad(model, x, batch_fn, idx, config.weight_decay)
            for k, g in grads.items():
                model.params[k] -= lr * g
    return model


def weighted_logistic_objective(labels, weights=None) -> BatchObjective:
    """Batch mean of ``weights * logistic_loss`` with weights rescaled to mean 1."""
    y = np.asarray(labels, dtype=float)
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.mean()

    def fn(idx, s):
        wy = w[idx]
        loss = float(np.sum(wy * logistic_loss(s, y[idx]))) / idx.size
        return loss, wy * logistic_loss_grad(s, y[idx]) / idx.size

    return fn


def balanced_weights(labels):
    """Per-example weights giving each label the same total weight."""
    y = np.asarray(labels)
    w = np.empty(y.shape, dtype=float)
    for c in np.unique(y):
        mask = y == c
        w[mask] = y.size / (2.0 * mask.sum())
    return w


def train_binary(config: ScorerConfig, features, labels, per_example_weights=None, scorer=None) -> Scorer:
    """Train on labels in {+1, -1} with the weighted logistic loss."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be +1 or -1")
    if per_example_weights is None and np.unique(y).size < 2:
        warnings.warn("training data holds a single label", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(config.seed)
    model = init_scorer(config, x.shape[1], rng) if scorer is None else scorer
    return fit_minibatch(model, config, x, weighted_logistic_objective(y, per_example_weights), rng)


def save_scorer(scorer: Scorer, path) -> None:
    names = sorted(scorer.params)
    header = json.dumps(
        {
            "architecture": scorer.architecture,
            "arrays": [{"name": k, "shape": list(scorer.params[k].shape)} for k in names],
        },
        sort_keys=True,
    ).encode("utf-8")
    payload = b"".join(scorer.params[k].astype("<f8").tobytes() for k in names)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def load_scorer(path) -> Scorer:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise ValueError(f"{path}: not a scorer checkpoint")
    (hlen,) = struct.unpack("<I", blob[5:9])
    header = json.loads(blob[9:9 + hlen].decode("utf-8"))
    offset = 9 + hlen
    params = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        params[entry["name"]] = arr.reshape(shape).astype(float)
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return Scorer(header["architecture"], params)
