"""Labeled pools, binary tasks and synthetic bag collections.

A bag collection is a list of ``m`` unlabeled feature matrices, bag ``j``
drawn as a mixture with positive fraction ``priors[j]``. Exactly one ordered
pair ``(alpha, beta)`` is known to satisfy ``priors[alpha] > priors[beta]``.
Bag indices are 0-based.
"""

from __future__ import annotations

import csv
import gzip
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, InvalidPartitionError, InvalidSpecError, ParseError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class LabeledPool:
    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels).astype(int)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ValueError("features must be an (n, d) matrix with d >= 1")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature rows and labels differ in count")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be +1 or -1")

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.labels == 1)) if self.labels.size else 0.0

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class MulticlassPool:
    features: np.ndarray
    class_ids: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.class_ids = np.asarray(self.class_ids).astype(int)
        if self.features.ndim != 2 or self.features.shape[0] != self.class_ids.shape[0]:
            raise ValueError("features must be (n, d) with one class id per row")


def make_binary_task(pool: MulticlassPool, positive_classes) -> LabeledPool:
    """Relabel a multiclass pool: listed classes become +1, the rest -1."""
    classes = set(np.unique(pool.class_ids).tolist())
    positive = set(int(c) for c in positive_classes)
    if not positive or not positive & classes or classes <= positive:
        raise InvalidPartitionError(
            f"positive classes {sorted(positive)} must be a nonempty proper subset of {sorted(classes)}"
        )
    labels = np.where(np.isin(pool.class_ids, list(positive)), 1, -1)
    return LabeledPool(pool.features, labels, pool.name)


def even_priors(m: int, lo: float = 0.1, hi: float = 0.9) -> list[float]:
    if m < 2:
        raise InvalidSpecError("need at least two bags")
    if not 0.0 <= lo < hi <= 1.0:
        raise InvalidSpecError("need 0 <= lo < hi <= 1")
    return [float(v) for v in np.linspace(lo, hi, m)]


@dataclass
class BagSpec:
    priors: list[float]
    sizes: list[int]
    pair: tuple[int, int]
    seed: int = 0

    def __post_init__(self):
        self.priors = [float(p) for p in self.priors]
        self.sizes = [int(s) for s in self.sizes]
        self.pair = (int(self.pair[0]), int(self.pair[1]))
        m = len(self.priors)
        if m < 2:
            raise InvalidSpecError("need at least two bags")
        if len(self.sizes) != m:
            raise InvalidSpecError("priors and sizes differ in length")
        if any(not 0.0 <= p <= 1.0 for p in self.priors):
            raise InvalidSpecError("priors must lie in [0, 1]")
        if any(s < 1 for s in self.sizes):
            raise InvalidSpecError("bag sizes must be >= 1")
        if len(set(self.priors)) == 1:
            raise InvalidSpecError("priors must not all be equal")
        a, b = self.pair
        if a == b or not (0 <= a < m and 0 <= b < m):
            raise InvalidSpecError(f"pair {self.pair} must name two distinct bags in [0, {m})")
        if not self.priors[a] > self.priors[b]:
            raise InvalidSpecError("declared pair must satisfy priors[alpha] > priors[beta]")
        if self.seed < 0:
            raise InvalidSpecError("seed must be unsigned")

    @property
    def m(self) -> int:
        return len(self.priors)

    @classmethod
    def even(cls, m=10, lo=0.1, hi=0.9, bag_size=1000, pair=None, seed=0) -> "BagSpec":
        """Evenly spaced priors with equal sizes; default pair is (largest, smallest)."""
        pair = (m - 1, 0) if pair is None else pair
        return cls(even_priors(m, lo, hi), [bag_size] * m, pair, seed)


@dataclass
class BagCollection:
    bags: list[np.ndarray]
    pair: tuple[int, int]
    hidden_labels: list[np.ndarray] | None = None
    true_priors: list[float] | None = field(default=None)

    def __post_init__(self):
        self.bags = [np.asarray(b, dtype=float) for b in self.bags]
        if len(self.bags) < 2:
            raise InvalidSpecError("need at least two bags")
        if self.hidden_labels is not None:
            if len(self.hidden_labels) != len(self.bags) or any(
                len(h) != b.shape[0] for h, b in zip(self.hidden_labels, self.bags)
            ):
                raise ValueError("hidden labels must match bag shapes")
        a, b = self.pair
        if a == b or not (0 <= a < self.m and 0 <= b < self.m):
            raise InvalidSpecError(f"invalid pair {self.pair}")

    @property
    def m(self) -> int:
        return len(self.bags)

    @property
    def sizes(self) -> list[int]:
        return [b.shape[0] for b in self.bags]

    @property
    def rho(self) -> np.ndarray:
        n = np.array(self.sizes, dtype=float)
        return n / n.sum()

    @property
    def dim(self) -> int:
        return self.bags[0].shape[1]

    def empirical_priors(self) -> np.ndarray:
        if self.hidden_labels is None:
            raise ValueError("collection carries no hidden labels")
        return np.array([float(np.mean(h == 1)) for h in self.hidden_labels])


def positive_count(prior: float, size: int) -> int:
    """round(prior * size) with ties rounded up."""
    return int(math.floor(prior * size + 0.5))


def sample_bags(pool: LabeledPool, spec: BagSpec) -> BagCollection:
    """Draw each bag without replacement from the pool (bags may share rows)."""
    pos_rows = np.flatnonzero(pool.labels == 1)
    neg_rows = np.flatnonzero(pool.labels == -1)
    counts = [positive_count(p, n) for p, n in zip(spec.priors, spec.sizes)]
    for j, (k, n) in enumerate(zip(counts, spec.sizes)):
        if k > pos_rows.size or n - k > neg_rows.size:
            raise CapacityError(
                f"bag {j} needs {k} positive and {n - k} negative rows; pool has "
                f"{pos_rows.size} and {neg_rows.size}"
            )
    rng = np.random.default_rng(spec.seed)
    bags, hidden = [], []
    for k, n in zip(counts, spec.sizes):
        rows = np.concatenate(
            [rng.choice(pos_rows, size=k, replace=False), rng.choice(neg_rows, size=n - k, replace=False)]
        )
        rows = rows[rng.permutation(n)]
        bags.append(pool.features[rows])
        hidden.append(pool.labels[rows].copy())
    return BagCollection(bags, spec.pair, hidden, list(spec.priors))


def apply_size_shift(spec: BagSpec, tau: float, mode: str = "half-scaled", seed: int = 0) -> BagSpec:
    """Perturb bag sizes.

    ``half-scaled`` picks ceil(m/2) bags at random and sets their sizes to
    ``max(1, ceil(tau * n_j))``. ``random-simplex`` redraws every size as a
    uniformly random composition of the current total into ``m`` positive
    parts; ``tau`` only matters there through ``tau == 1`` leaving the spec
    unchanged.
    """
    if not 0.0 <= tau <= 1.0:
        raise InvalidSpecError("tau must lie in [0, 1]")
    if tau == 1.0:
        return replace(spec)
    rng = np.random.default_rng(seed)
    m = spec.m
    sizes = list(spec.sizes)
    if mode == "half-scaled":
        for j in rng.choice(m, size=math.ceil(m / 2), replace=False):
            sizes[int(j)] = max(1, math.ceil(tau * sizes[int(j)]))
    elif mode == "random-simplex":
        total = sum(sizes)
        if total < m:
            raise InvalidSpecError("total size smaller than bag count")
        # stars and bars: m-1 distinct cut points among total-1 gaps
        cuts = np.sort(rng.choice(np.arange(1, total), size=m - 1, replace=False))
        sizes = np.diff(np.concatenate([[0], cuts, [total]])).astype(int).tolist()
    else:
        raise InvalidSpecError(f"unknown size-shift mode {mode!r}")
    return replace(spec, sizes=sizes)


def _open(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def _read_idx(path, expected_magic):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ParseError(f"{path}: truncated idx header", row=0)
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ParseError(f"{path}: bad idx magic 0x{magic:08x}", row=0)
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise ParseError(f"{path}: truncated idx header", row=0)
    shape = struct.unpack(">" + "I" * ndim, raw[4:header_len])
    body = np.frombuffer(raw, dtype=np.uint8, offset=header_len)
    expected = int(np.prod(shape))
    if body.size != expected:
        row = body.size // max(1, expected // max(1, shape[0]))
        raise ParseError(f"{path}: expected {expected} bytes of data, found {body.size}", row=row)
    return body.reshape(shape)


def _label_path_for(image_path):
    d, base = os.path.split(str(image_path))
    for a, b in (("images-idx3", "labels-idx1"), ("images", "labels")):
        if a in base:
            return os.path.join(d, base.replace(a, b, 1))
    raise ParseError(f"{image_path}: cannot infer the labels file; pass labels_path", row=0)


def load_multiclass_idx(images_path, labels_path=None, name="") -> MulticlassPool:
    images = _read_idx(images_path, IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path or _label_path_for(images_path), IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", row=min(images.shape[0], labels.shape[0])
        )
    features = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return MulticlassPool(features, labels.astype(int), name or os.path.basename(str(images_path)))


def _parse_label(text, row):
    t = text.strip()
    if t in ("+1", "1", "1.0", "+1.0"):
        return 1
    if t in ("-1", "-1.0"):
        return -1
    raise ParseError(f"label {text!r} is not +1 or -1", row=row)


def load_csv_pool(path, name="") -> LabeledPool:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise ParseError("header must be label,f1,...,fd", row=0)
        d = len(header) - 1
        labels, rows = [], []
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != d + 1:
                raise ParseError(f"expected {d + 1} fields, found {len(rec)}", row=i)
            labels.append(_parse_label(rec[0], i))
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", row=i) from None
    feats = np.array(rows, dtype=float).reshape(len(rows), d)
    return LabeledPool(feats, np.array(labels, dtype=int), name or os.path.basename(str(path)))


def load_pool(path, format: str = "csv", labels_path=None, positive_classes=None) -> LabeledPool:
    """Read a binary labeled pool.

    For ``idx-image`` the class ids are binarized with ``make_binary_task``;
    the default positive set is the even class ids.
    """
    if format == "csv":
        return load_csv_pool(path)
    if format == "idx-image":
        multi = load_multiclass_idx(path, labels_path)
        if positive_classes is None:
            positive_classes = [c for c in np.unique(multi.class_ids) if c % 2 == 0]
        return make_binary_task(multi, positive_classes)
    raise ValueError(f"unknown pool format {format!r}")


def write_csv_pool(pool: LabeledPool, path) -> None:
    d = pool.features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i + 1}" for i in range(d)])
        for y, row in zip(pool.labels, pool.features):
            w.writerow([f"{int(y):+d}"] + [repr(float(v)) for v in row])


def gaussian_pool(n_per_class: int, dim: int = 2, separation: float = 4.0, seed: int = 0, name="gauss") -> LabeledPool:
    """Two isotropic unit-variance Gaussians with means ``+-separation/2`` along the first axis."""
    rng = np.random.default_rng(seed)
    mu = np.zeros(dim)
    mu[0] = separation / 2.0
    pos = rng.normal(size=(n_per_class, dim)) + mu
    neg = rng.normal(size=(n_per_class, dim)) - mu
    feats = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(n_per_class, int), -np.ones(n_per_class, int)])
    return LabeledPool(feats, labels, name)
