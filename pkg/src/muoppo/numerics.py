"""Small numerical kernels shared by the selectors and estimators.

Two-component scalar Gaussian mixtures fitted by EM, dominant eigenvectors of
Gram matrices via power iteration, and empirical tail fractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateInputError, ZeroSpectrumError

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Gmm2:
    """Scalar two-component Gaussian mixture; component 0 has the smaller mean."""

    weight0: float
    weight1: float
    mean0: float
    mean1: float
    var0: float
    var1: float
    var_floor: float = 0.0
    n_iter: int = 0
    log_likelihoods: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not (0.0 < self.weight0 < 1.0 and 0.0 < self.weight1 < 1.0):
            raise ValueError("mixture weights must lie in (0, 1)")
        if abs(self.weight0 + self.weight1 - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if self.mean0 > self.mean1:
            raise ValueError("component 0 must carry the smaller mean")
        if self.var0 < self.var_floor or self.var1 < self.var_floor:
            raise ValueError("variances below the floor")

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.weight0, self.weight1])

    @property
    def means(self) -> np.ndarray:
        return np.array([self.mean0, self.mean1])

    @property
    def variances(self) -> np.ndarray:
        return np.array([self.var0, self.var1])


def _log_joint(values, weights, means, variances):
    # (n, 2) array of log w_k + log N(v; mu_k, var_k)
    v = values[:, None]
    return (
        np.log(weights)[None, :]
        - 0.5 * (_LOG_2PI + np.log(variances)[None, :])
        - 0.5 * (v - means[None, :]) ** 2 / variances[None, :]
    )


def em_fit_gmm2(values, max_iters: int = 200, tol: float = 1e-8, seed=None) -> Gmm2:
    """Fit a two-component Gaussian mixture to scalar values with EM.

    Initialization is deterministic: the sorted values are split at the
    median and each half provides its component's weight, mean and variance.
    Variances are floored at ``1e-6`` times the sample variance. Iteration
    stops once the log-likelihood improves by less than ``tol`` or after
    ``max_iters`` EM steps. ``seed`` is accepted for interface symmetry with
    the other fitters; the sorted-split initialization needs no randomness,
    so the fit is a pure function of the multiset of values.

    Raises
    ------
    DegenerateInputError
        Fewer than 4 values, or all values identical.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 4:
        raise DegenerateInputError(f"need at least 4 values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("values must be finite")
    sample_var = float(np.var(x))
    if sample_var == 0.0 or np.all(x == x[0]):
        raise DegenerateInputError("all values are identical")
    var_floor = 1e-6 * sample_var

    xs = np.sort(x)
    half = xs.size // 2
    lo, hi = xs[:half], xs[half:]
    weights = np.array([lo.size, hi.size], dtype=float) / xs.size
    means = np.array([lo.mean(), hi.mean()])
    variances = np.maximum(np.array([lo.var(), hi.var()]), var_floor)

    history = []
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        log_joint = _log_joint(x, weights, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        if history and ll - history[-1] < tol:
            history.append(ll)
            break
        history.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk <= 0.0):
            # one component lost all mass; keep the last valid parameters
            break
        weights = nk / x.size
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        variances = np.maximum(variances, var_floor)

    # component masses can round to exactly 0 or 1 on point-mass inputs
    eps = np.finfo(float).eps
    weights = np.clip(weights, eps, 1.0 - eps)
    weights = weights / weights.sum()
    order = np.argsort(means, kind="stable")
    w, mu, var = weights[order], means[order], variances[order]
    return Gmm2(
        weight0=float(w[0]),
        weight1=float(1.0 - w[0]),
        mean0=float(mu[0]),
        mean1=float(mu[1]),
        var0=float(var[0]),
        var1=float(var[1]),
        var_floor=var_floor,
        n_iter=n_iter,
        log_likelihoods=tuple(history),
    )


def gmm2_posterior(model: Gmm2, v):
    """Posterior probability of component 0 at ``v`` (scalar or array)."""
    arr = np.asarray(v, dtype=float)
    log_joint = _log_joint(arr.ravel(), model.weights, model.means, model.variances)
    post = np.exp(log_joint[:, 0] - logsumexp(log_joint, axis=1))
    post = np.clip(post, 0.0, 1.0)
    if arr.ndim == 0:
        return float(post[0])
    return post.reshape(arr.shape)


def top_eigvec(gram, max_iters: int = 10_000, rtol: float = 1e-8):
    """Dominant eigenpair of a symmetric PSD matrix by power iteration.

    Returns ``(u, lam)`` with ``||u|| = 1`` and the sign chosen so the
    largest-magnitude entry of ``u`` is positive. Iteration stops once
    ``||G u - lam u|| <= rtol * lam``. If the iteration budget runs out
    first (nearly tied leading eigenvalues), the iterate is polished with
    Rayleigh quotient iteration; a return always meets the residual test.
    """
    g = np.asarray(gram, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    scale = np.max(np.abs(g)) if g.size else 0.0
    if scale == 0.0:
        raise ZeroSpectrumError("zero matrix has no dominant direction")
    if np.max(np.abs(g - g.T)) > 1e-9 * max(1.0, scale):
        raise ValueError("matrix is not symmetric")
    g = 0.5 * (g + g.T)
    n = g.shape[0]

    # start from the column with the largest diagonal entry
    u = g[:, int(np.argmax(np.diag(g)))].copy()
    if np.linalg.norm(u) == 0.0:
        u = np.ones(n)
    u /= np.linalg.norm(u)

    lam = 0.0
    converged = False
    for _ in range(max_iters):
        gu = g @ u
        lam = float(u @ gu)
        if lam <= 0.0:
            # start vector in the null space; restart along all-ones
            if np.allclose(u, np.ones(n) / np.sqrt(n)):
                raise ZeroSpectrumError("matrix has no positive eigenvalue")
            u = np.ones(n) / np.sqrt(n)
            continue
        if np.linalg.norm(gu - lam * u) <= rtol * lam:
            converged = True
            break
        u = gu / np.linalg.norm(gu)

    if not converged:
        u, lam = _rayleigh_polish(g, u, rtol)

    k = int(np.argmax(np.abs(u)))
    if u[k] < 0:
        u = -u
    return u, float(lam)


def _rayleigh_polish(g, u, rtol, max_steps=50):
    n = g.shape[0]
    eye = np.eye(n)
    lam = float(u @ g @ u)
    for _ in range(max_steps):
        try:
            w = np.linalg.solve(g - lam * eye, u)
        except np.linalg.LinAlgError:
            break
        u = w / np.linalg.norm(w)
        lam = float(u @ g @ u)
        if np.linalg.norm(g @ u - lam * u) <= rtol * lam:
            return u, lam
    if lam > 0 and np.linalg.norm(g @ u - lam * u) <= rtol * lam:
        return u, lam
    raise ArithmeticError("power iteration did not reach the residual tolerance")


class TailCurve:
    """Empirical tail function q(z) = fraction of samples >= z."""

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("tail curve needs at least one sample")
        self.samples = s

    def __len__(self):
        return self.samples.size

    def __call__(self, z):
        return tail_fraction(self, z)


def tail_fraction(curve: TailCurve, z):
    """``(#samples >= z) / n``; accepts scalar or array ``z``."""
    s = curve.samples
    counts = s.size - np.searchsorted(s, z, side="left")
    out = counts / s.size
    if np.ndim(out) == 0:
        return float(out)
    return out
