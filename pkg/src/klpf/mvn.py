"""Multivariate normal box probabilities and truncated sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gaussian import interval_prob, log_interval_prob, sample_truncated_normal

__all__ = [
    "MvnBox",
    "LowAcceptanceError",
    "box_probability",
    "conditional_split",
    "sequential_sample",
    "rejection_sample_truncated",
    "clamp_psd",
    "semidefinite_cholesky",
]

DEFAULT_PATHS = 2**14


class LowAcceptanceError(RuntimeError):
    def __init__(self, rate, draws):
        self.rate = rate
        self.draws = draws
        super().__init__(f"acceptance rate {rate:.3g} after {draws} draws is below the guard")


@dataclass(frozen=True, eq=False)
class MvnBox:
    """N(mean, cov) together with the box ``lower < X < upper``."""

    mean: np.ndarray
    cov: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        n = mean.size
        cov = np.asarray(self.cov, dtype=float).reshape(n, n)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(~(lower < upper)):
            raise ValueError("box requires lower < upper in every coordinate")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.mean.size

    def permuted(self, order) -> MvnBox:
        order = np.asarray(order)
        return MvnBox(
            self.mean[order], self.cov[np.ix_(order, order)],
            self.lower[order], self.upper[order],
        )


def clamp_psd(cov: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Symmetrise and lift eigenvalues below ``rel * trace`` to zero.

    Raises ``ValueError`` for matrices that are clearly indefinite.
    """
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    tol = rel * max(np.trace(cov), np.finfo(float).tiny)
    if w.size and w.min() < -1e-8 * max(abs(w).max(), 1.0):
        raise ValueError(f"covariance is not PSD (min eigenvalue {w.min():.3g})")
    if w.size and w.min() < tol:
        w = np.where(w < tol, 0.0, w)
        cov = (V * w) @ V.T
        cov = 0.5 * (cov + cov.T)
    return cov


def semidefinite_cholesky(cov: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T = cov`` for PSD ``cov``.

    Zero pivots (relative to the trace) produce zero columns instead of a
    failure, so degenerate directions are carried as exact linear
    relations.
    """
    n = cov.shape[0]
    L = np.zeros_like(cov)
    floor = tol * max(np.trace(cov), np.finfo(float).tiny)
    for j in range(n):
        piv = cov[j, j] - L[j, :j] @ L[j, :j]
        if piv <= floor:
            continue
        L[j, j] = np.sqrt(piv)
        L[j + 1:, j] = (cov[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _genz_order(box: MvnBox) -> np.ndarray:
    # tightest marginal first keeps the estimator's variance down
    sd = np.sqrt(np.clip(np.diag(box.cov), 1e-300, None))
    p = interval_prob(box.lower, box.upper, box.mean, sd)
    return np.argsort(p, kind="stable")


def sequential_sample(box: MvnBox, count: int, rng, reorder: bool = True):
    """Sequential-conditioning draws through the box.

    Coordinate ``j`` is drawn from its scalar truncated conditional given
    the earlier coordinates.  Returns ``(samples, log_weights)`` where the
    weight of a path is the product of the per-coordinate interval
    probabilities; ``mean(exp(log_weights))`` is an unbiased estimate of the
    box probability and the weighted samples target the truncated
    distribution.
    """
    n = box.dim
    order = _genz_order(box) if reorder else np.arange(n)
    b = box.permuted(order)
    L = semidefinite_cholesky(clamp_psd(b.cov))
    lo = b.lower - b.mean
    hi = b.upper - b.mean
    z = np.zeros((count, n))
    x = np.zeros((count, n))
    logw = np.zeros(count)
    alive = np.ones(count, dtype=bool)
    for j in range(n):
        shift = z[:, :j] @ L[j, :j]
        if L[j, j] == 0.0:
            inside = (shift > lo[j]) & (shift < hi[j])
            logw = np.where(inside, logw, -np.inf)
            alive &= inside
            x[:, j] = shift
            continue
        a = (lo[j] - shift) / L[j, j]
        c = (hi[j] - shift) / L[j, j]
        lp = log_interval_prob(a, c)
        logw = logw + lp
        ok = alive & np.isfinite(lp)
        zz = np.zeros(count)
        if np.any(ok):
            zz[ok] = sample_truncated_normal(a[ok], c[ok], 0.0, 1.0, rng.random(ok.sum()))
        z[:, j] = zz
        x[:, j] = shift + L[j, j] * zz
        alive = ok
    samples = np.empty_like(x)
    samples[:, order] = x + b.mean
    return samples, logw


def box_probability(box: MvnBox, n_samples: int = DEFAULT_PATHS, rng=None) -> tuple[float, float]:
    """Estimate P(lower < X < upper) and its Monte-Carlo standard error.

    One-dimensional boxes and the full space are evaluated exactly (zero
    standard error); otherwise the sequential-conditioning estimator is
    used.
    """
    finite = np.isfinite(box.lower) | np.isfinite(box.upper)
    if not finite.any():
        return 1.0, 0.0
    if finite.sum() == 1:
        # the unconstrained coordinates marginalise out exactly
        j = int(np.flatnonzero(finite)[0])
        p = interval_prob(box.lower[j], box.upper[j], box.mean[j], np.sqrt(box.cov[j, j]))
        return float(p), 0.0
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = np.flatnonzero(finite)
    sub = box.permuted(keep)
    _, logw = sequential_sample(sub, n_samples, rng)
    w = np.exp(logw)
    p = float(w.mean())
    se = float(w.std(ddof=1) / np.sqrt(n_samples))
    return p, se


def conditional_split(cov: np.ndarray, history, mean=None):
    """Conditional law of the last coordinate given the others.

    ``history`` holds observed values of the first ``n-1`` coordinates,
    either a single vector or a stack of shape (N, n-1).  Returns
    ``(cond_mean, cond_var)``; ``cond_mean`` has the batch shape of
    ``history``.  A singular leading block falls back to the pseudo-inverse.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
    history = np.asarray(history, dtype=float)
    if n == 1:
        return (np.full(history.shape[:-1], mean[0]) if history.ndim > 1 else float(mean[0])), float(cov[0, 0])
    S11 = cov[:-1, :-1]
    s12 = cov[:-1, -1]
    try:
        coef = linalg.solve(S11, s12, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        coef = np.linalg.pinv(S11) @ s12
    cond_var = float(max(cov[-1, -1] - s12 @ coef, 0.0))
    cond_mean = mean[-1] + (history - mean[:-1]) @ coef
    return cond_mean, cond_var


def rejection_sample_truncated(
    box: MvnBox,
    count: int,
    rng,
    min_acceptance: float = 1e-4,
    batch: int | None = None,
    max_draws: int | None = None,
) -> np.ndarray:
    """Exact truncated-MVN draws by keeping in-box raw MVN samples.

    Raises :class:`LowAcceptanceError` when, after a pilot batch, the
    acceptance rate falls under ``min_acceptance`` or when ``max_draws`` is
    exhausted.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    L = semidefinite_cholesky(clamp_psd(box.cov))
    n = box.dim
    batch = batch or max(4 * count, 10_000)
    max_draws = max_draws or max(int(50 * count / min_acceptance), batch)
    kept = []
    have = 0
    drawn = 0
    accepted = 0
    while have < count:
        x = box.mean + rng.standard_normal((batch, n)) @ L.T
        ok = np.all((x > box.lower) & (x < box.upper), axis=1)
        drawn += batch
        accepted += int(ok.sum())
        kept.append(x[ok])
        have += int(ok.sum())
        rate = accepted / drawn
        if rate < min_acceptance or (drawn >= max_draws and have < count):
            raise LowAcceptanceError(rate, drawn)
        if have < count:
            # size the next batch from the observed rate
            batch = int(min(max(1.2 * (count - have) / max(rate, 1e-12), 1000), 2_000_000))
    return np.concatenate(kept)[:count]
