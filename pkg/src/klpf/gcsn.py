"""Generalized closed skew-normal (GCSN) distributions.

A GCSN_{k,n}(mu, Sigma, D, s1, s2, Delta) has density::

    N_k(x; mu, Sigma) * Phi_n(s1, s2; D (x - mu), Delta) / Phi_n(s1, s2; 0, R)

with ``R = Delta + D Sigma D'`` and ``Phi_n(s1, s2; m, C)`` the probability
that ``N_n(m, C)`` falls in the box ``(s1, s2)``.  If ``U ~ N_n(0, R)``
truncated to the box and ``V ~ N_k(0, Sigma - S R S')`` independent, with
``S = Sigma D' R^{-1}``, then ``mu + V + S U`` has this law.

The state of a linear Gaussian model conditioned on quantized innovations
is GCSN; :class:`CondDensityState` carries its parameters through time and
measurement updates.  The parameters grow with every measurement, so this
is a reference tool for short horizons; the particle filters are the
practical route.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .model import StateSpaceModel, _as_rng, psd_factor
from .mvn import (
    DEFAULT_PATHS,
    LowAcceptanceError,
    MvnBox,
    box_probability,
    rejection_sample_truncated,
    sequential_sample,
)

__all__ = [
    "Gcsn",
    "DegenerateDistributionError",
    "gcsn_pdf",
    "gcsn_mgf",
    "gcsn_sample",
    "gcsn_linear_map",
    "gcsn_add_gaussian",
    "gcsn_affine_dynamics",
    "CondDensityState",
    "CondEstimate",
    "cond_density_initial",
    "cond_density_time_update",
    "cond_density_measurement_update",
    "cond_density_estimate",
    "MAX_MEASUREMENTS",
]

MAX_MEASUREMENTS = 64
REJECTION_FLOOR = 1e-3  # below this box probability, sample sequentially


class DegenerateDistributionError(ValueError):
    pass


def _sym(M):
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class Gcsn:
    mu: np.ndarray
    Sigma: np.ndarray
    D: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    Delta: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        k = mu.size
        Sigma = np.asarray(self.Sigma, dtype=float).reshape(k, k)
        D = np.asarray(self.D, dtype=float).reshape(-1, k)
        n = D.shape[0]
        s1 = np.asarray(self.s1, dtype=float).reshape(n)
        s2 = np.asarray(self.s2, dtype=float).reshape(n)
        Delta = np.asarray(self.Delta, dtype=float).reshape(n, n)
        if np.any(~(s1 < s2)):
            raise ValueError("bounds require s1 < s2 in every component")
        for name, val in (("mu", mu), ("Sigma", Sigma), ("D", D), ("Delta", Delta)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)

    @property
    def k(self) -> int:
        return self.mu.size

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def R(self) -> np.ndarray:
        """Covariance ``Delta + D Sigma D'`` of the latent truncated vector."""
        return _sym(self.Delta + self.D @ self.Sigma @ self.D.T)

    @property
    def skew(self) -> np.ndarray:
        """``S = Sigma D' R^{-1}``, the loading of the truncated vector."""
        if self.n == 0:
            return np.zeros((self.k, 0))
        return linalg.solve(self.R, self.D @ self.Sigma, assume_a="sym").T

    @classmethod
    def gaussian(cls, mu, Sigma) -> Gcsn:
        k = np.atleast_1d(mu).size
        return cls(mu, Sigma, np.zeros((0, k)), [], [], np.zeros((0, 0)))


def _phi(mean, cov, s1, s2, n_samples, rng):
    if len(mean) == 0:
        return 1.0, 0.0
    return box_probability(MvnBox(mean, cov, s1, s2), n_samples, rng)


def _ratio(num, den):
    (a, sa), (b, sb) = num, den
    if not b > 0.0:
        raise DegenerateDistributionError("normalising box probability is zero")
    r = a / b
    se = abs(r) * np.sqrt((sa / a) ** 2 + (sb / b) ** 2) if a > 0 else sa / b
    return r, se


def gcsn_pdf(dist: Gcsn, x, n_samples: int = DEFAULT_PATHS, rng=None) -> tuple[float, float]:
    """Density at ``x`` and its Monte-Carlo standard error.

    Both box probabilities use the same seed so their errors are correlated
    rather than compounding; the reported error treats them as independent.
    """
    x = np.asarray(x, dtype=float)
    seed = _as_rng(rng).integers(2**63)
    g = linalg.cho_factor(dist.Sigma, lower=True)
    dx = x - dist.mu
    logdet = 2.0 * np.sum(np.log(np.diag(g[0])))
    dens = np.exp(-0.5 * (dx @ linalg.cho_solve(g, dx) + logdet + dist.k * np.log(2 * np.pi)))
    num = _phi(dist.D @ dx, dist.Delta, dist.s1, dist.s2, n_samples, seed)
    den = _phi(np.zeros(dist.n), dist.R, dist.s1, dist.s2, n_samples, seed)
    r, se = _ratio(num, den)
    return float(dens * r), float(dens * se)


def gcsn_mgf(dist: Gcsn, t, n_samples: int = DEFAULT_PATHS, rng=None) -> tuple[float, float]:
    """Moment generating function ``E exp(t' X)`` and its standard error."""
    t = np.asarray(t, dtype=float).reshape(dist.k)
    seed = _as_rng(rng).integers(2**63)
    R = dist.R
    num = _phi(dist.D @ dist.Sigma @ t, R, dist.s1, dist.s2, n_samples, seed)
    den = _phi(np.zeros(dist.n), R, dist.s1, dist.s2, n_samples, seed)
    r, se = _ratio(num, den)
    g = np.exp(dist.mu @ t + 0.5 * t @ dist.Sigma @ t)
    return float(g * r), float(g * se)


def _truncated_latent(dist: Gcsn, count: int, rng):
    """Draws of U ~ N(0, R) restricted to the box, plus log weights.

    Rejection sampling (equal weights) when the box has probability at
    least ``REJECTION_FLOOR``; otherwise sequential conditioning with
    importance weights.
    """
    box = MvnBox(np.zeros(dist.n), dist.R, dist.s1, dist.s2)
    p, _ = box_probability(box, 4096, rng)
    if p >= REJECTION_FLOOR:
        try:
            return rejection_sample_truncated(box, count, rng), np.zeros(count)
        except LowAcceptanceError:
            pass
    if p == 0.0:
        raise LowAcceptanceError(0.0, 4096)
    return sequential_sample(box, count, rng)


def gcsn_sample(dist: Gcsn, rng, size: int | None = None) -> np.ndarray:
    """Draws through the stochastic representation ``mu + V + S U``.

    Weighted sequential draws of ``U`` are turned into an unweighted sample
    by multinomial resampling.  Returns shape (k,) when ``size`` is None,
    else (size, k).
    """
    rng = _as_rng(rng)
    count = 1 if size is None else int(size)
    k = dist.k
    if dist.n == 0:
        out = dist.mu + rng.standard_normal((count, k)) @ psd_factor(dist.Sigma).T
    else:
        U, logw = _truncated_latent(dist, count, rng)
        if np.any(logw != 0.0):
            w = np.exp(logw - logw.max())
            U = U[rng.choice(count, count, p=w / w.sum())]
        S = dist.skew
        Vcov = _sym(dist.Sigma - S @ dist.R @ S.T)
        V = rng.standard_normal((count, k)) @ psd_factor(Vcov).T
        out = dist.mu + V + U @ S.T
    return out[0] if size is None else out


def _inv(M, what):
    try:
        return linalg.inv(M)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"{what} is singular") from exc


def gcsn_linear_map(dist: Gcsn, A) -> Gcsn:
    """Law of ``A X`` for ``A`` of full row rank or full column rank."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    p, k = A.shape
    if k != dist.k:
        raise ValueError(f"A has {k} columns, distribution has dimension {dist.k}")
    rank = np.linalg.matrix_rank(A)
    mu_A = A @ dist.mu
    Sig_A = _sym(A @ dist.Sigma @ A.T)
    if rank == p:
        D_A = dist.D @ dist.Sigma @ A.T @ _inv(Sig_A, "A Sigma A'")
        Delta_A = _sym(dist.R - D_A @ Sig_A @ D_A.T)
    elif rank == k:
        D_A = dist.D @ np.linalg.solve(A.T @ A, A.T)
        Delta_A = dist.Delta
    else:
        raise ValueError(f"A ({p}x{k}) is rank deficient (rank {rank})")
    return Gcsn(mu_A, Sig_A, D_A, dist.s1, dist.s2, Delta_A)


def gcsn_add_gaussian(dist: Gcsn, mean, cov) -> Gcsn:
    """Law of ``X + W`` with ``W ~ N(mean, cov)`` independent of ``X``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if mean.shape != (dist.k,) or cov.shape != (dist.k, dist.k):
        raise ValueError(f"noise dimensions {mean.shape}, {cov.shape} do not match k={dist.k}")
    Sig = _sym(dist.Sigma + cov)
    D_p = dist.D @ dist.Sigma @ _inv(Sig, "Sigma + noise covariance")
    Delta_p = _sym(dist.R - D_p @ Sig @ D_p.T)
    return Gcsn(dist.mu + mean, Sig, D_p, dist.s1, dist.s2, Delta_p)


def gcsn_affine_dynamics(dist: Gcsn, A, mean, cov) -> Gcsn:
    """Law of ``A X + W``, ``W ~ N(mean, cov)`` independent of ``X``.

    Only the output covariance needs to be invertible, so singular ``A``
    is fine as long as the noise fills the gap.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    p = A.shape[0]
    if A.shape[1] != dist.k or mean.shape != (p,) or cov.shape != (p, p):
        raise ValueError("A, noise mean and noise covariance have mismatched dimensions")
    Sig = _sym(A @ dist.Sigma @ A.T + cov)
    D_Y = dist.D @ dist.Sigma @ A.T @ _inv(Sig, "A Sigma A' + Q")
    Delta_Y = _sym(dist.R - D_Y @ Sig @ D_Y.T)
    return Gcsn(A @ dist.mu + mean, Sig, D_Y, dist.s1, dist.s2, Delta_Y)


# ------------------------------------------------------ conditional state law

@dataclass(frozen=True, eq=False)
class CondDensityState:
    """Law of ``x(t)`` given the quantized innovations received so far.

    ``dist.mu`` and ``dist.Sigma`` are the unconditional mean and covariance
    of the state.  The bounds in ``dist`` are centered (the measurement
    box minus the unconditional output mean) so that ``dist.R`` equals the
    covariance of the measurement vector.  ``filtered`` says whether the
    measurement at time ``t`` has been absorbed.
    """

    dist: Gcsn
    t: int
    filtered: bool
    model: StateSpaceModel

    @property
    def R(self) -> np.ndarray:
        return self.dist.R

    @property
    def measurements(self) -> int:
        return self.dist.n


def cond_density_initial(model: StateSpaceModel) -> CondDensityState:
    """Prior law of ``x(0)`` before any label is received."""
    return CondDensityState(Gcsn.gaussian(model.m0, model.P0), 0, False, model)


def cond_density_time_update(state: CondDensityState) -> CondDensityState:
    """``x(t)|q_t`` to ``x(t+1)|q_t``."""
    if not state.filtered:
        raise ValueError("time update expects a filtered state")
    m = state.model
    t = state.t
    d = gcsn_affine_dynamics(state.dist, m.transition(t), np.zeros(m.dim), m.process_cov(t))
    return CondDensityState(d, t + 1, False, m)


def cond_density_measurement_update(state: CondDensityState, s1: float, s2: float) -> CondDensityState:
    """Absorb the label received at time ``t``, given as its measurement box."""
    if state.filtered:
        raise ValueError("measurement update expects a predicted state")
    if state.measurements >= MAX_MEASUREMENTS:
        raise ValueError(f"conditional density is capped at {MAX_MEASUREMENTS} measurements")
    m = state.model
    h, r = m.observation(state.t), m.noise_var(state.t)
    d = state.dist
    center = h @ d.mu
    n = d.n
    Delta = np.zeros((n + 1, n + 1))
    Delta[:n, :n] = d.Delta
    Delta[n, n] = r
    new = replace(
        d,
        D=np.vstack([d.D, h]),
        s1=np.append(d.s1, s1 - center),
        s2=np.append(d.s2, s2 - center),
        Delta=Delta,
    )
    return CondDensityState(new, state.t, True, m)


class CondEstimate(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    se: np.ndarray  # standard error of each mean component
    kalman_cov: np.ndarray  # covariance of the full-information Kalman filter


def cond_density_estimate(state: CondDensityState, n_samples: int = 100_000, rng=None) -> CondEstimate:
    """Conditional mean and covariance from weighted draws of the latent vector.

    With ``S`` the skew loading, the state is ``mu + V + S U``; ``V`` is
    Gaussian with the Kalman covariance and independent of ``U``, so only
    ``U`` needs sampling::

        mean = mu + S E[U],    cov = P_kal + S Cov(U) S'
    """
    rng = _as_rng(rng)
    d = state.dist
    S = d.skew
    P_kal = _sym(d.Sigma - S @ d.R @ S.T)
    if d.n == 0:
        return CondEstimate(d.mu.copy(), d.Sigma.copy(), np.zeros(d.k), P_kal)
    U, logw = _truncated_latent(d, n_samples, rng)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mu_U = w @ U
    dev = U - mu_U
    cov_U = (w[:, None] * dev).T @ dev
    ess = 1.0 / np.sum(w**2)
    X = dev @ S.T
    # weighted-mean variance: sum w_i^2 (x_i - mean)^2
    se = np.sqrt(np.sum((w**2)[:, None] * X**2, axis=0))
    if not np.all(np.isfinite(se)) or ess < 2:
        raise LowAcceptanceError(ess / n_samples, n_samples)
    return CondEstimate(d.mu + S @ mu_U, _sym(P_kal + S @ cov_U @ S.T), se, P_kal)
