"""Linear-Gaussian state-space models with a scalar measurement.

    x(n+1) = A(n) x(n) + w(n),   w(n) ~ N(0, W(n))
    y(n)   = h(n) x(n) + v(n),   v(n) ~ N(0, sigma_v2(n))
    x(0)   ~ N(m0, P0)

Any of ``A``, ``h``, ``W``, ``sigma_v2`` may be given as a sequence indexed
by time (leading axis); indices past the end reuse the last entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "StateSpaceModel",
    "Trajectory",
    "ModelValidationError",
    "validate_model",
    "simulate",
    "simulate_batch",
    "psd_factor",
    "JointMoments",
    "joint_moments",
]

SYM_TOL = 1e-10
PSD_TOL = 1e-10

# substream roles
INITIAL, PROCESS, MEASUREMENT = 0, 1, 2


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    ``key`` extends ``numpy.random.SeedSequence.spawn_key`` so that
    ``RngStream(seed, (trial, role))`` streams never overlap for distinct
    keys.
    """

    seed: int
    key: tuple = ()

    def child(self, *key) -> RngStream:
        return RngStream(self.seed, self.key + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.default_rng(ss)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def _at(seq: np.ndarray, n: int, base_ndim: int) -> np.ndarray:
    if seq.ndim == base_ndim:
        return seq
    return seq[min(n, seq.shape[0] - 1)]


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    A: np.ndarray
    h: np.ndarray
    W: np.ndarray
    sigma_v2: np.ndarray
    P0: np.ndarray
    m0: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim < 2:
            A = A.reshape(1, 1)
        d = A.shape[-1]
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if h.ndim == 2 and h.shape[0] == 1:
            # a 1 x d measurement matrix
            h = h[0]
        W = np.asarray(self.W, dtype=float)
        if W.ndim < 2:
            W = W.reshape(1, 1)
        P0 = np.asarray(self.P0, dtype=float).reshape(d, d)
        m0 = np.zeros(d) if self.m0 is None else np.asarray(self.m0, dtype=float).reshape(d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "sigma_v2", np.asarray(self.sigma_v2, dtype=float))
        object.__setattr__(self, "P0", P0)
        object.__setattr__(self, "m0", m0)

    @property
    def dim(self) -> int:
        return self.A.shape[-1]

    @property
    def time_invariant(self) -> bool:
        return (
            self.A.ndim == 2 and self.h.ndim == 1 and self.W.ndim == 2
            and self.sigma_v2.ndim == 0
        )

    def transition(self, n: int) -> np.ndarray:
        return _at(self.A, n, 2)

    def observation(self, n: int) -> np.ndarray:
        return _at(self.h, n, 1)

    def process_cov(self, n: int) -> np.ndarray:
        return _at(self.W, n, 2)

    def noise_var(self, n: int) -> float:
        return float(_at(self.sigma_v2, n, 0))

    def steps(self, horizon: int):
        """Yield ``(n, A, h, W, r)`` for n = 0..horizon."""
        for n in range(horizon + 1):
            yield n, self.transition(n), self.observation(n), self.process_cov(n), self.noise_var(n)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T+1, d)
    measurements: np.ndarray  # (T+1,)

    @property
    def horizon(self) -> int:
        return len(self.measurements) - 1


class ModelValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _psd_violations(name, M):
    out = []
    mats = M if M.ndim == 3 else M[None]
    for k, m in enumerate(mats):
        label = name if M.ndim == 2 else f"{name}[{k}]"
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > SYM_TOL * scale:
            out.append(f"{label} not symmetric")
            continue
        ev = np.linalg.eigvalsh(m)
        if ev.min() < -PSD_TOL * max(np.trace(m), 1.0):
            out.append(f"{label} not PSD (min eigenvalue {ev.min():.3g})")
    return out


def validate_model(model: StateSpaceModel) -> list[str]:
    """Return a list of invariant violations; empty if the model is valid."""
    d = model.dim
    problems = []
    if model.A.shape[-2:] != (d, d):
        problems.append("A not square")
    if model.h.shape[-1] != d:
        problems.append(f"h has length {model.h.shape[-1]}, expected {d}")
    if model.W.shape[-2:] != (d, d):
        problems.append(f"W has shape {model.W.shape[-2:]}, expected {(d, d)}")
    else:
        problems += _psd_violations("W", model.W)
    problems += _psd_violations("P0", model.P0)
    r = np.atleast_1d(model.sigma_v2)
    if np.any(~(r > 0.0)):
        problems.append("measurement noise not positive")
    return problems


def psd_factor(M: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == M`` for symmetric PSD ``M``.

    Small negative eigenvalues from round-off are clamped to zero, so
    singular matrices (e.g. rank-one process noise) are fine.
    """
    M = 0.5 * (M + M.T)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        w = np.clip(w, 0.0, None)
        return V * np.sqrt(w)


def simulate_batch(model: StateSpaceModel, horizon: int, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``count`` independent trajectories.

    Returns ``states`` of shape (count, T+1, d) and ``measurements`` of
    shape (count, T+1).  Initial state, process noise and measurement noise
    are drawn from separate substreams of ``rng`` (an :class:`RngStream`
    or seed).
    """
    problems = validate_model(model)
    if problems:
        raise ModelValidationError(problems)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    g_init = stream.child(INITIAL).generator()
    g_proc = stream.child(PROCESS).generator()
    g_meas = stream.child(MEASUREMENT).generator()
    d = model.dim
    states = np.empty((count, horizon + 1, d))
    ys = np.empty((count, horizon + 1))
    x = model.m0 + g_init.standard_normal((count, d)) @ psd_factor(model.P0).T
    for n, A, h, W, r in model.steps(horizon):
        states[:, n] = x
        ys[:, n] = x @ h + np.sqrt(r) * g_meas.standard_normal(count)
        x = x @ A.T + g_proc.standard_normal((count, d)) @ psd_factor(W).T
    return states, ys


def simulate(model: StateSpaceModel, horizon: int, rng) -> Trajectory:
    """Simulate one trajectory x(0..T), y(0..T)."""
    states, ys = simulate_batch(model, horizon, 1, rng)
    return Trajectory(states[0], ys[0])


@dataclass(frozen=True, eq=False)
class JointMoments:
    """Unconditional first and second moments of (x(n), Y_n).

    ``Y_n = [y(0), ..., y(n)]``.
    """

    state_mean: np.ndarray  # E x(n), (d,)
    state_cov: np.ndarray  # ||x(n)||^2, (d, d)
    output_mean: np.ndarray  # E Y_n, (n+1,)
    output_cov: np.ndarray  # R_y(n), (n+1, n+1)
    cross_cov: np.ndarray  # <Y_n, x(n)>, (n+1, d)


def joint_moments(model: StateSpaceModel, n: int) -> JointMoments:
    """Moments of (x(n), Y_n) built from the state-covariance recursion."""
    m = model.m0.copy()
    S = model.P0.copy()
    C = np.zeros((0, model.dim))  # <Y_{k-1}, x(k)>
    Ry = np.zeros((0, 0))
    my = np.zeros(0)
    for k, A, h, W, r in model.steps(n):
        c = C @ h
        v = h @ S @ h + r
        Ry = np.block([[Ry, c[:, None]], [c[None, :], np.array([[v]])]])
        my = np.append(my, h @ m)
        C = np.vstack([C, h @ S])
        if k == n:
            break
        m = A @ m
        S = A @ S @ A.T + W
        C = C @ A.T
    return JointMoments(m, S, my, Ry, C)
