"""Filters driven by quantized innovations.

All filters follow the same fusion-center loop.  At time ``n`` the filter
publishes its predicted measurement ``yhat`` and an innovation scale
``std``; the sensor sends the label of ``(y(n) - yhat) / std``; the filter
turns the label back into the measurement-space interval ``(s1, s2)`` and
assimilates it.

* :class:`ParticleFilter` -- bootstrap particle filter over the state.
* :class:`TruncatedNormalParticleFilter` -- particles are whole measurement
  histories drawn from the truncated Gaussian of the measurement vector.
  Memory grows with time, so it is capped at ``MAX_HISTORY`` steps.
* :class:`KalmanLikeParticleFilter` -- each particle is the mean of a Kalman
  filter fed with pseudo-measurements drawn inside the received interval;
  the covariance is shared and follows the ordinary Riccati recursion.
* :class:`QuantizedKalmanFilter` -- SOI-KF / MLQ-KF linear filters.
* :class:`KalmanFilter` -- full-information reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .gaussian import log_interval_prob, truncated_normal_rvs
from .kalman import (
    KalmanState,
    kf_measurement_update,
    kf_time_update,
    lambda_scheme_of,
    modified_riccati_update,
    quantized_measurement_update,
)
from .model import StateSpaceModel, Trajectory, _as_rng, psd_factor
from .mvn import conditional_split
from .quantizer import QuantizationScheme, measurement_interval

__all__ = [
    "DegenerateWeightsError",
    "FilterOutput",
    "resample",
    "normalize_log_weights",
    "ParticleFilter",
    "TruncatedNormalParticleFilter",
    "KalmanLikeParticleFilter",
    "QuantizedKalmanFilter",
    "KalmanFilter",
    "FILTER_KINDS",
    "make_filter",
    "run_filter",
]

MAX_HISTORY = 64
SCALES = ("riccati", "full", "empirical")


class DegenerateWeightsError(FloatingPointError):
    pass


def normalize_log_weights(logw: np.ndarray, strict: bool = False):
    """Normalised weights from log weights.

    Returns ``(weights, degenerate)``.  When every weight underflows the
    weights fall back to uniform and ``degenerate`` is True, unless
    ``strict`` is set, in which case :class:`DegenerateWeightsError` is
    raised.
    """
    logw = np.asarray(logw, dtype=float)
    top = logw.max()
    if not np.isfinite(top):
        if strict:
            raise DegenerateWeightsError(f"all {logw.size} weights vanished")
        return np.full(logw.size, 1.0 / logw.size), True
    w = np.exp(logw - top)
    return w / w.sum(), False


def resample(weights, rng, method: str = "systematic") -> np.ndarray:
    """Indices drawn with probabilities proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0.0:
        raise DegenerateWeightsError("cannot resample all-zero weights")
    rng = _as_rng(rng)
    N = w.size
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    if method == "multinomial":
        u = rng.random(N)
    elif method == "systematic":
        u = (np.arange(N) + rng.random()) / N
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), N - 1)


@dataclass
class FilterOutput:
    """Per-step record of one filter run.

    ``predictions[n]`` is ``xhat(n+1|n) = A(n) xhat(n|n)``.  Linear filters
    also record their filtered covariances; particle filters record the
    effective sample size and whether the weights degenerated.
    """

    kind: str
    estimates: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray
    covariances: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.estimates) - 1


@dataclass
class _History:
    estimates: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    ess: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    covariances: list = field(default_factory=list)


class _Filter:
    """Shared fusion-center bookkeeping."""

    kind = "base"

    def __init__(self, model: StateSpaceModel, scheme: QuantizationScheme | None):
        self.model = model
        self.scheme = scheme
        self.n = 0
        self.xpred = model.m0.copy()
        self.history = _History()

    def innovation(self) -> tuple[float, float]:
        """Predicted measurement and innovation scale for the current step."""
        raise NotImplementedError

    def assimilate(self, lower: float, upper: float, **kw) -> np.ndarray:
        raise NotImplementedError

    def observe(self, y: float) -> np.ndarray:
        """Quantize ``y`` against this filter's own prediction and assimilate."""
        yhat, std = self.innovation()
        label = self.scheme.quantize((y - yhat) / std)
        lo, hi = measurement_interval(self.scheme.interval_of(label), yhat, std)
        return self.assimilate(lo, hi, label=label)

    def _record(self, est, lower, upper, label=-1, ess=np.nan, degenerate=False, cov=None):
        A = self.model.transition(self.n)
        self.xpred = A @ est
        h = self.history
        h.estimates.append(est)
        h.predictions.append(self.xpred)
        h.labels.append(label)
        h.lower.append(lower)
        h.upper.append(upper)
        h.ess.append(ess)
        h.degenerate.append(degenerate)
        if cov is not None:
            h.covariances.append(cov)
        self.n += 1

    def output(self) -> FilterOutput:
        h = self.history
        d = self.model.dim
        return FilterOutput(
            kind=self.kind,
            estimates=np.array(h.estimates).reshape(-1, d),
            predictions=np.array(h.predictions).reshape(-1, d),
            labels=np.array(h.labels, dtype=int),
            lower=np.array(h.lower, dtype=float),
            upper=np.array(h.upper, dtype=float),
            ess=np.array(h.ess, dtype=float),
            degenerate=np.array(h.degenerate, dtype=bool),
            covariances=np.array(h.covariances) if h.covariances else None,
        )


class _ScaleTracker:
    """Deterministic covariance sequence used to normalise innovations."""

    def __init__(self, model, lam):
        self.model = model
        self.lam = lam
        self.P = model.P0.copy()

    def std(self, n):
        h = self.model.observation(n)
        return float(np.sqrt(h @ self.P @ h + self.model.noise_var(n)))

    def advance(self, n):
        m = self.model
        Pf = modified_riccati_update(self.P, m.observation(n), m.noise_var(n), self.lam)
        A = m.transition(n)
        self.P = A @ Pf @ A.T + m.process_cov(n)


class _ParticleBase(_Filter):
    def __init__(self, model, scheme, n_particles, rng, resampling="systematic",
                 innovation_scale="riccati"):
        super().__init__(model, scheme)
        if n_particles < 1:
            raise ValueError("need at least one particle")
        if innovation_scale not in SCALES:
            raise ValueError(f"innovation_scale must be one of {SCALES}")
        self.N = int(n_particles)
        self.rng = _as_rng(rng)
        self.resampling = resampling
        self.innovation_scale = innovation_scale
        lam = 1.0
        if innovation_scale == "riccati" and scheme is not None:
            lam = lambda_scheme_of(scheme).lam
        self._scale = _ScaleTracker(model, lam)

    def _predictive_var(self) -> float:
        raise NotImplementedError

    def innovation(self):
        h = self.model.observation(self.n)
        yhat = float(h @ self.xpred)
        if self.innovation_scale == "empirical":
            std = float(np.sqrt(self._predictive_var()))
        else:
            std = self._scale.std(self.n)
        return yhat, std

    def _resample_indices(self, wbar, indices):
        if indices is not None:
            return np.asarray(indices)
        return resample(wbar, self.rng, self.resampling)

    def _finish(self, est, lower, upper, label, wbar, degenerate):
        self._scale.advance(self.n)
        self._record(est, lower, upper, label, ess=1.0 / np.sum(wbar**2), degenerate=degenerate)
        return est


class ParticleFilter(_ParticleBase):
    """Bootstrap particle filter over the state (Alg 1)."""

    kind = "alg1"

    def __init__(self, model, scheme, n_particles, rng, **kw):
        super().__init__(model, scheme, n_particles, rng, **kw)
        d = model.dim
        self.particles = model.m0 + self.rng.standard_normal((self.N, d)) @ psd_factor(model.P0).T

    def _predictive_var(self):
        h = self.model.observation(self.n)
        py = self.particles @ h
        return float(py.var() + self.model.noise_var(self.n))

    def assimilate(self, lower, upper, label=-1, indices=None):
        n = self.n
        m = self.model
        h, r, A, W = m.observation(n), m.noise_var(n), m.transition(n), m.process_cov(n)
        # weight = P(v(n) + h x^i in (s1, s2))
        logw = log_interval_prob(lower, upper, self.particles @ h, np.sqrt(r))
        wbar, degenerate = normalize_log_weights(logw)
        est = wbar @ self.particles
        idx = self._resample_indices(wbar, indices)
        noise = self.rng.standard_normal((self.N, m.dim)) @ psd_factor(W).T
        self.particles = self.particles[idx] @ A.T + noise
        return self._finish(est, lower, upper, label, wbar, degenerate)


class TruncatedNormalParticleFilter(_ParticleBase):
    """Particles are measurement histories ``y^i(0..n)`` (Alg 2).

    The joint covariance ``R_y(n)`` of the measurement vector grows by one
    row and column per step from the state-covariance recursion, and the
    estimate is the linear MMSE map ``R_xy R_y^{-1}`` applied to the
    weighted mean history.
    """

    kind = "alg2"

    def __init__(self, model, scheme, n_particles, rng, **kw):
        super().__init__(model, scheme, n_particles, rng, **kw)
        d = model.dim
        self.histories = np.zeros((self.N, 0))
        self._m = model.m0.copy()  # E x(n)
        self._S = model.P0.copy()  # ||x(n)||^2
        self._C = np.zeros((0, d))  # <Y_{n-1}, x(n)>
        self.output_cov = np.zeros((0, 0))  # R_y(n-1)
        self.output_mean = np.zeros(0)

    def _grown(self):
        n = self.n
        h, r = self.model.observation(n), self.model.noise_var(n)
        c = self._C @ h
        v = h @ self._S @ h + r
        Ry = np.block([[self.output_cov, c[:, None]], [c[None, :], np.array([[v]])]])
        my = np.append(self.output_mean, h @ self._m)
        return Ry, my

    def _conditional(self, Ry, my):
        if self.n == 0:
            return np.full(self.N, my[0]), float(Ry[0, 0])
        return conditional_split(Ry, self.histories, mean=my)

    def _predictive_var(self):
        cm, cv = self._conditional(*self._grown())
        return float(cv + np.var(cm))

    def conditional_moments(self):
        """Conditional mean (per particle) and variance of y(n) given the histories."""
        return self._conditional(*self._grown())

    def assimilate(self, lower, upper, label=-1, draws=None, indices=None):
        if self.n >= MAX_HISTORY:
            raise ValueError(f"Alg 2 is capped at {MAX_HISTORY} steps")
        m = self.model
        n = self.n
        h, A, W = m.observation(n), m.transition(n), m.process_cov(n)
        Ry, my = self._grown()
        cond_mean, cond_var = self._conditional(Ry, my)
        sd = np.sqrt(cond_var)
        self.last_log_weights = logw = log_interval_prob(lower, upper, cond_mean, sd)
        if draws is None:
            draws = truncated_normal_rvs(lower, upper, cond_mean, sd, self.rng)
        self.histories = np.column_stack([self.histories, draws])
        wbar, degenerate = normalize_log_weights(logw)
        Cyx = np.vstack([self._C, h @ self._S])  # <Y_n, x(n)>
        coef = linalg.solve(Ry, Cyx, assume_a="sym")
        est = self._m + (wbar @ self.histories - my) @ coef
        idx = self._resample_indices(wbar, indices)
        self.histories = self.histories[idx]
        self.output_cov, self.output_mean = Ry, my
        self._C = Cyx @ A.T
        self._m = A @ self._m
        self._S = A @ self._S @ A.T + W
        return self._finish(est, lower, upper, label, wbar, degenerate)


class KalmanLikeParticleFilter(_ParticleBase):
    """Kalman-like particle filter (Alg 3).

    ``means[i]`` is the predicted mean ``x^i(n|n-1)`` of particle ``i``;
    ``P`` is the shared predicted covariance ``P(n|n-1)``.
    """

    kind = "klpf"

    def __init__(self, model, scheme, n_particles, rng, **kw):
        super().__init__(model, scheme, n_particles, rng, **kw)
        self.means = np.tile(model.m0, (self.N, 1))
        self.P = model.P0.copy()
        self.filtered_means = None
        self.filtered_cov = None

    def _predictive_var(self):
        h = self.model.observation(self.n)
        return float(h @ self.P @ h + self.model.noise_var(self.n) + np.var(self.means @ h))

    def assimilate(self, lower, upper, label=-1, draws=None, indices=None):
        m = self.model
        n = self.n
        h, r, A, W = m.observation(n), m.noise_var(n), m.transition(n), m.process_cov(n)
        Ph = self.P @ h
        s2 = float(h @ Ph + r)  # R_{Delta n}
        pred_y = self.means @ h
        sd = np.sqrt(s2)
        self.last_log_weights = logw = log_interval_prob(lower, upper, pred_y, sd)
        if draws is None:
            draws = truncated_normal_rvs(lower, upper, pred_y, sd, self.rng)
        filt = self.means + np.outer(draws - pred_y, Ph / s2)
        Pf = self.P - np.outer(Ph, Ph) / s2
        Pf = 0.5 * (Pf + Pf.T)
        wbar, degenerate = normalize_log_weights(logw)
        est = wbar @ filt
        self.filtered_means, self.filtered_weights, self.filtered_cov = filt, wbar, Pf
        idx = self._resample_indices(wbar, indices)
        self.means = filt[idx] @ A.T
        P = A @ Pf @ A.T + W
        self.P = 0.5 * (P + P.T)
        return self._finish(est, lower, upper, label, wbar, degenerate)


class QuantizedKalmanFilter(_Filter):
    """SOI-KF (sign quantizer) or MLQ-KF (multi-level quantizer)."""

    def __init__(self, model, scheme):
        super().__init__(model, scheme)
        self.lscheme = lambda_scheme_of(scheme)
        self.kind = "soi_kf" if scheme.levels == 2 else "mlq_kf"
        self.state = KalmanState.prior(model)

    def innovation(self):
        h = self.model.observation(self.n)
        s2 = h @ self.state.P @ h + self.model.noise_var(self.n)
        return float(h @ self.state.xhat), float(np.sqrt(s2))

    def assimilate(self, lower, upper, label=None):
        if label is None:
            # recover the label from a point inside the normalised interval
            yhat, std = self.innovation()
            lo, hi = (lower - yhat) / std, (upper - yhat) / std
            if np.isfinite(lo) and np.isfinite(hi):
                probe = 0.5 * (lo + hi)
            else:
                probe = hi - 1.0 if np.isfinite(hi) else lo + 1.0
            label = self.scheme.quantize(probe)
        m = self.model
        n = self.n
        filt = quantized_measurement_update(self.state, m.observation(n), m.noise_var(n),
                                            self.lscheme, label)
        self.state = kf_time_update(filt, m.transition(n), m.process_cov(n))
        self._record(filt.xhat, lower, upper, label, cov=filt.P)
        return filt.xhat


class KalmanFilter(_Filter):
    """Full-information Kalman filter fed with the unquantized measurements."""

    kind = "full_kf"

    def __init__(self, model, scheme=None):
        super().__init__(model, scheme)
        self.state = KalmanState.prior(model)

    def innovation(self):
        h = self.model.observation(self.n)
        s2 = h @ self.state.P @ h + self.model.noise_var(self.n)
        return float(h @ self.state.xhat), float(np.sqrt(s2))

    def observe(self, y):
        m = self.model
        n = self.n
        filt = kf_measurement_update(self.state, m.observation(n), m.noise_var(n), y)
        self.state = kf_time_update(filt, m.transition(n), m.process_cov(n))
        self._record(filt.xhat, y, y, cov=filt.P)
        return filt.xhat


FILTER_KINDS = ("alg1", "alg2", "klpf", "soi_kf", "mlq_kf", "full_kf")


def make_filter(kind: str, model: StateSpaceModel, scheme: QuantizationScheme | None,
                n_particles: int | None = None, rng=None, **options) -> _Filter:
    if kind == "full_kf":
        return KalmanFilter(model, scheme)
    if kind in ("soi_kf", "mlq_kf"):
        return QuantizedKalmanFilter(model, scheme)
    cls = {
        "alg1": ParticleFilter,
        "alg2": TruncatedNormalParticleFilter,
        "klpf": KalmanLikeParticleFilter,
    }.get(kind)
    if cls is None:
        raise ValueError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")
    if n_particles is None:
        raise ValueError(f"{kind} needs a particle count")
    return cls(model, scheme, n_particles, rng, **options)


def run_filter(kind: str, model: StateSpaceModel, scheme: QuantizationScheme | None,
               trajectory: Trajectory, n_particles: int | None = None, rng=None,
               **options) -> FilterOutput:
    """Run one filter through the fusion-center loop on ``trajectory``.

    Every filter quantizes the true measurement against its own prediction.
    """
    flt = make_filter(kind, model, scheme, n_particles, rng, **options)
    for y in trajectory.measurements:
        flt.observe(float(y))
    return flt.output()
