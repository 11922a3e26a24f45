"""Kalman filtering, Riccati recursions and quantized linear filters.

The quantized linear filters (SOI-KF for the sign quantizer, MLQ-KF for
multi-level schemes) share the classical update shape but replace the
innovation by a per-label gain ``L(q)`` and scale the covariance
contraction by ``lam``::

    xhat(n|n) = xhat(n|n-1) + L(q) * s * P h' / s**2,  s**2 = h P h' + r
    P(n|n)    = P - lam * P h' h P / s**2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import interval_prob, truncated_std_mean
from .model import StateSpaceModel
from .quantizer import QuantizationScheme

__all__ = [
    "KalmanState",
    "LambdaScheme",
    "kf_time_update",
    "kf_measurement_update",
    "riccati_step",
    "modified_riccati_step",
    "riccati_sequence",
    "lambda_scheme_of",
    "quantized_measurement_update",
    "quantized_linear_filter_step",
]

PREDICTED = "predicted"
FILTERED = "filtered"


def _sym(P):
    return 0.5 * (P + P.T)


@dataclass(frozen=True, eq=False)
class KalmanState:
    xhat: np.ndarray
    P: np.ndarray
    phase: str = PREDICTED

    @classmethod
    def prior(cls, model: StateSpaceModel) -> KalmanState:
        return cls(model.m0.copy(), model.P0.copy(), PREDICTED)


@dataclass(frozen=True, eq=False)
class LambdaScheme:
    """Gains of a quantized linear filter.

    ``gains[i]`` multiplies the innovation standard deviation when label
    ``i`` is received; ``lam`` scales the covariance contraction.
    """

    lam: float
    gains: np.ndarray
    scheme: QuantizationScheme

    def gain(self, label: int) -> float:
        if not 0 <= label < len(self.gains):
            raise ValueError(f"unknown label {label}")
        return float(self.gains[label])


def kf_time_update(state: KalmanState, A, W) -> KalmanState:
    if state.phase != FILTERED:
        raise ValueError("time update expects a filtered state")
    A = np.asarray(A, dtype=float)
    if A.shape != state.P.shape:
        raise ValueError(f"A has shape {A.shape}, state has dimension {state.P.shape[0]}")
    return KalmanState(A @ state.xhat, _sym(A @ state.P @ A.T + W), PREDICTED)


def _innovation_var(P, h, r):
    s2 = float(h @ P @ h + r)
    if not s2 > 0.0:
        raise FloatingPointError(f"innovation variance {s2} is not positive")
    return s2


def kf_measurement_update(state: KalmanState, h, sigma_v2: float, y: float,
                          joseph: bool = False) -> KalmanState:
    """Classical update with the scalar measurement ``y``."""
    if state.phase != PREDICTED:
        raise ValueError("measurement update expects a predicted state")
    h = np.asarray(h, dtype=float)
    P = state.P
    s2 = _innovation_var(P, h, sigma_v2)
    Ph = P @ h
    K = Ph / s2
    xhat = state.xhat + K * (y - h @ state.xhat)
    if joseph:
        I_KH = np.eye(len(h)) - np.outer(K, h)
        P_new = I_KH @ P @ I_KH.T + sigma_v2 * np.outer(K, K)
    else:
        P_new = P - np.outer(Ph, Ph) / s2
    return KalmanState(xhat, _sym(P_new), FILTERED)


def modified_riccati_update(P, h, sigma_v2, lam):
    """P(n|n) from P(n|n-1) with the contraction scaled by ``lam``."""
    s2 = _innovation_var(P, h, sigma_v2)
    Ph = P @ h
    return _sym(P - lam * np.outer(Ph, Ph) / s2)


def modified_riccati_step(P, A, W, h, sigma_v2, lam) -> np.ndarray:
    """One step P(n|n-1) -> P(n+1|n) of the modified Riccati recursion."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    Pf = modified_riccati_update(P, h, sigma_v2, lam)
    return _sym(A @ Pf @ A.T + W)


def riccati_step(P, A, W, h, sigma_v2) -> np.ndarray:
    """Full-information Riccati step (``lam = 1``)."""
    return modified_riccati_step(P, A, W, h, sigma_v2, 1.0)


def riccati_sequence(model: StateSpaceModel, horizon: int, lam: float = 1.0):
    """Predicted and filtered covariances for n = 0..horizon.

    Returns ``(predicted, filtered)``, each of shape (T+1, d, d), where
    ``predicted[n] = P(n|n-1)`` and ``filtered[n] = P(n|n)``.
    """
    d = model.dim
    pred = np.empty((horizon + 1, d, d))
    filt = np.empty((horizon + 1, d, d))
    P = model.P0.copy()
    for n, A, h, W, r in model.steps(horizon):
        pred[n] = P
        filt[n] = modified_riccati_update(P, h, r, lam)
        P = _sym(A @ filt[n] @ A.T + W)
    return pred, filt


def lambda_scheme_of(scheme: QuantizationScheme) -> LambdaScheme:
    """Per-label gains and ``lam`` for a threshold quantizer.

    The gain of a bin is the conditional mean of a standard normal given
    the bin, and ``lam`` is the mean square of that conditional mean, i.e.
    the fraction of innovation variance the label explains.  For the sign
    quantizer this gives ``lam = 2/pi``.
    """
    edges = scheme.edges
    lo, hi = edges[:-1], edges[1:]
    gains = np.atleast_1d(truncated_std_mean(lo, hi))
    probs = np.atleast_1d(interval_prob(lo, hi))
    lam = float(np.sum(gains**2 * probs))
    return LambdaScheme(lam, gains, scheme)


def quantized_measurement_update(state: KalmanState, h, sigma_v2, lscheme: LambdaScheme,
                                 label: int) -> KalmanState:
    if state.phase != PREDICTED:
        raise ValueError("measurement update expects a predicted state")
    h = np.asarray(h, dtype=float)
    s2 = _innovation_var(state.P, h, sigma_v2)
    Ph = state.P @ h
    xhat = state.xhat + lscheme.gain(label) * Ph / np.sqrt(s2)
    P = _sym(state.P - lscheme.lam * np.outer(Ph, Ph) / s2)
    return KalmanState(xhat, P, FILTERED)


def quantized_linear_filter_step(state: KalmanState, A, W, h, sigma_v2,
                                 lscheme: LambdaScheme, label: int):
    """Measurement update with a received label, then the time update.

    Returns ``(filtered, predicted)``.
    """
    filtered = quantized_measurement_update(state, h, sigma_v2, lscheme, label)
    return filtered, kf_time_update(filtered, A, W)
