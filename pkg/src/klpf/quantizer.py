"""Threshold quantizers acting on normalised innovations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import Interval

__all__ = [
    "QuantizationScheme",
    "measurement_interval",
    "sign_scheme",
    "two_bit_scheme",
    "uniform_scheme",
    "TWO_BIT_THRESHOLDS",
]

TWO_BIT_THRESHOLDS = (-1.2437, -0.3823, 0.3823, 1.2437)


@dataclass(frozen=True)
class QuantizationScheme:
    """K-level quantizer with thresholds ``r_1 < ... < r_{K-1}``.

    Bins are left-open and right-closed: label ``i`` (0-based) covers
    ``(r_i, r_{i+1}]`` with ``r_0 = -inf`` and ``r_K = +inf``.  An empty
    threshold list gives the uninformative one-bin quantizer.
    """

    thresholds: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        if not all(np.isfinite(t)):
            raise ValueError("thresholds must be finite")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    @property
    def levels(self) -> int:
        return len(self.thresholds) + 1

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.thresholds, [np.inf]])

    def quantize(self, x):
        """Label(s) of the normalised innovation(s) ``x``."""
        out = np.searchsorted(self.thresholds, x, side="left")
        return int(out) if np.ndim(out) == 0 else out

    def interval_of(self, label: int) -> Interval:
        if not 0 <= label < self.levels:
            raise ValueError(f"unknown label {label} for a {self.levels}-level scheme")
        e = self.edges
        return Interval(float(e[label]), float(e[label + 1]))

    def intervals(self) -> list[Interval]:
        return [self.interval_of(i) for i in range(self.levels)]


def measurement_interval(normalized: Interval, yhat: float, std: float) -> Interval:
    """Map a normalised-innovation interval into measurement space."""
    if not std > 0.0:
        raise ValueError("std must be positive")
    lo, hi = normalized
    return Interval(lo * std + yhat, hi * std + yhat)


def sign_scheme() -> QuantizationScheme:
    return QuantizationScheme((0.0,))


def two_bit_scheme() -> QuantizationScheme:
    return QuantizationScheme(TWO_BIT_THRESHOLDS)


def uniform_scheme(levels: int, width: float) -> QuantizationScheme:
    """Symmetric quantizer with ``levels - 1`` equally spaced thresholds."""
    if levels < 2:
        return QuantizationScheme(())
    half = 0.5 * width * (levels - 2)
    return QuantizationScheme(tuple(np.linspace(-half, half, levels - 1)))
