"""Scalar normal kernels.

Everything here is vectorised over numpy broadcasting.  Endpoints of
intervals may be ``-inf``/``+inf``.
"""

from typing import NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "Interval",
    "UnsampleableTail",
    "phi_cdf",
    "phi_inv",
    "phi_pdf",
    "interval_prob",
    "log_interval_prob",
    "sample_truncated_normal",
    "truncated_normal_rvs",
    "truncated_std_mean",
]

# Standardised endpoints beyond this (on the same side) count as deep tail.
DEEP_TAIL = 6.0

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Interval(NamedTuple):
    """Open interval ``(lower, upper)`` on the extended real line."""

    lower: float
    upper: float


class UnsampleableTail(ValueError):
    """Raised when an interval carries numerically zero probability."""


def phi_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def phi_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def phi_inv(p):
    """Inverse of the standard normal CDF on the open interval (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("phi_inv is defined on the open interval (0, 1)")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def _standardize(lower, upper, mu, sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0.0)):
        raise ValueError("sigma must be positive")
    a = (np.asarray(lower, dtype=float) - mu) / sigma
    b = (np.asarray(upper, dtype=float) - mu) / sigma
    return np.broadcast_arrays(a, b)


def interval_prob(lower, upper, mu=0.0, sigma=1.0):
    """P(lower < X < upper) for X ~ N(mu, sigma**2).

    Far-tail intervals are evaluated on the reflected side so that the
    difference of two CDF values never cancels catastrophically.
    """
    a, b = _standardize(lower, upper, mu, sigma)
    upper_side = a > 0.0
    out = np.where(
        upper_side,
        special.ndtr(-a) - special.ndtr(-b),
        special.ndtr(b) - special.ndtr(a),
    )
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def _log_diff_exp(la, lb):
    # log(exp(la) - exp(lb)) for la >= lb
    with np.errstate(divide="ignore", invalid="ignore"):
        return la + np.log1p(-np.exp(lb - la))


def log_interval_prob(lower, upper, mu=0.0, sigma=1.0):
    """Logarithm of :func:`interval_prob`, accurate far into the tails."""
    a, b = _standardize(lower, upper, mu, sigma)
    upper_side = a > 0.0
    # reflect so the relevant mass is always a lower tail
    lo = np.where(upper_side, -b, a)
    hi = np.where(upper_side, -a, b)
    with np.errstate(divide="ignore"):
        out = _log_diff_exp(special.log_ndtr(hi), special.log_ndtr(lo))
    out = np.where(hi <= lo, -np.inf, out)
    return out if out.ndim else float(out)


def sample_truncated_normal(lower, upper, mu, sigma, u):
    """Inverse-CDF draw of N(mu, sigma**2) restricted to ``(lower, upper)``.

    ``u`` holds uniform(0, 1) variates; the map is nondecreasing in ``u``.
    The upper-tail case is handled by reflection so that the CDF
    differences stay representable.
    """
    a, b = _standardize(lower, upper, mu, sigma)
    a, b, u = np.broadcast_arrays(a, b, np.asarray(u, dtype=float))
    flip = a > 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    # in reflected coordinates the uniform runs the other way
    uu = np.where(flip, 1.0 - u, u)
    plo = special.ndtr(lo)
    phi = special.ndtr(hi)
    mass = phi - plo
    if np.any(mass <= 0.0):
        raise UnsampleableTail("interval probability underflows to zero")
    p = np.clip(plo + uu * mass, plo, phi)
    z = special.ndtri(p)
    z = np.where(flip, -z, z)
    # rounding can land exactly on an endpoint; nudge inside
    z = np.clip(z, np.nextafter(a, np.inf), np.nextafter(b, -np.inf))
    out = mu + sigma * z
    return out if np.ndim(out) else float(out)


def _tail_rejection(a, b, rng):
    """Exact draws from N(0,1) restricted to (a, b) with a >= DEEP_TAIL.

    Exponential proposal for wide intervals, uniform proposal for narrow
    ones.
    """
    out = np.empty(a.shape)
    todo = np.arange(a.size)
    a = a.ravel()
    b = b.ravel()
    flat = out.ravel()
    while todo.size:
        aa, bb = a[todo], b[todo]
        rate = 0.5 * (aa + np.sqrt(aa * aa + 4.0))
        narrow = (bb - aa) < 1.0 / rate
        z = np.where(
            narrow,
            aa + (np.where(np.isfinite(bb), bb, aa) - aa) * rng.random(todo.size),
            aa + rng.exponential(1.0 / rate),
        )
        logacc = np.where(
            narrow,
            0.5 * (aa * aa - z * z),
            -0.5 * (z - rate) ** 2,
        )
        ok = (z < bb) & (np.log(rng.random(todo.size)) <= logacc)
        flat[todo[ok]] = z[ok]
        todo = todo[~ok]
    return flat.reshape(out.shape)


def truncated_normal_rvs(lower, upper, mu, sigma, rng, size=None):
    """Random draws from truncated normals with broadcastable parameters.

    Uses :func:`sample_truncated_normal` except where both standardised
    endpoints lie beyond ``DEEP_TAIL`` on the same side, where an exact
    rejection sampler takes over.
    """
    a, b = _standardize(lower, upper, mu, sigma)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if size is None:
        size = ()
    elif np.isscalar(size):
        size = (int(size),)
    shape = np.broadcast_shapes(a.shape, mu.shape, sigma.shape, tuple(size))
    a = np.broadcast_to(a, shape)
    b = np.broadcast_to(b, shape)
    mu = np.broadcast_to(mu, shape)
    sigma = np.broadcast_to(sigma, shape)
    u = rng.random(shape)
    deep = (a >= DEEP_TAIL) | (b <= -DEEP_TAIL)
    z = np.empty(shape)
    easy = ~deep
    if np.any(easy):
        z[easy] = sample_truncated_normal(a[easy], b[easy], 0.0, 1.0, u[easy])
    if np.any(deep):
        flip = b[deep] <= -DEEP_TAIL
        lo = np.where(flip, -b[deep], a[deep])
        hi = np.where(flip, -a[deep], b[deep])
        draw = _tail_rejection(lo, hi, rng)
        z[deep] = np.where(flip, -draw, draw)
    return mu + sigma * z


def truncated_std_mean(lower, upper):
    """E[Z | lower < Z < upper] for standard normal Z."""
    a, b = _standardize(lower, upper, 0.0, 1.0)
    logp = log_interval_prob(a, b)
    if np.any(np.isneginf(logp)):
        raise ValueError("interval has zero probability")
    flip = a > 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    # (pdf(lo) - pdf(hi)) / mass, all in log space
    with np.errstate(over="ignore", invalid="ignore"):
        lpdf_lo = -0.5 * lo * lo - _LOG_SQRT_2PI
        lpdf_hi = -0.5 * hi * hi - _LOG_SQRT_2PI
        diff = np.exp(lpdf_lo - logp) - np.exp(lpdf_hi - logp)
    mean = np.where(flip, -diff, diff)
    return mean if mean.ndim else float(mean)
