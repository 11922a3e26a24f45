import numpy as np
import pytest
from hypothesis import given, strategies as st

from klpf.model import simulate
from klpf.experiments import example1_model
from klpf.filters import KalmanLikeParticleFilter, QuantizedKalmanFilter
from klpf.quantizer import (
    TWO_BIT_THRESHOLDS,
    QuantizationScheme,
    measurement_interval,
    sign_scheme,
    two_bit_scheme,
    uniform_scheme,
)


def test_sign_quantize():
    s = sign_scheme()
    assert s.quantize(-0.1) == 0
    assert s.quantize(0.1) == 1
    assert s.quantize(0.0) == 0  # right-closed bins


def test_two_bit_labels():
    s = two_bit_scheme()
    assert s.thresholds == (-1.2437, -0.3823, 0.3823, 1.2437)
    assert s.quantize(0.0) == 2
    assert s.quantize(2.0) == 4
    assert s.interval_of(4) == (1.2437, np.inf)
    assert s.interval_of(2) == (-0.3823, 0.3823)
    assert s.quantize(1.2437) == 3  # boundary goes to the lower bin


def test_interval_of():
    assert sign_scheme().interval_of(1) == (0.0, np.inf)
    with pytest.raises(ValueError):
        sign_scheme().interval_of(2)
    with pytest.raises(ValueError):
        sign_scheme().interval_of(-1)


def test_midpoints_round_trip():
    s = uniform_scheme(9, 0.5)
    for i, (lo, hi) in enumerate(s.intervals()):
        if np.isfinite(lo) and np.isfinite(hi):
            assert s.quantize(0.5 * (lo + hi)) == i


def test_thresholds_validated():
    with pytest.raises(ValueError):
        QuantizationScheme((1.0, 0.0))
    with pytest.raises(ValueError):
        QuantizationScheme((0.0, 0.0))
    with pytest.raises(ValueError):
        QuantizationScheme((0.0, np.inf))


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8, unique=True),
       st.floats(-1e6, 1e6))
def test_bins_partition_the_line(ths, x):
    s = QuantizationScheme(tuple(sorted(ths)))
    e = s.edges
    assert np.all(e[1:] > e[:-1]) and e[0] == -np.inf and e[-1] == np.inf
    lo, hi = s.interval_of(s.quantize(x))
    assert lo < x <= hi
    # exactly one bin contains x
    assert sum(lo < x <= hi for lo, hi in s.intervals()) == 1


def test_measurement_interval():
    assert measurement_interval((0.0, np.inf), 1.0, 2.0) == (1.0, np.inf)
    assert measurement_interval((-1.0, 1.0), 0.0, 3.0) == (-3.0, 3.0)
    with pytest.raises(ValueError):
        measurement_interval((-1.0, 1.0), 0.0, 0.0)


@pytest.mark.parametrize("scheme", [sign_scheme(), two_bit_scheme()])
def test_measurement_lies_in_its_interval(scheme):
    m = example1_model()
    traj = simulate(m, 60, 4)
    for flt in (QuantizedKalmanFilter(m, scheme), KalmanLikeParticleFilter(m, scheme, 20, 1)):
        for y in traj.measurements:
            flt.observe(float(y))
        out = flt.output()
        assert np.all((out.lower < traj.measurements) & (traj.measurements <= out.upper))
