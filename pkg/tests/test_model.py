import numpy as np
import pytest

from klpf.experiments import example1_model, example2_model
from klpf.model import (
    ModelValidationError,
    RngStream,
    StateSpaceModel,
    joint_moments,
    simulate,
    simulate_batch,
    validate_model,
)


def test_examples_validate():
    assert validate_model(example2_model()) == []
    assert validate_model(example1_model()) == []


def test_indefinite_noise_reported():
    m = StateSpaceModel(A=np.eye(2), h=[1, 0], W=[[1, 2], [2, 1]], sigma_v2=1.0, P0=np.eye(2))
    problems = validate_model(m)
    assert any(p.startswith("W not PSD") for p in problems)


def test_nonpositive_noise_reported():
    m = StateSpaceModel(A=[[1.0]], h=[1.0], W=[[1.0]], sigma_v2=0.0, P0=[[1.0]])
    assert "measurement noise not positive" in validate_model(m)


def test_asymmetry_reported():
    m = StateSpaceModel(A=np.eye(2), h=[1, 0], W=[[1, 0.1], [0, 1]], sigma_v2=1.0, P0=np.eye(2))
    assert any("W" in p and "symmetric" in p for p in validate_model(m))


def test_round_off_psd_accepted():
    W = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-14 * np.eye(2)
    m = StateSpaceModel(A=np.eye(2), h=[1, 0], W=W, sigma_v2=1.0, P0=np.eye(2))
    assert validate_model(m) == []


def test_simulate_rejects_invalid():
    m = StateSpaceModel(A=[[1.0]], h=[1.0], W=[[1.0]], sigma_v2=-1.0, P0=[[1.0]])
    with pytest.raises(ModelValidationError):
        simulate(m, 3, 0)


def test_noise_free_fixed_point():
    m = StateSpaceModel(A=[[1.0]], h=[1.0], W=[[0.0]], sigma_v2=1.0, P0=[[0.0]])
    t = simulate(m, 10, 1)
    assert np.all(t.states == 0.0)
    assert t.states.shape == (11, 1) and t.measurements.shape == (11,)


def test_deterministic_geometric_decay():
    m = StateSpaceModel(A=[[0.5]], h=[1.0], W=[[0.0]], sigma_v2=1.0, P0=[[0.0]], m0=[2.0])
    t = simulate(m, 5, 1)
    np.testing.assert_array_equal(t.states[:, 0], 2.0 * 0.5 ** np.arange(6))


def test_one_step_variance():
    m = StateSpaceModel(A=[[1.0]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]])
    x, _ = simulate_batch(m, 1, 100_000, 3)
    v = x[:, 1, 0].var()
    # var of the sample variance of a Gaussian: 2 s^4 / (M - 1)
    assert abs(v - 2.0) < 3 * np.sqrt(2 * 4.0 / (x.shape[0] - 1))


def test_reproducible_and_streams_distinct():
    m = example2_model()
    a = simulate(m, 20, RngStream(5, (1, 0)))
    b = simulate(m, 20, RngStream(5, (1, 0)))
    c = simulate(m, 20, RngStream(5, (2, 0)))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.measurements, b.measurements)
    assert not np.array_equal(a.states, c.states)


def test_lyapunov_moments_and_measurement_noise():
    m = StateSpaceModel(A=[[0.8]], h=[2.0], W=[[0.5]], sigma_v2=0.7, P0=[[3.0]])
    M = 20_000
    x, y = simulate_batch(m, 6, M, 11)
    P = 3.0
    for n in range(7):
        v = x[:, n, 0].var()
        assert abs(v - P) < 5 * np.sqrt(2 * P**2 / (M - 1))
        P = 0.64 * P + 0.5
    e = y - 2.0 * x[:, :, 0]
    assert np.all(np.abs(e.var(axis=0) - 0.7) < 5 * np.sqrt(2 * 0.49 / (M - 1)))


def test_time_varying_sequences():
    A = np.array([[[1.0]], [[0.5]], [[2.0]]])
    m = StateSpaceModel(A=A, h=[1.0], W=[[0.0]], sigma_v2=[1.0, 2.0, 3.0], P0=[[0.0]], m0=[1.0])
    assert not m.time_invariant
    t = simulate(m, 3, 0)
    np.testing.assert_allclose(t.states[:, 0], [1.0, 1.0, 0.5, 1.0])
    assert m.noise_var(1) == 2.0
    assert m.noise_var(10) == 3.0  # last entry persists


def test_joint_moments_match_simulation():
    m = StateSpaceModel(A=[[0.9, 0.2], [0.0, 0.7]], h=[1.0, -1.0], W=np.eye(2) * 0.3,
                        sigma_v2=0.5, P0=np.eye(2), m0=[1.0, -0.5])
    jm = joint_moments(m, 3)
    x, y = simulate_batch(m, 3, 200_000, 2)
    np.testing.assert_allclose(y.mean(axis=0), jm.output_mean, atol=0.02)
    np.testing.assert_allclose(np.cov(y.T), jm.output_cov, atol=0.05)
    xc = x[:, 3] - x[:, 3].mean(axis=0)
    yc = y - y.mean(axis=0)
    np.testing.assert_allclose(yc.T @ xc / len(xc), jm.cross_cov, atol=0.05)
