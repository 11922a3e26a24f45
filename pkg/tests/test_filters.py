import numpy as np
import pytest
from scipy import stats

from klpf.experiments import example1_model, example2_model
from klpf.filters import (
    DegenerateWeightsError,
    KalmanFilter,
    KalmanLikeParticleFilter,
    ParticleFilter,
    QuantizedKalmanFilter,
    TruncatedNormalParticleFilter,
    make_filter,
    normalize_log_weights,
    resample,
    run_filter,
)
from klpf.gaussian import truncated_normal_rvs, truncated_std_mean
from klpf.kalman import KalmanState, kf_measurement_update, kf_time_update, lambda_scheme_of, riccati_sequence
from klpf.model import RngStream, StateSpaceModel, simulate
from klpf.quantizer import QuantizationScheme, sign_scheme, two_bit_scheme

from oracles import injected_pair, label_boxes, rejection_states

MULTI = {"resampling": "multinomial"}


# ---------------------------------------------------------------- resampling

@pytest.mark.parametrize("method", ["multinomial", "systematic"])
def test_point_mass(method):
    assert np.all(resample([1.0, 0.0, 0.0], 0, method) == 0)


@pytest.mark.parametrize("method", ["multinomial", "systematic"])
def test_uniform_weights_histogram(method):
    rng = np.random.default_rng(3)
    N = 10
    counts = np.zeros(N)
    for _ in range(10_000):
        counts += np.bincount(resample(np.ones(N), rng, method), minlength=N)
    total = counts.sum()
    expected = total / N
    assert np.all(np.abs(counts - expected) < 3 * np.sqrt(total * (1 / N) * (1 - 1 / N)))


def test_multinomial_counts():
    w = np.array([0.7, 0.2, 0.1])
    rng = np.random.default_rng(11)
    draws = np.concatenate([resample(w, rng, "multinomial") for _ in range(30_000)])
    N = draws.size
    counts = np.bincount(draws, minlength=3)
    assert np.all(np.abs(counts - N * w) < 3 * np.sqrt(N * w * (1 - w)))


def test_resample_errors():
    with pytest.raises(DegenerateWeightsError):
        resample([0.0, 0.0], 0)
    with pytest.raises(ValueError):
        resample([1.0], 0, "stratified-ish")


def test_resample_deterministic():
    w = np.random.default_rng(0).random(50)
    np.testing.assert_array_equal(resample(w, 5), resample(w, 5))


def test_degenerate_weights_fall_back_to_uniform():
    w, flag = normalize_log_weights(np.full(4, -np.inf))
    assert flag and np.all(w == 0.25)
    with pytest.raises(DegenerateWeightsError):
        normalize_log_weights(np.full(4, -np.inf), strict=True)
    w, flag = normalize_log_weights(np.array([-1000.0, -1001.0]))
    assert not flag and w[0] == pytest.approx(1 / (1 + np.exp(-1)))


# ---------------------------------------------------------------- Alg 1

def test_alg1_trivial_quantizer_is_open_loop(scalar_model):
    scheme = QuantizationScheme(())
    flt = ParticleFilter(scalar_model, scheme, 500, 4, **MULTI)
    traj = simulate(scalar_model, 5, 0)
    for y in traj.measurements:
        parts = flt.particles.copy()
        est = flt.observe(float(y))
        np.testing.assert_allclose(est, parts.mean(axis=0))
    out = flt.output()
    assert np.all(out.ess == pytest.approx(500))
    assert np.all(np.isinf(out.lower)) and np.all(np.isinf(out.upper))


def test_alg1_weights_favour_particles_inside(scalar_model):
    flt = ParticleFilter(scalar_model, sign_scheme(), 2, 0)
    flt.particles = np.array([[0.5], [-3.0 - 0.0]])
    # box (0, 1): particle 0 predicts the midpoint, particle 1 sits 3 sigma below
    flt.assimilate(0.0, 1.0, indices=[0, 1])
    out = flt.output()
    # estimate dominated by the inside particle
    assert out.estimates[0, 0] > 0.4


# ---------------------------------------------------------------- Alg 2

def test_alg2_horizon_zero_matches_truncated_mean():
    m = StateSpaceModel(A=[[0.9]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]], m0=[0.3])
    flt = TruncatedNormalParticleFilter(m, sign_scheme(), 100_000, 1, **MULTI)
    est = flt.assimilate(0.0, np.inf)[0]
    # y ~ N(0.3, 2); E[y | y > 0] in closed form, then the linear map x = m + K (y - m)
    s = np.sqrt(2.0)
    a = -0.3 / s
    lam = truncated_std_mean(a, np.inf)
    Ey = 0.3 + s * lam
    var_y = 2.0 * (1 + a * lam - lam**2)
    ref = 0.3 + 0.5 * (Ey - 0.3)
    assert abs(est - ref) < 3 * 0.5 * np.sqrt(var_y / 100_000)


def test_alg2_untruncated_matches_kalman_on_mean_history():
    m = example2_model()
    N = 200
    flt = TruncatedNormalParticleFilter(m, sign_scheme(), N, 2, **MULTI)
    ests = []
    for n in range(8):
        ests.append(flt.assimilate(-np.inf, np.inf, indices=np.arange(N)))
        assert np.all(flt.last_log_weights == 0.0)
    ybar = flt.histories.mean(axis=0)
    s = KalmanState.prior(m)
    for n in range(8):
        f = kf_measurement_update(s, m.h, m.noise_var(n), ybar[n])
        np.testing.assert_allclose(ests[n], f.xhat, atol=1e-9)
        s = kf_time_update(f, m.A, m.W)


def test_alg2_histories_stay_in_their_boxes(scalar_model):
    lower, upper, traj = label_boxes(scalar_model, two_bit_scheme(), 6, 3)
    flt = TruncatedNormalParticleFilter(scalar_model, two_bit_scheme(), 300, 1)
    for n in range(7):
        flt.assimilate(lower[n], upper[n])
        assert np.all(np.isfinite(flt.last_log_weights))
    assert np.all((flt.histories > lower) & (flt.histories < upper))


def test_alg2_capped():
    m = StateSpaceModel(A=[[0.5]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]])
    flt = TruncatedNormalParticleFilter(m, sign_scheme(), 5, 0)
    for _ in range(64):
        flt.assimilate(-np.inf, np.inf)
    with pytest.raises(ValueError):
        flt.assimilate(-np.inf, np.inf)


def test_alg2_output_covariance_matches_joint_moments():
    from klpf.model import joint_moments
    m = example1_model()
    flt = TruncatedNormalParticleFilter(m, sign_scheme(), 3, 0)
    for _ in range(6):
        flt.assimilate(-np.inf, np.inf)
    np.testing.assert_allclose(flt.output_cov, joint_moments(m, 5).output_cov, rtol=1e-12)


@pytest.mark.parametrize("model_name", ["scalar", "example2"])
def test_alg2_alg3_identity(model_name, scalar_model):
    model = scalar_model if model_name == "scalar" else example2_model()
    lower, upper, _ = label_boxes(model, two_bit_scheme(), 30, 8)
    worst_est, worst_w = injected_pair(model, lower, upper, 50, 1, 30)
    assert worst_est < 1e-9
    assert worst_w < 1e-6


# ---------------------------------------------------------------- KLPF

def test_klpf_single_particle_with_true_measurements_is_kalman():
    m = example1_model()
    traj = simulate(m, 40, 2)
    flt = KalmanLikeParticleFilter(m, sign_scheme(), 1, 0)
    kf = run_filter("full_kf", m, None, traj)
    for n, y in enumerate(traj.measurements):
        est = flt.assimilate(-np.inf, np.inf, draws=np.array([y]))
        np.testing.assert_allclose(est, kf.estimates[n], rtol=1e-10, atol=1e-8)


def test_klpf_untruncated_uniform_weights():
    m = example2_model()
    flt = KalmanLikeParticleFilter(m, sign_scheme(), 100, 1)
    for _ in range(5):
        flt.assimilate(-np.inf, np.inf)
        assert np.all(flt.last_log_weights == 0.0)
        np.testing.assert_allclose(flt.filtered_weights, 0.01)


def test_klpf_shared_covariance_is_full_riccati():
    m = example1_model()
    pred, filt = riccati_sequence(m, 50, 1.0)
    for scheme in (sign_scheme(), two_bit_scheme()):
        flt = KalmanLikeParticleFilter(m, scheme, 30, 4)
        traj = simulate(m, 50, 9)
        for n, y in enumerate(traj.measurements):
            np.testing.assert_allclose(flt.P, pred[n], rtol=1e-12)
            flt.observe(float(y))
            np.testing.assert_allclose(flt.filtered_cov, filt[n], rtol=1e-12)


def test_klpf_weights_stay_positive():
    m = example1_model()
    traj = simulate(m, 100, 5)
    flt = KalmanLikeParticleFilter(m, two_bit_scheme(), 90, 5)
    for y in traj.measurements:
        flt.observe(float(y))
        assert np.all(np.isfinite(flt.last_log_weights))
    assert not flt.output().degenerate.any()


def test_klpf_predictions_follow_estimates():
    m = example1_model()
    out = run_filter("klpf", m, sign_scheme(), simulate(m, 20, 1), 50, 3)
    np.testing.assert_allclose(out.predictions, out.estimates @ m.A.T)


def test_klpf_spread_shrinks_with_particles(scalar_model):
    lower, upper, _ = label_boxes(scalar_model, sign_scheme(), 3, 4)
    spreads = []
    for N in (100, 1000, 10_000):
        est = []
        for rep in range(20):
            flt = KalmanLikeParticleFilter(scalar_model, sign_scheme(), N, RngStream(rep, (N,)), **MULTI)
            for n in range(4):
                e = flt.assimilate(lower[n], upper[n])
            est.append(e[0])
        spreads.append(np.std(est, ddof=1))
    assert spreads[0] > spreads[1] > spreads[2]
    assert spreads[0] / spreads[2] > 4  # ideal ratio is 10


@pytest.mark.parametrize("n", [0, 1, 2])
def test_klpf_reconstructs_conditional_law(scalar_model, n):
    lower, upper, _ = label_boxes(scalar_model, sign_scheme(), n, 17)
    N = 100_000
    rng = np.random.default_rng(n)
    flt = KalmanLikeParticleFilter(scalar_model, sign_scheme(), N, rng, **MULTI)
    for k in range(n + 1):
        flt.assimilate(lower[k], upper[k])
    idx = resample(flt.filtered_weights, rng, "multinomial")
    x = flt.filtered_means[idx, 0] + np.sqrt(flt.filtered_cov[0, 0]) * rng.standard_normal(N)
    ref, _ = rejection_states(scalar_model, lower, upper, n, N, 1000 + n)
    assert stats.ks_2samp(x, ref[:, 0]).statistic < 0.02


# ---------------------------------------------------------------- linear filters and runner

def test_soi_kf_trace_follows_modified_riccati():
    m = example1_model()
    out = run_filter("soi_kf", m, sign_scheme(), simulate(m, 60, 0))
    _, filt = riccati_sequence(m, 60, 2 / np.pi)
    np.testing.assert_allclose(np.trace(out.covariances, axis1=1, axis2=2),
                               np.trace(filt, axis1=1, axis2=2), rtol=1e-12)
    assert out.kind == "soi_kf"


def test_mlq_kf_kind_and_label_recovery():
    m = example2_model()
    traj = simulate(m, 10, 0)
    a = QuantizedKalmanFilter(m, two_bit_scheme())
    b = QuantizedKalmanFilter(m, two_bit_scheme())
    assert a.kind == "mlq_kf"
    for y in traj.measurements:
        a.observe(float(y))
        b.assimilate(a.history.lower[-1], a.history.upper[-1])
    np.testing.assert_array_equal(a.output().labels, b.output().labels)
    np.testing.assert_allclose(a.output().estimates, b.output().estimates)


def test_full_kf_covariance_is_riccati():
    m = example1_model()
    out = run_filter("full_kf", m, None, simulate(m, 30, 0))
    _, filt = riccati_sequence(m, 30, 1.0)
    np.testing.assert_allclose(out.covariances, filt, rtol=1e-12)


def test_make_filter_errors():
    m = example2_model()
    with pytest.raises(ValueError):
        make_filter("kalman", m, sign_scheme())
    with pytest.raises(ValueError):
        make_filter("klpf", m, sign_scheme())
    with pytest.raises(ValueError):
        make_filter("klpf", m, sign_scheme(), 10, 0, innovation_scale="sometimes")


def test_run_filter_deterministic():
    m = example2_model()
    traj = simulate(m, 30, 0)
    for kind in ("alg1", "alg2", "klpf"):
        a = run_filter(kind, m, two_bit_scheme(), traj, 50, RngStream(1, (2,)))
        b = run_filter(kind, m, two_bit_scheme(), traj, 50, RngStream(1, (2,)))
        np.testing.assert_array_equal(a.estimates, b.estimates)


@pytest.mark.slow
def test_klpf_three_particles_close_to_alg1_on_example2():
    m = example2_model()
    scheme = two_bit_scheme()
    runs = 1000
    mse = {"klpf": 0.0, "alg1": 0.0}
    for k in range(runs):
        traj = simulate(m, 100, RngStream(77, (k, 0)))
        for j, (kind, N) in enumerate((("klpf", 3), ("alg1", 750))):
            out = run_filter(kind, m, scheme, traj, N, RngStream(77, (k, 1, j)))
            mse[kind] += np.mean(np.sum((out.estimates - traj.states) ** 2, axis=1)[20:])
    assert abs(mse["klpf"] / mse["alg1"] - 1) < 0.10
