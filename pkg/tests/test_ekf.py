import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynsbm.ekf import (
    FilterState,
    ObsNoise,
    StateSpaceConfig,
    build_process_cov,
    diffuse_init,
    fit_hyperparams,
    jacobian_h,
    logistic_slope,
    logistic_vec,
    logit_vec,
    plugin_obs_cov,
    predict,
    prediction_error,
    run_filter,
    second_order_diagnostic,
    update,
)
from dynsbm.exceptions import ConfigurationError
from dynsbm.experiments import log_grid
from dynsbm.netcore import BlockStats, block_counts
from dynsbm.simgen import SimParams, generate


def _pred(mean, cov):
    return FilterState(np.atleast_1d(mean), np.atleast_2d(cov), phase="predicted")


def _upd(mean, cov):
    return FilterState(np.atleast_1d(mean), np.atleast_2d(cov), phase="updated")


def _identity(x):
    return np.asarray(x, dtype=float)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


# logistic primitives


def test_logistic_values():
    assert logistic_vec(0.0) == 0.5
    assert logistic_vec(logit_vec(0.2580)) == pytest.approx(0.2580, abs=1e-15)
    tiny = logistic_vec(np.array([-745.0]))[0]
    assert tiny > 0
    assert tiny == pytest.approx(np.exp(-745.0), rel=1e-6)


def test_logit_values():
    assert logit_vec(0.5) == 0
    assert logit_vec(0.2580) == pytest.approx(np.log(0.2580 / 0.7420), rel=1e-14)
    assert logit_vec(0.2580) == pytest.approx(-1.0564, abs=1e-4)
    with pytest.raises(ValueError):
        logit_vec(1.0)


@settings(max_examples=50)
@given(arrays(float, 16, elements=st.floats(1e-6, 1 - 1e-6)))
def test_logit_round_trip(y):
    assert np.allclose(logistic_vec(logit_vec(y)), y, rtol=0, atol=1e-12)


def test_jacobian_values():
    assert jacobian_h(np.array([0.0]))[0, 0] == 0.25
    psi = logit_vec(np.array([0.2580]))
    assert jacobian_h(psi)[0, 0] == pytest.approx(0.2580 * 0.7420, rel=1e-12)
    assert jacobian_h(psi)[0, 0] == pytest.approx(0.1914, abs=1e-4)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-6, 6, 100)
    eps = 1e-5
    fd = (logistic_vec(x + eps) - logistic_vec(x - eps)) / (2 * eps)
    assert np.max(np.abs(np.diag(jacobian_h(x)) - fd)) < 1e-6


# predict


def test_predict_identity_zero_noise():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    s = _upd(rng.normal(size=4), A @ A.T)
    cfg = StateSpaceConfig(np.zeros((4, 4)))
    p = predict(s, cfg)
    assert np.array_equal(p.mean, s.mean)
    assert np.allclose(p.cov, s.cov, rtol=1e-15, atol=0)


def test_predict_scalar():
    cfg = StateSpaceConfig(np.array([[0.1]]), transition=np.array([[0.9]]))
    p = predict(_upd(1.0, 0.5), cfg)
    assert p.mean[0] == pytest.approx(0.9, abs=1e-15)
    assert p.cov[0, 0] == pytest.approx(0.505, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_predict_keeps_psd(seed):
    rng = np.random.default_rng(seed)
    d = 9
    A, B = rng.normal(size=(d, d)), rng.normal(size=(d, 3))
    cfg = StateSpaceConfig(B @ B.T, transition=rng.normal(size=(d, d)))
    p = predict(_upd(rng.normal(size=d), A @ A.T), cfg)
    assert np.allclose(p.cov, p.cov.T, rtol=1e-10)
    assert np.linalg.eigvalsh(p.cov)[0] >= -1e-9 * np.trace(p.cov)


# update


def test_update_scalar_hand_values():
    out = update(_pred(0.0, 1.0), [0.6], ObsNoise(np.array([0.01])))
    K = 0.25 / (0.0625 + 0.01)
    assert K == pytest.approx(3.4483, abs=1e-4)
    assert out.mean[0] == pytest.approx(K * 0.1, abs=1e-12)
    assert out.mean[0] == pytest.approx(0.34483, abs=1e-5)
    assert out.cov[0, 0] == pytest.approx(1 - K * 0.25, abs=1e-12)
    assert out.cov[0, 0] == pytest.approx(0.13793, abs=1e-5)


def test_update_zero_innovation():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(4, 4))
    s = _pred(rng.normal(size=4), A @ A.T + np.eye(4))
    out = update(s, logistic_vec(s.mean), ObsNoise(np.full(4, 0.01)))
    assert np.allclose(out.mean, s.mean, atol=1e-14)
    assert np.linalg.eigvalsh(s.cov - out.cov)[0] >= -1e-12


def test_update_infinite_noise_limit():
    rng = np.random.default_rng(3)
    s = _pred(rng.normal(size=4), np.eye(4))
    out = update(s, rng.random(4), ObsNoise(np.full(4, 0.01 * 1e12)))
    assert np.allclose(out.mean, s.mean, atol=1e-6)
    assert np.allclose(out.cov, s.cov, atol=1e-6)


def _textbook_kf(mu, P, y, Rn, H):
    # covariance form with an explicit inverse, independent of the filter code
    S = H @ P @ H.T + Rn
    K = P @ H.T @ np.linalg.inv(S)
    return mu + K @ (y - H @ mu), (np.eye(len(mu)) - K @ H) @ P


def test_linear_update_scalar_oracle():
    out = update(_pred(0.3, 2.0), [1.1], ObsNoise(np.array([0.5])), h=_identity, h_slope=_ones)
    mu, P = _textbook_kf(np.array([0.3]), np.array([[2.0]]), np.array([1.1]), np.array([[0.5]]), np.eye(1))
    assert out.mean[0] == pytest.approx(0.3 + 2.0 / 2.5 * 0.8, abs=1e-12)
    assert np.allclose(out.mean, mu, rtol=0, atol=1e-12)
    assert np.allclose(out.cov, P, rtol=0, atol=1e-12)


def test_linear_update_matrix_oracle():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(4, 4))
    P = A @ A.T + 0.5 * np.eye(4)
    mu, y, r = rng.normal(size=4), rng.normal(size=4), rng.uniform(0.1, 1, 4)
    out = update(_pred(mu, P), y, ObsNoise(r), h=_identity, h_slope=_ones)
    m2, P2 = _textbook_kf(mu, P, y, np.diag(r), np.eye(4))
    assert np.allclose(out.mean, m2, rtol=0, atol=1e-12)
    assert np.allclose(out.cov, P2, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-8, 1e4))
def test_update_covariance_stays_psd(seed, scale):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(9, 9))
    s = _pred(rng.normal(scale=3, size=9), scale * (A @ A.T))
    out = update(s, rng.uniform(0.01, 0.99, 9), ObsNoise(rng.uniform(1e-6, 1e-2, 9)))
    assert np.allclose(out.cov, out.cov.T, rtol=1e-10, atol=0)
    assert np.linalg.eigvalsh(out.cov)[0] >= -1e-9 * np.trace(out.cov)


# diffuse initialization


def test_diffuse_init_values():
    s = diffuse_init(BlockStats(m=np.array([[50]]), n=np.array([[100]])))
    assert s.mean[0] == 0
    assert s.cov[0, 0] == pytest.approx(16 * 0.0025, rel=1e-14)
    assert s.cov[0, 0] == pytest.approx(0.04, rel=1e-14)


def test_diffuse_init_symmetric_density():
    m = np.array([[5, 3], [3, 9]])
    s = diffuse_init(BlockStats(m=m, n=np.full((2, 2), 20)))
    P = s.mean.reshape(2, 2, order="F")
    assert np.allclose(P, P.T)


def test_diffuse_matches_large_prior_filter():
    # a proper prior with variance 1e6 centered at the first linearization point
    rng = np.random.default_rng(5)
    n = 200
    m = rng.binomial(n, 0.3, size=8)
    stats = [BlockStats(m=np.array([[v]]), n=np.array([[n]])) for v in m]
    gamma = np.array([[0.01]])
    diffuse = run_filter(stats, StateSpaceConfig(gamma))
    y1 = stats[0].clamped().ravel()
    big = StateSpaceConfig(gamma, init_mean=logit_vec(y1), init_cov=np.array([[1e6]]) - gamma, diffuse=False)
    proper = run_filter(stats, big)
    for a, b in zip(diffuse, proper):
        assert a.mean[0] == pytest.approx(b.mean[0], rel=1e-3)
        assert a.cov[0, 0] == pytest.approx(b.cov[0, 0], rel=1e-3)


# observation noise


@pytest.mark.parametrize(
    "theta, n, expected",
    [(0.5, 100, 0.0025), (0.2580, 992, 0.2580 * 0.7420 / 992), (1e-12, 100, 2.5e-5)],
)
def test_plugin_obs_cov(theta, n, expected):
    s2 = plugin_obs_cov(logit_vec(np.array([theta])), np.array([n])).sigma2[0]
    assert s2 == pytest.approx(expected, rel=1e-6)


def test_plugin_obs_cov_benchmark_value():
    s2 = plugin_obs_cov(logit_vec(np.array([0.2580])), np.array([992])).sigma2[0]
    assert s2 == pytest.approx(1.930e-4, abs=1e-7)


# process covariance


def test_process_cov_no_coupling():
    assert np.array_equal(build_process_cov(3, 0.02, 0.0), 0.02 * np.eye(9))


def test_process_cov_k2_structure():
    sd, sn = 0.04, 0.01
    expected = np.array([[sd, sn, sn, 0], [sn, sd, 0, sn], [sn, 0, sd, sn], [0, sn, sn, sd]])
    assert np.array_equal(build_process_cov(2, sd, sn), expected)


def test_process_cov_benchmark_values_psd():
    G = build_process_cov(4, 0.01, 0.0025)
    assert np.linalg.eigvalsh(G)[0] >= -1e-15


def test_process_cov_rejects_non_psd():
    with pytest.raises(ConfigurationError, match="PSD"):
        build_process_cov(4, 0.01, 0.01)


# second-order diagnostic


def _second_order_oracle(mean, R):
    # Hessian of coordinate i is c_i e_i e_i^T
    c = np.array([v * (1 - v) * (1 - 2 * v) for v in logistic_vec(mean)])
    d = len(mean)
    Hs = []
    for i in range(d):
        Hi = np.zeros((d, d))
        Hi[i, i] = c[i]
        Hs.append(Hi)
    M = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            M[i, j] = 0.25 * np.trace(Hs[i] @ R) * np.trace(Hs[j] @ R) + 0.5 * np.trace(Hs[i] @ R @ Hs[j] @ R)
    return np.linalg.eigvalsh(M)


def test_second_order_matches_trace_formula():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(4, 4))
    s = _pred(rng.normal(size=4), 0.1 * A @ A.T)
    rep = second_order_diagnostic(s, ObsNoise(np.full(4, 1e-3)))
    assert np.allclose(rep.second_order, _second_order_oracle(s.mean, s.cov), atol=1e-14)


def test_second_order_zero_covariance():
    rep = second_order_diagnostic(_pred(np.ones(4), np.zeros((4, 4))), ObsNoise(np.ones(4)))
    assert np.all(rep.second_order == 0)


def test_second_order_inflection_point():
    # h'' = 0 at psi = 0, so both bias and variance vanish
    rep = second_order_diagnostic(_pred(np.zeros(4), np.diag([1.0, 2, 3, 4])), ObsNoise(np.ones(4)))
    assert np.allclose(rep.second_order, 0, atol=1e-30)


def test_second_order_small_on_simulation():
    snaps, truth = generate(SimParams(seed=0, churn_fraction=0.0))
    stats = [block_counts(s, a) for s, a in zip(snaps, truth.assignments)]
    _, preds = run_filter(stats, StateSpaceConfig.from_hyperparams(4, 0.01, 0.0025), return_predicted=True)
    so, noise = [], []
    for st_, p in zip(stats[1:], preds[1:]):
        rep = second_order_diagnostic(p, plugin_obs_cov(p.mean, st_.n))
        so.append(np.median(rep.second_order))
        noise.append(np.median(rep.noise))
    assert np.median(so) < np.median(noise)


# hyperparameter selection


def _stats(snaps, truth):
    return [block_counts(s, a) for s, a in zip(snaps, truth.assignments)]


def test_fit_hyperparams_single_point():
    snaps, truth = generate(SimParams(seed=1, T=4))
    assert fit_hyperparams(snaps, truth.assignments, [(0.02, 0.004)]) == (0.02, 0.004)


def test_fit_hyperparams_needs_three_steps():
    snaps, truth = generate(SimParams(seed=1, T=2))
    with pytest.raises(ConfigurationError):
        fit_hyperparams(snaps, truth.assignments, [(0.01, 0.0)])


def test_fit_hyperparams_skips_invalid_points():
    snaps, truth = generate(SimParams(seed=1, T=4))
    assert fit_hyperparams(snaps, truth.assignments, [(0.01, 0.01), (0.01, 0.0)]) == (0.01, 0.0)
    with pytest.raises(ConfigurationError):
        fit_hyperparams(snaps, truth.assignments, [(0.01, 0.01)])


def test_constant_state_prefers_smallest_variance():
    params = SimParams(seed=2, s_diag=0.0, s_nb=0.0, churn_fraction=0.0, T=10)
    snaps, truth = generate(params)
    stats = _stats(snaps, truth)
    grid = log_grid(0.01)
    errs = [prediction_error(stats, StateSpaceConfig.from_hyperparams(4, sd, 0.0)) for sd in grid]
    assert np.all(np.diff(errs) >= 0)
    assert fit_hyperparams(snaps, truth.assignments, [(sd, 0.0) for sd in grid]) == (grid[0], 0.0)


def test_hyperparameter_calibration():
    sd_grid, nb_grid = log_grid(0.01), log_grid(0.0025)
    grid = [(a, b) for a in sd_grid for b in nb_grid]
    hits = 0
    for seed in range(50):
        snaps, truth = generate(SimParams(seed=seed))
        sd, nb = fit_hyperparams(snaps, truth.assignments, grid)
        hits += abs(sd_grid.index(sd) - 2) <= 1 and abs(nb_grid.index(nb) - 2) <= 1
    assert hits >= 30
