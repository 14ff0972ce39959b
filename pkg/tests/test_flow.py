"""
Tests for the flow module: gradient samples, blob evolution and the Lyapunov exponent.
"""

import numpy as np
import pytest
from scipy.linalg import expm

from config import FlowParams
from flow import (
    CHUNK_STEPS,
    EvolutionState,
    FlowRealization,
    HorizonMap,
    estimate_lyapunov,
    evolve_state,
    expm_traceless,
    propagator,
    sample_gradient,
    step_evolution,
    traceless_gaussian,
)
from utils.validation import InvalidInputError


def test_sample_is_deterministic(flow_params):
    a = FlowRealization(flow_params)
    b = FlowRealization(flow_params)
    for k in (0, 5, 1023, 1024, 5000):
        assert np.array_equal(sample_gradient(a, k).sigma, sample_gradient(b, k).sigma)


def test_samples_do_not_depend_on_generation_order(flow_params):
    forward = FlowRealization(flow_params)
    block = forward.gradient_block(0, 3000)
    backward = FlowRealization(flow_params)
    for k in (2999, 1500, 0):
        assert np.array_equal(backward.sample(k).sigma, block[k])


def test_uncached_block_leaves_no_chunks_behind(flow_params):
    flow = FlowRealization(flow_params)
    uncached = flow.gradient_block(0, 2 * CHUNK_STEPS + 5, cache=False)
    assert flow.cached_chunks == 0
    cached = flow.gradient_block(0, 2 * CHUNK_STEPS + 5)
    assert flow.cached_chunks == 3
    assert np.array_equal(uncached, cached)


def test_zero_amplitude_gives_zero_gradient():
    flow = FlowRealization(FlowParams(D=0.0, dt=0.01, seed=3))
    assert np.all(flow.sample(17).sigma == 0.0)


def test_samples_are_traceless(flow_params):
    block = FlowRealization(flow_params).gradient_block(0, 2048)
    assert np.allclose(block[:, 0, 0] + block[:, 1, 1], 0.0, atol=0.0)


def test_gradient_covariance_matches_tensor():
    D, dt, n = 0.3, 0.01, 400_000
    normals = np.random.default_rng(0).standard_normal((n, 3))
    s = traceless_gaussian(normals, D, dt).reshape(n, 4) * np.sqrt(dt / D)
    cov = s.T @ s / n
    # Components ordered (11, 12, 21, 22)
    expected = np.array([
        [1.0, 0.0, 0.0, -1.0],
        [0.0, 3.0, -1.0, 0.0],
        [0.0, -1.0, 3.0, 0.0],
        [-1.0, 0.0, 0.0, 1.0],
    ])
    assert np.allclose(cov, expected, atol=0.03)


def test_negative_step_index_is_rejected(flow_params):
    with pytest.raises(InvalidInputError):
        FlowRealization(flow_params).sample(-1)


def test_expm_traceless_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b, c = rng.normal(size=3) * 2.0
        m = np.array([[a, b], [c, -a]])
        for tau in (1e-6, 0.01, 0.7):
            assert np.allclose(expm_traceless(m, tau), expm(m * tau), rtol=1e-10, atol=1e-12)


def test_expm_traceless_is_unimodular():
    rng = np.random.default_rng(2)
    sigmas = rng.normal(size=(100, 2, 2))
    sigmas[:, 1, 1] = -sigmas[:, 0, 0]
    dets = np.linalg.det(expm_traceless(sigmas, 0.5))
    assert np.allclose(dets, 1.0, atol=1e-12)


def test_step_without_flow_or_diffusion_only_advances_time():
    params = FlowParams(D=0.0, kappa_d=0.0, dt=0.01)
    flow = FlowRealization(params)
    state = EvolutionState.fresh(0.0)
    new = step_evolution(state, flow.sample(0), params)
    assert np.array_equal(new.W, np.eye(2))
    assert np.array_equal(new.I_mat, np.eye(2))
    assert new.t == pytest.approx(0.01)


def test_pure_diffusion_spreads_like_heat_kernel():
    params = FlowParams(D=0.0, kappa_d=1e-3, dt=0.01)
    flow = FlowRealization(params)
    state = evolve_state(EvolutionState.fresh(0.0), flow, 1.0)
    assert np.allclose(state.I_mat, (1.0 + 2.0 * 1e-3 * 1.0) * np.eye(2), rtol=1e-12)
    assert np.array_equal(state.W, np.eye(2))


def test_advection_preserves_area_over_many_steps():
    params = FlowParams(D=0.1, kappa_d=0.0, dt=1e-3, seed=5)
    flow = FlowRealization(params)
    state = EvolutionState.fresh(0.0)
    for k in range(10_000):
        state = step_evolution(state, flow.sample(k), params)
    assert abs(np.linalg.det(state.W) - 1.0) < 1e-9
    assert abs(np.linalg.det(state.I_mat) - 1.0) < 1e-8
    state.validate()


def test_evolve_state_rejects_backward_time(flow_params):
    flow = FlowRealization(flow_params)
    state = evolve_state(EvolutionState.fresh(0.0), flow, 0.5)
    with pytest.raises(InvalidInputError):
        evolve_state(state, flow, 0.2)


def test_partial_steps_compose_to_full_step(flow_params):
    flow = FlowRealization(flow_params)
    whole = propagator(flow, 0.0, 0.05)
    split = propagator(flow, 0.023, 0.05) @ propagator(flow, 0.0, 0.023)
    assert np.allclose(whole, split, rtol=1e-12, atol=1e-14)


def test_horizon_map_matches_forward_propagator(flow_params):
    flow = FlowRealization(flow_params)
    t_h = 3.217
    horizon = HorizonMap(flow, t_h)
    t0 = np.array([0.0, 0.005, 1.0, 2.3333, t_h])
    maps = horizon.at(t0)
    for t, m in zip(t0, maps):
        assert np.allclose(m, propagator(flow, t, t_h), rtol=1e-9, atol=1e-12)


def test_horizon_map_rejects_times_after_horizon(flow_params):
    horizon = HorizonMap(FlowRealization(flow_params), 1.0)
    with pytest.raises(InvalidInputError):
        horizon.at(np.array([1.5]))


def test_lyapunov_vanishes_without_flow():
    estimate = estimate_lyapunov(FlowParams(D=0.0, dt=0.01, seed=1), n_steps=200, n_samples=4)
    assert estimate.lambda_ == 0.0
    assert estimate.stderr == 0.0


def test_lyapunov_is_positive_and_linear_in_amplitude():
    low = estimate_lyapunov(FlowParams(D=0.1, dt=0.01, seed=7), n_steps=2000, n_samples=64)
    high = estimate_lyapunov(FlowParams(D=0.2, dt=0.01, seed=8), n_steps=2000, n_samples=64)
    assert low.lambda_ > 0
    ratio = high.lambda_ / low.lambda_
    ratio_err = ratio * np.hypot(low.relative_error, high.relative_error)
    assert abs(ratio - 2.0) < 3.0 * ratio_err


def test_lyapunov_needs_two_samples(flow_params):
    with pytest.raises(InvalidInputError):
        estimate_lyapunov(flow_params, n_steps=10, n_samples=1)


@pytest.mark.slow
def test_lyapunov_calibration_precision():
    estimate = estimate_lyapunov(FlowParams(D=0.1, dt=1e-3, seed=2), n_steps=100_000, n_samples=1000)
    assert estimate.lambda_ > 0
    assert estimate.relative_error < 0.05


@pytest.mark.slow
def test_lyapunov_unchanged_when_step_is_halved():
    coarse = estimate_lyapunov(FlowParams(D=0.1, dt=0.01, seed=3), n_steps=20_000, n_samples=200)
    fine = estimate_lyapunov(FlowParams(D=0.1, dt=0.005, seed=4), n_steps=40_000, n_samples=200)
    assert abs(coarse.lambda_ - fine.lambda_) < 3.0 * np.hypot(coarse.stderr, fine.stderr)
