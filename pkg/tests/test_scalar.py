"""
Tests for the scalar module: pumping, evolution, culling, rendering and field moments.
"""

import numpy as np
import pytest

from config import FlowParams, GridConfig, PumpingConfig, WindowConfig
from flow import FlowRealization
from scalar import (
    BlobDatabase,
    FieldGrid,
    GridSpec,
    Pumping,
    cull,
    eval_point,
    evolve_to,
    field_moments,
    render,
    spawn_blobs,
    support_intersects,
)
from utils.validation import InvalidInputError

from conftest import empty_db


def _brute_force(db: BlobDatabase, spec: GridSpec) -> np.ndarray:
    """All blobs on all pixels with the same support truncation as the renderer."""
    X, Y = np.meshgrid(spec.x_centers, spec.y_centers, indexing="ij")
    out = np.zeros((spec.nx, spec.ny))
    born = db.born
    for c, I, det, theta in zip(db.centers[born], db.I[born], db.det_I[born], db.theta0[born]):
        dx, dy = X - c[0], Y - c[1]
        q = (I[1, 1] * dx * dx - 2.0 * I[0, 1] * dx * dy + I[0, 0] * dy * dy) / det
        out += np.where(q <= db.support_sigmas ** 2, theta / np.sqrt(det) * np.exp(-0.5 * q), 0.0)
    return out


def _random_db(n: int, window=(-8.0, -8.0, 8.0, 8.0), seed: int = 0) -> BlobDatabase:
    rng = np.random.default_rng(seed)
    db = BlobDatabase(window, cull_threshold=0.0)
    xmin, ymin, xmax, ymax = window
    pos = np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])
    db.add(np.zeros(n), pos, rng.normal(size=n))
    return db


def test_pumping_from_config_converts_units():
    pumping = Pumping.from_config(PumpingConfig(nu_over_lambda=0.01), lambda_=0.2, t_lambda=20.0)
    assert pumping.nu == pytest.approx(0.002)
    assert pumping.spawn_margin == pytest.approx(10.0)


def test_zero_rate_spawns_nothing():
    db = empty_db()
    spawn_blobs(db, Pumping(nu=0.0), 0.0, 10.0, rng_stream=1)
    assert len(db) == 0


def test_spawn_is_deterministic_per_stream():
    pumping = Pumping(nu=0.05)
    a = spawn_blobs(empty_db(), pumping, 0.0, 2.0, rng_stream=42)
    b = spawn_blobs(empty_db(), pumping, 0.0, 2.0, rng_stream=42)
    c = spawn_blobs(empty_db(), pumping, 0.0, 2.0, rng_stream=43)
    assert len(a) > 0
    assert np.array_equal(a.t0, b.t0)
    assert np.array_equal(a.r_c, b.r_c)
    assert np.array_equal(a.theta0, b.theta0)
    assert not (len(a) == len(c) and np.array_equal(a.r_c, c.r_c))


def test_spawn_count_follows_poisson_mean():
    # 94 x 94 window plus a margin of 3 on each side is 100 x 100
    pumping = Pumping(nu=0.01, spawn_margin=3.0)
    counts = [
        len(spawn_blobs(empty_db((0.0, 0.0, 94.0, 94.0)), pumping, 0.0, 10.0, rng_stream=s))
        for s in range(30)
    ]
    assert abs(np.mean(counts) - 1000.0) < 4.0 * np.sqrt(1000.0 / len(counts))


def test_spawned_blobs_lie_in_expanded_window():
    db = spawn_blobs(empty_db(), Pumping(nu=0.05), 0.0, 3.0, rng_stream=5)
    xmin, ymin, xmax, ymax = db.expanded_window
    assert np.all((db.r_c[:, 0] >= xmin) & (db.r_c[:, 0] <= xmax))
    assert np.all((db.r_c[:, 1] >= ymin) & (db.r_c[:, 1] <= ymax))
    assert np.all((db.t0 >= 0.0) & (db.t0 < 3.0))


def test_preimage_spawn_lands_in_window_at_horizon():
    params = FlowParams(D=0.1, kappa_d=0.0, dt=0.01, seed=2)
    flow = FlowRealization(params)
    pumping = Pumping(nu=0.05, spawn_frame="preimage", horizon=2.0)
    db = spawn_blobs(empty_db(), pumping, 0.0, 2.0, rng_stream=8, flow=flow)
    assert db.horizon == 2.0
    evolve_to(db, flow, 2.0)
    xmin, ymin, xmax, ymax = db.expanded_window
    c = db.centers
    assert np.all((c[:, 0] >= xmin - 1e-9) & (c[:, 0] <= xmax + 1e-9))
    assert np.all((c[:, 1] >= ymin - 1e-9) & (c[:, 1] <= ymax + 1e-9))


def test_preimage_spawn_past_horizon_is_rejected(flow_params):
    pumping = Pumping(nu=0.05, spawn_frame="preimage", horizon=1.0)
    with pytest.raises(InvalidInputError):
        spawn_blobs(empty_db(), pumping, 0.0, 2.0, rng_stream=1, flow=FlowRealization(flow_params))


def test_evolve_to_current_time_is_identity(flow_params):
    db = _random_db(5)
    before = db.copy()
    evolve_to(db, FlowRealization(flow_params), 0.0)
    assert np.array_equal(db.W, before.W)
    assert np.array_equal(db.I, before.I)


def test_static_flow_leaves_blob_unchanged():
    flow = FlowRealization(FlowParams(D=0.0, kappa_d=0.0, dt=0.01))
    db = _random_db(1)
    center = db.centers.copy()
    evolve_to(db, flow, 1.5)
    assert np.array_equal(db.centers, center)
    assert np.array_equal(db.I[0], np.eye(2))
    assert db.t_now == 1.5


def test_peak_amplitude_decays_only_with_diffusion():
    advect = FlowRealization(FlowParams(D=0.1, kappa_d=0.0, dt=0.01, seed=3))
    db = _random_db(3)
    peaks = db.peak_amplitudes.copy()
    evolve_to(db, advect, 2.0)
    assert np.allclose(db.peak_amplitudes, peaks, rtol=1e-12)
    assert np.allclose(np.linalg.det(db.W), 1.0, atol=1e-10)

    diffuse = FlowRealization(FlowParams(D=0.1, kappa_d=1e-2, dt=0.01, seed=3))
    db = _random_db(3)
    evolve_to(db, diffuse, 2.0)
    assert np.all(db.peak_amplitudes < peaks)


def test_tracked_determinant_matches_moment_of_inertia():
    flow = FlowRealization(FlowParams(D=0.1, kappa_d=1e-3, dt=0.01, seed=6))
    db = _random_db(4)
    evolve_to(db, flow, 3.0)
    assert np.allclose(db.det_I, np.linalg.det(db.I), rtol=1e-10)


def test_blobs_born_mid_step_get_partial_first_step(flow_params):
    flow = FlowRealization(flow_params)
    db = empty_db()
    db.add(np.array([0.0, 0.005]), np.zeros((2, 2)), np.ones(2))
    evolve_to(db, flow, 0.003)
    assert np.array_equal(db.born, [True, False])
    assert np.array_equal(db.W[1], np.eye(2))
    evolve_to(db, flow, 0.05)
    assert np.allclose(db.t_state, 0.05)
    assert not np.allclose(db.W[0], db.W[1])


def test_cull_keeps_everything_with_zero_threshold():
    db = _random_db(20)
    assert cull(db) == 0
    assert len(db) == 20


def test_cull_removes_faded_blob():
    db = empty_db(cull_threshold=0.5)
    db.add(np.zeros(2), np.zeros((2, 2)), np.ones(2))
    db.I[0] = 4.0 * np.eye(2)
    db.det_I[0] = 16.0
    assert cull(db) == 1
    assert len(db) == 1
    assert db.det_I[0] == 1.0


def test_cull_removes_blob_outside_expanded_window():
    db = empty_db(cull_threshold=0.0, margin=3.0)
    db.add(np.zeros(2), np.array([[0.0, 0.0], [100.0, 0.0]]), np.ones(2))
    assert cull(db) == 1
    assert db.r_c[0, 0] == 0.0


def test_cull_tests_the_support_box_not_the_ellipse():
    # Needle along the anti-diagonal beyond the corner of the expanded window (+-13)
    db = empty_db(cull_threshold=0.0, margin=3.0)
    db.add(np.zeros(1), np.array([[16.0, 16.0]]), np.ones(1))
    long_var, short_var = 4.0, 1e-4
    db.I[0] = 0.5 * np.array([
        [long_var + short_var, short_var - long_var],
        [short_var - long_var, long_var + short_var],
    ])
    db.det_I[0] = long_var * short_var

    # every 6-sigma ellipse point has x + y > 26
    u = np.linspace(-1.0, 1.0, 201)
    along = 6.0 * np.sqrt(long_var) * np.column_stack([u, -u]) / np.sqrt(2.0)
    across = 6.0 * np.sqrt(short_var) * np.ones((1, 2)) / np.sqrt(2.0)
    ellipse = np.concatenate([db.r_c[0] + along + across, db.r_c[0] + along - across])
    assert np.all(ellipse.sum(axis=1) > 26.0)

    assert support_intersects(db, db.expanded_window)[0]
    assert cull(db) == 0


def test_eval_point_of_fresh_blob():
    assert eval_point(empty_db(), np.zeros(2)) == 0.0
    db = empty_db()
    db.add(np.zeros(1), np.array([[1.0, 2.0]]), np.array([0.7]))
    assert eval_point(db, np.array([1.0, 2.0])) == pytest.approx(0.7, rel=1e-15)
    assert eval_point(db, np.array([2.0, 2.0])) == pytest.approx(0.7 * np.exp(-0.5), rel=1e-14)


def test_render_empty_database_is_zero():
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=0.25, nx=64, ny=64)
    grid = render(empty_db((-8.0, -8.0, 8.0, 8.0)), spec)
    assert np.all(grid.values == 0.0)


def test_render_single_blob_matches_closed_form():
    db = empty_db((-8.0, -8.0, 8.0, 8.0))
    db.add(np.zeros(1), np.array([[0.3, -0.2]]), np.array([1.3]))
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=0.125, nx=128, ny=128)
    grid = render(db, spec, tile=32, sigmas=100.0)
    X, Y = np.meshgrid(spec.x_centers, spec.y_centers, indexing="ij")
    expected = 1.3 * np.exp(-0.5 * ((X - 0.3) ** 2 + (Y + 0.2) ** 2))
    assert np.max(np.abs(grid.values - expected)) < 1e-12


def test_render_matches_brute_force_for_evolved_blobs():
    db = _random_db(50)
    flow = FlowRealization(FlowParams(D=0.1, kappa_d=1e-3, dt=0.01, seed=9))
    evolve_to(db, flow, 4.0)
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=16.0 / 256, nx=256, ny=256)
    grid = render(db, spec, tile=32)
    assert np.max(np.abs(grid.values - _brute_force(db, spec))) < 1e-10


def test_render_is_independent_of_workers_and_tiles():
    db = _random_db(40, seed=3)
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=0.125, nx=128, ny=128)
    serial = render(db, spec, tile=16, workers=1)
    threaded = render(db, spec, tile=16, workers=4)
    assert np.array_equal(serial.values, threaded.values)
    coarse = render(db, spec, tile=64, workers=1)
    assert np.max(np.abs(serial.values - coarse.values)) < 1e-12


def test_render_rejects_grid_outside_window():
    spec = GridSpec(origin=(-20.0, -20.0), pixel_size=1.0, nx=40, ny=40)
    with pytest.raises(InvalidInputError):
        render(empty_db(), spec)


def test_grid_spec_from_config():
    spec = GridSpec.from_config(WindowConfig(x0=-75, y0=-75, width=150, height=150), GridConfig(nx=4096, ny=4096))
    assert spec.pixel_size == pytest.approx(150.0 / 4096)
    assert spec.extent == pytest.approx((-75.0, -75.0, 75.0, 75.0))


@pytest.mark.parametrize("pixel_size", [0.0, -0.5, float("nan"), float("inf")])
def test_grid_spec_rejects_bad_pixel_size(pixel_size):
    with pytest.raises(InvalidInputError, match="pixel_size"):
        GridSpec(origin=(0.0, 0.0), pixel_size=pixel_size, nx=4, ny=4)


def test_field_grid_rejects_mismatched_values():
    with pytest.raises(InvalidInputError):
        FieldGrid(spec=GridSpec((0.0, 0.0), 1.0, 4, 4), values=np.zeros((4, 5)))


def test_constant_field_has_undefined_shape_moments():
    moments = field_moments(FieldGrid(spec=GridSpec((0.0, 0.0), 1.0, 8, 8), values=np.full((8, 8), 2.5)))
    assert moments.variance == 0.0
    assert moments.skewness is None
    assert moments.excess_kurtosis is None


def test_gaussian_noise_has_small_excess_kurtosis():
    values = np.random.default_rng(4).standard_normal((256, 256))
    moments = field_moments(FieldGrid(spec=GridSpec((0.0, 0.0), 1.0, 256, 256), values=values))
    assert abs(moments.excess_kurtosis) < 0.1
    assert moments.kurtosis_tolerance == pytest.approx(5.0 / 256)
    assert moments.variance == pytest.approx(1.0, rel=0.02)


def test_blob_integral_is_conserved():
    db = empty_db((-16.0, -16.0, 16.0, 16.0), cull_threshold=0.0)
    db.add(np.zeros(1), np.zeros((1, 2)), np.array([1.3]))
    evolve_to(db, FlowRealization(FlowParams(D=0.1, kappa_d=1e-2, dt=0.01, seed=12)), 3.0)
    assert not np.allclose(db.I[0], db.I[0, 0, 0] * np.eye(2))
    spec = GridSpec(origin=(-16.0, -16.0), pixel_size=0.0625, nx=512, ny=512)
    total = render(db, spec, tile=64).values.sum() * spec.pixel_size ** 2
    assert total == pytest.approx(2.0 * np.pi * 1.3, rel=1e-6)


def test_pure_diffusion_matches_heat_kernel():
    db = empty_db((-8.0, -8.0, 8.0, 8.0), cull_threshold=0.0)
    db.add(np.zeros(1), np.array([[0.5, -1.0]]), np.array([0.8]))
    evolve_to(db, FlowRealization(FlowParams(D=0.0, kappa_d=0.05, dt=0.01)), 2.0)
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=0.125, nx=128, ny=128)
    grid = render(db, spec, tile=32, sigmas=100.0)
    var = 1.0 + 2.0 * 0.05 * 2.0
    X, Y = np.meshgrid(spec.x_centers, spec.y_centers, indexing="ij")
    expected = 0.8 / var * np.exp(-0.5 * ((X - 0.5) ** 2 + (Y + 1.0) ** 2) / var)
    assert np.max(np.abs(grid.values - expected)) < 1e-8


def test_render_commutes_with_translation():
    db = _random_db(30, seed=5)
    evolve_to(db, FlowRealization(FlowParams(D=0.1, kappa_d=1e-3, dt=0.01, seed=4)), 2.0)
    shift = np.array([1.25, -0.75])
    moved = db.copy()
    moved.r_c = moved.r_c + np.linalg.solve(db.W, np.broadcast_to(shift, (len(db), 2))[..., None])[..., 0]
    assert np.allclose(moved.centers, db.centers + shift, atol=1e-12)

    spec = GridSpec(origin=(-6.0, -6.0), pixel_size=0.125, nx=96, ny=96)
    shifted = GridSpec(origin=(-6.0 + shift[0], -6.0 + shift[1]), pixel_size=0.125, nx=96, ny=96)
    a = render(db, spec, tile=32)
    b = render(moved, shifted, tile=32)
    assert np.max(np.abs(a.values - b.values)) < 1e-12


def test_support_truncation_error_is_small():
    db = _random_db(20, seed=7)
    evolve_to(db, FlowRealization(FlowParams(D=0.1, kappa_d=1e-2, dt=0.01, seed=5)), 2.0)
    spec = GridSpec(origin=(-8.0, -8.0), pixel_size=0.0625, nx=256, ny=256)
    six = render(db, spec, tile=32, sigmas=6.0)
    eight = render(db, spec, tile=32, sigmas=8.0)
    assert np.max(np.abs(eight.values - six.values)) <= 1e-7 * np.max(np.abs(eight.values))


def test_blob_count_reaches_steady_state():
    flow = FlowRealization(FlowParams(D=0.1, kappa_d=0.5, dt=0.05, seed=21))
    pumping = Pumping(nu=0.05, spawn_margin=3.0)
    db = empty_db((-8.0, -8.0, 8.0, 8.0), cull_threshold=0.3)
    counts, spawned = [], 0
    for cycle in range(60):
        before = len(db)
        spawn_blobs(db, pumping, float(cycle), float(cycle + 1), rng_stream=1000 + cycle, flow=flow)
        spawned += len(db) - before
        evolve_to(db, flow, float(cycle + 1))
        cull(db)
        counts.append(len(db))
    early, late = np.mean(counts[30:45]), np.mean(counts[45:])
    assert late > 0
    assert abs(late - early) < 0.25 * early
    assert max(counts[30:]) < 0.2 * spawned
