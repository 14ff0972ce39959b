"""
Tests for chordal reduction, the slit-map zipper and driving-function diffusivity.
"""

import numpy as np
import pytest

from config import LoewnerConfig
from contour import Contour
from loewner import (
    ChordalCurve,
    DrivingFunction,
    apply_slit_maps,
    brownian_drivings,
    contraction_factors,
    effective_diffusivity,
    increment_autocorrelation,
    prepare_chordal,
    resample_polyline,
    rescale_curve,
    signed_area,
    unzip,
    zip_curve,
)
from utils.validation import (
    ChordalPreparationError,
    InsufficientEnsembleError,
    InvalidInputError,
)

from conftest import circle


def _vertical_slit(height: float = 1.0, n: int = 11) -> ChordalCurve:
    return ChordalCurve(points=1j * np.linspace(0.0, height, n))


def _wiggle(n: int = 200) -> ChordalCurve:
    s = np.linspace(0.0, 1.0, n)
    return ChordalCurve(points=0.3 * np.sin(3.0 * s) + 1j * s)


def test_chordal_curve_validation():
    with pytest.raises(InvalidInputError):
        ChordalCurve(points=[0.1j, 0.5j])
    with pytest.raises(InvalidInputError):
        ChordalCurve(points=[0.0, -0.5j])
    with pytest.raises(InvalidInputError):
        ChordalCurve(points=[0.0, 0.5j, 0.5j])
    curve = ChordalCurve.from_xy(np.array([[0.0, 0.0], [1.0, 2.0]]))
    assert curve.points[1] == 1.0 + 2.0j
    assert curve.diameter == pytest.approx(2.0)


def test_driving_function_validation():
    with pytest.raises(InvalidInputError):
        DrivingFunction(t=[0.1, 0.2], xi=[0.0, 0.0])
    with pytest.raises(InvalidInputError):
        DrivingFunction(t=[0.0, 0.2, 0.2], xi=[0.0, 0.0, 0.0])
    with pytest.raises(InvalidInputError):
        DrivingFunction(t=[0.0, 0.2], xi=[0.0])


def test_vertical_slit_has_constant_driving():
    driving = unzip(_vertical_slit())
    assert np.allclose(driving.xi, 0.0, atol=1e-12)
    assert np.allclose(driving.t, np.linspace(0.0, 1.0, 11) ** 2 / 4.0, rtol=1e-12, atol=1e-15)
    assert driving.total_time == pytest.approx(0.25)


def test_constant_driving_zips_to_vertical_slit():
    t = np.linspace(0.0, 1.0, 101)
    curve = zip_curve(DrivingFunction(t=t, xi=np.full(t.size, 0.3)))
    assert np.allclose(curve.points, 0.3 + 2.0j * np.sqrt(t), atol=1e-12)


def test_zip_inverts_unzip():
    curve = _wiggle()
    driving = unzip(curve)
    assert driving.xi[0] == 0.0
    assert np.all(np.diff(driving.t) > 0)
    rebuilt = zip_curve(driving)
    assert np.allclose(rebuilt.points, curve.points, atol=1e-8)


def test_slit_maps_send_vertices_to_the_axis():
    curve = _wiggle(50)
    driving = unzip(curve)
    n = len(driving)
    tip = apply_slit_maps(driving, curve.points[-1:], n_steps=n - 2)[0]
    assert tip.real == pytest.approx(driving.xi[-1], abs=1e-10)
    assert 0.25 * tip.imag ** 2 == pytest.approx(driving.t[-1] - driving.t[-2], rel=1e-8)
    image = apply_slit_maps(driving, curve.points[-1:])[0]
    assert image.imag == pytest.approx(0.0, abs=1e-6)
    assert image.real == pytest.approx(driving.xi[-1], abs=1e-6)
    with pytest.raises(InvalidInputError):
        apply_slit_maps(driving, curve.points, n_steps=n)


def test_rescale_curve():
    scaled = rescale_curve(_vertical_slit(), 2.0, 0.5)
    assert np.allclose(scaled.points, 0.5j * np.linspace(0.0, 1.0, 11))
    assert unzip(scaled).total_time == pytest.approx(0.25 * 0.25)
    with pytest.raises(InvalidInputError):
        rescale_curve(_vertical_slit(), 0.0, 1.0)


def test_prepare_chordal_of_circle():
    c = circle(5.0, 1000, center=(3.0, 10.0))
    curve = prepare_chordal(c, min_perimeter=10.0, drop_fraction=0.05, spacing=0.1)
    z = curve.points
    assert z[0] == 0.0
    assert np.all(z[1:].imag > 0)
    # counterclockwise from the lowest point: first moves right
    assert z[1].real > 0
    arc = np.sum(np.abs(np.diff(z)))
    assert arc == pytest.approx(0.95 * 2.0 * np.pi * 5.0, rel=0.01)
    driving = unzip(curve)
    assert np.all(np.diff(driving.t) > 0)


def test_prepare_chordal_orientation_does_not_matter():
    c = circle(4.0, 600)
    reversed_c = Contour(vertices=c.vertices[::-1], closed=True)
    assert signed_area(c.vertices) > 0 > signed_area(reversed_c.vertices)
    a = prepare_chordal(c, spacing=0.2)
    b = prepare_chordal(reversed_c, spacing=0.2)
    assert len(a) == len(b)
    assert np.allclose(a.points, b.points, atol=1e-9)


def test_prepare_chordal_rejections():
    with pytest.raises(ChordalPreparationError):
        prepare_chordal(Contour(vertices=[[0, 0], [1, 1], [2, 0]], closed=False))
    with pytest.raises(ChordalPreparationError):
        prepare_chordal(circle(1.0, 100), min_perimeter=10.0)
    with pytest.raises(ChordalPreparationError):
        prepare_chordal(circle(5.0, 500), grid_window=(-5.0, -10.0, 10.0, 10.0))


def test_resample_polyline_keeps_ends():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    out = resample_polyline(pts, 1.0)
    assert len(out) == 8
    assert np.allclose(out[0], pts[0])
    assert np.allclose(out[-1], pts[-1])
    assert len(resample_polyline(pts, 0.01, max_points=50)) == 50


def test_contraction_factors():
    assert contraction_factors(LoewnerConfig(), 0.04, 20.0) == (1.0, 1.0)
    assert contraction_factors(LoewnerConfig(contraction="L_over_rd"), 0.04, 20.0) == (1.0, 0.04)
    fx, fy = contraction_factors(LoewnerConfig(contraction="exp_lambda_T"), 0.04, 2.0)
    assert fx == pytest.approx(np.exp(2.0))
    assert fx * fy == pytest.approx(1.0)
    custom = LoewnerConfig(contraction="custom", factor_x=2.0, factor_y=0.25)
    assert contraction_factors(custom, 0.04, 2.0) == (2.0, 0.25)


def test_brownian_ensemble_recovers_kappa():
    drivings = brownian_drivings(1000, 400, 1.0, 6.0, seed=3)
    estimate = effective_diffusivity(drivings)
    assert estimate.n_contours == 1000
    assert estimate.t_window == pytest.approx((0.05, 0.5))
    assert abs(estimate.kappa - 6.0) < 4.0 * estimate.stderr
    assert estimate.kappa == pytest.approx(6.0, rel=0.2)
    assert estimate.kappa_ratio == pytest.approx(6.0, rel=0.2)
    assert estimate.curve.shape == (400, 3)


def test_static_drivings_have_zero_kappa():
    estimate = effective_diffusivity(brownian_drivings(5, 50, 1.0, 0.0), n_ladder=50)
    assert estimate.kappa == 0.0
    assert estimate.stderr == 0.0


def test_diffusivity_needs_an_ensemble():
    drivings = brownian_drivings(3, 50, 1.0, 2.0)
    with pytest.raises(InsufficientEnsembleError):
        effective_diffusivity(drivings[:1])
    with pytest.raises(InsufficientEnsembleError):
        effective_diffusivity(drivings, t_window=(0.5, 2.0))
    with pytest.raises(InvalidInputError):
        effective_diffusivity(drivings, t_window=(0.5, 0.1))


def test_brownian_increments_are_uncorrelated():
    driving = brownian_drivings(1, 400, 1.0, 4.0, seed=11)[0]
    acf = increment_autocorrelation(driving, n_lags=5, n_ladder=400)
    assert acf.shape == (6,)
    assert acf[0] == pytest.approx(1.0)
    assert np.all(np.abs(acf[1:]) < 0.2)
    flat = DrivingFunction(t=[0.0, 0.5, 1.0], xi=[0.0, 0.0, 0.0])
    assert np.array_equal(increment_autocorrelation(flat, n_lags=3, n_ladder=10), [1.0, 0.0, 0.0, 0.0])


def _crossings(points: np.ndarray, tol: float = 1e-3) -> int:
    """Proper crossings between non-adjacent segments of a polyline of complex points."""
    p, d = points[:-1], np.diff(points)
    n = d.size
    rel = p[None, :] - p[:, None]
    denom = (np.conj(d)[:, None] * d[None, :]).imag
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (np.conj(rel) * d[None, :]).imag / denom
        u = (np.conj(rel) * d[:, None]).imag / denom
    hit = (s > tol) & (s < 1 - tol) & (u > tol) & (u < 1 - tol)
    i, j = np.triu_indices(n, k=2)
    return int(np.count_nonzero(hit[i, j]))


def _wobbly_loop(n: int = 2000) -> Contour:
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = 5.0 * (1.0 + 0.15 * np.cos(3.0 * phi))
    return Contour(vertices=np.column_stack([r * np.cos(phi), 2.0 + r * np.sin(phi)]), closed=True)


def test_unzip_recovers_brownian_driving_pathwise():
    driving = brownian_drivings(1, 2000, 1.0, 6.0, seed=5)[0]
    back = unzip(zip_curve(driving))
    assert len(back) == len(driving)
    assert np.allclose(back.t, driving.t, rtol=1e-8, atol=1e-12)
    rms = np.sqrt(np.mean((back.xi - driving.xi) ** 2))
    assert rms < 1e-6 * np.sqrt(6.0 * driving.total_time)


def test_prepared_loop_survives_unzip_and_zip():
    curve = prepare_chordal(_wobbly_loop(), spacing=0.1)
    rebuilt = zip_curve(unzip(curve))
    assert len(rebuilt) == len(curve)
    assert np.max(np.abs(rebuilt.points - curve.points)) < 1e-3 * curve.diameter


def test_mirrored_curve_negates_driving():
    curve = _wiggle(300)
    driving = unzip(curve)
    mirrored = unzip(ChordalCurve(points=-np.conj(curve.points)))
    assert np.allclose(mirrored.t, driving.t, rtol=1e-12, atol=0.0)
    assert np.allclose(mirrored.xi, -driving.xi, rtol=0.0, atol=1e-12)


@pytest.mark.parametrize("s", [0.5, 3.0])
def test_isotropic_scaling_covariance(s):
    curve = _wiggle(300)
    driving = unzip(curve)
    scaled = unzip(rescale_curve(curve, s, s))
    assert np.allclose(scaled.t, s * s * driving.t, rtol=1e-9, atol=0.0)
    assert np.allclose(scaled.xi, s * driving.xi, rtol=0.0, atol=1e-9 * s)


def test_capacity_is_additive_across_a_split():
    curve = _wiggle(200)
    full = unzip(curve)
    m = 80
    head = unzip(ChordalCurve(points=curve.points[: m + 1]))
    images = apply_slit_maps(head, curve.points[m:])
    tail = unzip(ChordalCurve(points=np.concatenate([[images[0].real], images[1:]])))
    assert head.total_time + tail.total_time == pytest.approx(full.total_time, abs=1e-8)
    assert np.allclose(head.total_time + tail.t, full.t[m:], rtol=0.0, atol=1e-8)
    assert np.allclose(tail.xi[1:], full.xi[m + 1:], rtol=0.0, atol=1e-8)


def test_low_kappa_traces_are_simple():
    simple = sum(
        _crossings(zip_curve(d).points) for d in brownian_drivings(20, 500, 1.0, 8.0 / 3.0, seed=31)
    )
    filling = sum(
        _crossings(zip_curve(d).points) for d in brownian_drivings(20, 500, 1.0, 8.0, seed=31)
    )
    assert filling > 0
    assert simple < 0.2 * filling


def test_zip_unzip_chain_preserves_kappa():
    drivings = brownian_drivings(60, 400, 1.0, 6.0, seed=8)
    chained = [unzip(zip_curve(d)) for d in drivings]
    for a, b in zip(drivings, chained):
        assert np.max(np.abs(a.xi - b.xi)) < 1e-9
    raw = effective_diffusivity(drivings)
    via_traces = effective_diffusivity(chained)
    assert via_traces.kappa == pytest.approx(raw.kappa, rel=1e-6)
    assert via_traces.stderr == pytest.approx(raw.stderr, rel=1e-6)


@pytest.mark.slow
def test_sle6_traces_at_full_resolution():
    drivings = brownian_drivings(100, 10_000, 1.0, 6.0, seed=6)
    chained = []
    for d in drivings:
        back = unzip(zip_curve(d))
        rms = np.sqrt(np.mean((back.xi - d.xi) ** 2))
        assert rms < 1e-3 * np.sqrt(6.0 * d.total_time)
        chained.append(back)
    raw = effective_diffusivity(drivings)
    estimate = effective_diffusivity(chained)
    assert estimate.kappa == pytest.approx(raw.kappa, rel=1e-6)
    assert abs(estimate.kappa - 6.0) < 4.0 * estimate.stderr


@pytest.mark.slow
def test_sle6_ensemble_recovers_kappa():
    drivings = brownian_drivings(4000, 400, 1.0, 6.0, seed=60)
    estimate = effective_diffusivity([unzip(zip_curve(d)) for d in drivings])
    assert estimate.n_contours == 4000
    assert estimate.kappa == pytest.approx(6.0, rel=0.1)
