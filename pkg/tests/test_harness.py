"""
End-to-end tests of the staged pipeline on a tiny experiment.
"""

import json

import numpy as np
import pytest

from config import ExperimentConfig
from exporters import contour_exporter, report_exporter, snapshot_exporter, table_exporter
from flow import LyapunovEstimate
from harness import (
    RunLayout,
    cycle_stream,
    evaluate_checks,
    group_label,
    resolve_layout,
    run_all,
    run_analyze,
    run_calibrate,
    run_contours,
    run_fractal,
    run_loewner,
    run_pdf,
    run_report,
    run_simulate,
    summarize,
)
from loewner import brownian_drivings
from scalar import FieldGrid
from utils.validation import ConfigurationError, InvalidInputError

from conftest import gaussian_bump_grid


def _layout(cfg: ExperimentConfig) -> RunLayout:
    return resolve_layout(cfg)


def _values(stem) -> bytes:
    return snapshot_exporter.paths(stem)[0].read_bytes()


def _write_bump_snapshot(layout: RunLayout, t_lambda: float = 1.0) -> None:
    grid = gaussian_bump_grid(radius=5.0, pixel=0.05, n=256)
    snapshot_exporter.write_snapshot(grid, layout.snapshot_stem(t_lambda), {"t_lambda": t_lambda, "flow_seed": 4})


def test_layout_labels_sort_by_time(tmp_path, small_config):
    assert RunLayout.label(0.5) == "snap_T00000.500"
    assert RunLayout.label(12.25) < RunLayout.label(100.0)
    assert resolve_layout(small_config).root == tmp_path / "run"
    assert resolve_layout(small_config, str(tmp_path / "other")).root == tmp_path / "other"


def test_cycle_streams_are_distinct():
    seeds = {cycle_stream(9, k) for k in range(50)}
    assert len(seeds) == 50
    assert cycle_stream(9, 3) == cycle_stream(9, 3)
    assert cycle_stream(9, 3, part=1) != cycle_stream(9, 3)
    assert cycle_stream(10, 3) != cycle_stream(9, 3)


def test_group_label():
    meta = {"flow_seed": 4, "t_lambda": 1.0, "pixel_size": 0.25}
    assert group_label(meta) == "seed4_T1.0_rd0.25"
    assert group_label({}) == "seedna_Tna_rdnan"


def test_configured_lambda_skips_calibration(small_config):
    layout = _layout(small_config)
    estimate = run_calibrate(small_config, layout)
    assert estimate.lambda_ == 1.0
    assert estimate.stderr == 0.0
    assert not layout.calibration.exists()


def test_calibration_is_reused_unless_forced(small_config):
    small_config.flow.lambda_estimate = None
    small_config.calibration_steps = 200
    small_config.calibration_samples = 4
    layout = _layout(small_config)
    first = run_calibrate(small_config, layout)
    assert first.lambda_ > 0
    data = json.loads(layout.calibration.read_text())
    assert data["key"]["n_steps"] == 200
    assert data["dt_lambda"] == pytest.approx(0.01 * first.lambda_)

    data["lambda"] = 123.0
    layout.calibration.write_text(json.dumps(data))
    assert run_calibrate(small_config, layout).lambda_ == 123.0
    assert run_calibrate(small_config, layout, force=True).lambda_ == pytest.approx(first.lambda_)

    small_config.flow.seed = 5
    assert run_calibrate(small_config, layout).lambda_ != 123.0


def test_simulate_writes_snapshots_and_checkpoints(small_config):
    layout = _layout(small_config)
    result = run_simulate(small_config, layout, run_calibrate(small_config, layout))
    assert [s.name for s in result.snapshots] == ["snap_T00000.500", "snap_T00001.000"]
    assert len(result.checkpoints) == 2
    assert [t for t, _ in result.blob_counts] == pytest.approx([0.5, 1.0])
    assert layout.snapshot_stems() == result.snapshots

    grid, meta = snapshot_exporter.read_snapshot(result.snapshots[-1])
    assert grid.values.shape == (64, 64)
    assert np.all(np.isfinite(grid.values))
    assert meta["t_lambda"] == 1.0
    assert meta["lambda"] == 1.0
    assert meta["seed"] == 9
    assert meta["params"]["name"] == "tiny"

    sidecar = report_exporter.read_json(result.checkpoints[0].with_suffix(".json"))
    assert sidecar["spawned_to"] == pytest.approx(0.5)
    db = snapshot_exporter.read_checkpoint(result.checkpoints[0])
    assert db.t_now == pytest.approx(0.5)


def test_simulation_is_deterministic(tmp_path, small_config):
    lyapunov = run_calibrate(small_config, _layout(small_config))
    a = run_simulate(small_config, RunLayout(tmp_path / "a"), lyapunov)
    b = run_simulate(small_config, RunLayout(tmp_path / "b"), lyapunov, workers=3)
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert _values(sa) == _values(sb)

    small_config.seed = 10
    c = run_simulate(small_config, RunLayout(tmp_path / "c"), lyapunov)
    assert _values(c.snapshots[-1]) != _values(a.snapshots[-1])


def test_resume_reproduces_the_straight_run(tmp_path, small_config):
    lyapunov = run_calibrate(small_config, _layout(small_config))
    straight = run_simulate(small_config, RunLayout(tmp_path / "straight"), lyapunov)
    resumed = run_simulate(
        small_config, RunLayout(tmp_path / "resumed"), lyapunov, resume_from=straight.checkpoints[0]
    )
    assert [s.name for s in resumed.snapshots] == ["snap_T00001.000"]
    assert (
        _values(resumed.snapshots[0])
        == _values(straight.snapshots[-1])
    )


def test_simulate_rejects_non_positive_lambda(small_config):
    zero = LyapunovEstimate(lambda_=0.0, stderr=0.0, n_steps=0, n_samples=0, dt=0.01)
    with pytest.raises(ConfigurationError):
        run_simulate(small_config, _layout(small_config), zero)


def test_contours_of_simulated_snapshot(small_config):
    layout = _layout(small_config)
    sim = run_simulate(small_config, layout, run_calibrate(small_config, layout))
    summary = run_contours(small_config, layout, sim.snapshots[-1])
    assert summary["label"] == "snap_T00001.000"
    assert summary["t_lambda"] == 1.0
    assert summary["n_contours"] == summary["n_closed"] + summary["n_boundary"]
    assert summary["no_nodal_lines"] == (summary["n_contours"] == 0)
    assert (layout.contours_dir / "snap_T00001.000.txt").exists()
    assert (layout.contours_dir / "snap_T00001.000.bin").exists()
    assert (layout.analysis_dir / "snap_T00001.000" / "field.svg").exists()
    records = contour_exporter.read(layout.contours_dir / "snap_T00001.000.bin")
    assert len(records) == summary["n_contours"]
    meta = contour_exporter.read_metadata(layout.contours_dir / "snap_T00001.000.txt")
    assert meta["pixel_size"] == pytest.approx(0.25)
    assert meta["label"] == "snap_T00001.000"


def test_zero_field_skips_later_stages(small_config):
    layout = _layout(small_config)
    grid = gaussian_bump_grid(radius=1.0, pixel=0.25, n=64)
    zero = FieldGrid(spec=grid.spec, values=np.zeros((64, 64)))
    snapshot_exporter.write_snapshot(zero, layout.snapshot_stem(1.0), {"t_lambda": 1.0})
    summary = run_analyze(small_config, layout)
    assert summary["no_nodal_lines"]
    assert summary["snapshots"][0]["moments"]["excess_kurtosis"] is None
    assert "fractal" not in summary
    assert "pdf" not in summary
    assert (layout.analysis_dir / "summary.json").exists()


def test_analyze_needs_snapshots(small_config):
    with pytest.raises(InvalidInputError):
        run_analyze(small_config, _layout(small_config))


def test_fractal_and_pdf_of_single_circle(small_config):
    layout = _layout(small_config)
    _write_bump_snapshot(layout)
    small_config.analysis.below_L = (0.1, 0.8)
    run_contours(small_config, layout, layout.snapshot_stem(1.0))
    files = layout.contour_files()

    fractal = run_fractal(small_config, layout, files)
    assert fractal["n_contours"] == 1
    rows = {(r["q"], r["window"]): r for r in fractal["dimensions"]}
    assert rows[(0.0, "below_L")]["D_q"] == pytest.approx(1.0, abs=0.1)
    assert rows[(0.0, "above_L")]["D_q"] is None
    assert rows[(0.0, "above_L")]["reason"]
    assert (layout.analysis_dir / "fractal" / "fractal.json").exists()

    pdf = run_pdf(small_config, layout, files)
    assert pdf["perimeter"]["n"] == 1
    assert pdf["nu_over_lambda"] == 0.05
    assert pdf["perimeter"]["mode"]["location"] is None
    assert "reason" in pdf["perimeter"]["left_tail"]
    assert "reason" in pdf["radius"]["poisson_overlay"]
    assert (layout.analysis_dir / "pdf" / "pdf.json").exists()


def test_loewner_without_qualifying_contours(small_config):
    layout = _layout(small_config)
    _write_bump_snapshot(layout)
    run_contours(small_config, layout, layout.snapshot_stem(1.0))
    small_config.loewner.min_perimeter = 1e6
    summary = run_loewner(small_config, layout, layout.contour_files())
    assert summary["groups"] == []
    assert summary["n_candidates"] == 0
    assert "reason" in summary
    assert (layout.loewner_dir / "kappa.json").exists()


def test_loewner_single_contour_is_not_an_ensemble(small_config):
    layout = _layout(small_config)
    _write_bump_snapshot(layout)
    run_contours(small_config, layout, layout.snapshot_stem(1.0))
    summary = run_loewner(small_config, layout, layout.contour_files())
    assert summary["n_candidates"] == 1
    assert len(summary["groups"]) == 1
    group = summary["groups"][0]
    assert group["group"] == "seed4_T1.0_rd0.05"
    assert group["n_drivings"] == 1
    assert group["kappa"] is None
    assert group["reason"]
    assert (layout.loewner_dir / "drivings.csv").exists()


def test_loewner_recovers_kappa_of_injected_drivings(tmp_path, small_config):
    layout = _layout(small_config)
    drivings = brownian_drivings(400, 400, 1.0, 6.0, seed=21)
    path = table_exporter.write_frame(table_exporter.drivings_frame(drivings, "bm"), tmp_path / "bm.csv")
    summary = run_loewner(small_config, layout, [], [path])
    assert [g["group"] for g in summary["groups"]] == ["bm"]
    group = summary["groups"][0]
    assert group["n_drivings"] == 400
    assert group["kappa"] == pytest.approx(6.0, rel=0.25)
    assert abs(group["increment_lag1_correlation"]) < 0.1
    assert (layout.loewner_dir / "msd.csv").exists()
    assert (layout.loewner_dir / "diffusivity.svg").exists()


def test_checks_on_partial_report():
    checks = evaluate_checks({
        "snapshots": [{"moments": {"excess_kurtosis": 0.05}}, {"moments": {"excess_kurtosis": -0.1}}],
        "fractal": {"dimensions": [{"q": 0.0, "window": "below_L", "D_q": 1.01, "stderr": 0.01}]},
        "pdf": None,
        "loewner": {"contraction": "L_over_rd", "groups": [{"group": "g", "kappa": 30.0}]},
    })
    by_name = {c.name: c for c in checks}
    assert by_name["gaussianity |excess kurtosis|"].value == pytest.approx(0.1)
    assert by_name["gaussianity |excess kurtosis|"].passed
    assert by_name["D_0 below L"].passed
    assert by_name["D_0 above L"].passed is None
    assert by_name["kappa after contraction (g)"].passed is False
    passed, failed, skipped = summarize(checks)
    assert (passed, failed) == (2, 1)
    assert passed + failed + skipped == len(checks)


def test_report_without_analysis(small_config):
    layout = _layout(small_config)
    report, checks = run_report(small_config, layout)
    assert checks == []
    assert report["snapshots"] == []
    assert report["fractal"] is None
    text = (layout.root / "report.md").read_text()
    assert text.startswith("# tiny")
    assert "Not computed." in text


def test_run_all_writes_report(small_config):
    layout = _layout(small_config)
    report, checks = run_all(small_config, layout, check=True)
    assert len(report["snapshots"]) == 2
    assert len(checks) >= 8
    assert len(report["checks"]) == len(checks)
    saved = json.loads((layout.root / "report.json").read_text())
    assert saved["name"] == "tiny"
    assert (layout.root / "report.md").read_text().startswith("# tiny")
