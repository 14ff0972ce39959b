"""
Staged experiment pipeline.

calibrate -> simulate -> contours -> fractal / pdf -> loewner -> report. Every stage
reads and writes files under one run directory, so any stage can be re-run on its own.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from config import ExperimentConfig, settings
from contour import bounding_aspect_ratio, extract_isolines
from exporters import (
    ContourRecord,
    contour_exporter,
    figure_exporter,
    grid_window,
    measure,
    report_exporter,
    snapshot_exporter,
    table_exporter,
)
from flow import FlowRealization, LyapunovEstimate, estimate_lyapunov
from fractal import (
    box_counts,
    ensemble_dimension,
    epsilon_ladder,
    generalized_dimension,
    local_slope,
)
from loewner import (
    DrivingFunction,
    contraction_factors,
    effective_diffusivity,
    increment_autocorrelation,
    prepare_chordal,
    rescale_curve,
    unzip,
)
from scalar import BlobDatabase, GridSpec, Pumping, cull, evolve_to, field_moments, render, spawn_blobs
from stats import (
    TailKind,
    fit_left_tail,
    fit_poisson_overlay,
    fit_right_tail,
    histogram_log,
    merge_histograms,
    mode_location,
)
from utils.logging import get_logger
from utils.validation import (
    BatchelorError,
    ChordalPreparationError,
    ConfigurationError,
    DegenerateFitError,
    InsufficientCountsError,
    InsufficientEnsembleError,
    InvalidInputError,
    LoewnerBreakdownError,
    NonFiniteStateError,
    sanitize_filename,
)

from .acceptance import CheckResult, evaluate_checks

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Relative slack when matching times against the cycle grid
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class RunLayout:
    """
    File layout of one experiment run.
    """
    root: Path

    @property
    def calibration(self) -> Path:
        return self.root / "calibration.json"

    @property
    def snapshots_dir(self) -> Path:
        return self.root / "snapshots"

    @property
    def checkpoints_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def contours_dir(self) -> Path:
        return self.root / "contours"

    @property
    def analysis_dir(self) -> Path:
        return self.root / "analysis"

    @property
    def loewner_dir(self) -> Path:
        return self.root / "loewner"

    @staticmethod
    def label(t_lambda: float) -> str:
        """Snapshot label, sortable by time."""
        return f"snap_T{t_lambda:09.3f}"

    def snapshot_stem(self, t_lambda: float) -> Path:
        return self.snapshots_dir / self.label(t_lambda)

    def checkpoint(self, t_lambda: float) -> Path:
        return self.checkpoints_dir / f"{self.label(t_lambda)}.bin"

    def snapshot_stems(self) -> List[Path]:
        """Snapshots present on disk, in time order."""
        return sorted(snapshot_exporter.stem(p) for p in self.snapshots_dir.glob("snap_T*.json"))

    def contour_files(self) -> List[Path]:
        """Text contour files present on disk, in time order."""
        return sorted(self.contours_dir.glob("snap_T*.txt"))


def resolve_layout(cfg: ExperimentConfig, out: Optional[str] = None) -> RunLayout:
    """
    Run directory: ``out``, else ``cfg.output_dir``, else ``<default_output_dir>/<name>``.
    """
    if out:
        root = Path(out)
    elif cfg.output_dir:
        root = Path(cfg.output_dir)
    else:
        root = Path(settings.default_output_dir) / sanitize_filename(cfg.name)
    return RunLayout(root=root)


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Ordered map, threaded when ``workers`` > 1."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(fn, items))
    return [fn(item) for item in items]


def cycle_stream(master_seed: int, cycle: int, part: int = 0) -> int:
    """Seed of the spawn batch of one pumping cycle; ``part`` > 0 names top-up batches after a resume."""
    key = (cycle,) if part == 0 else (cycle, part)
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def run_calibrate(cfg: ExperimentConfig, layout: RunLayout, force: bool = False) -> LyapunovEstimate:
    """
    Measure the Lyapunov exponent that sets the time unit of the run.

    A configured ``flow.lambda_estimate`` is used as is. Otherwise a calibration file
    matching the flow parameters is reused unless ``force`` is set.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        force: Recompute even when a matching calibration exists

    Returns:
        The estimate
    """
    flow = cfg.flow
    if flow.lambda_estimate:
        logger.info(f"Using configured Lyapunov exponent {flow.lambda_estimate:.4g}")
        return LyapunovEstimate(
            lambda_=flow.lambda_estimate, stderr=0.0, n_steps=0, n_samples=0, dt=flow.dt
        )

    key = {
        "D": flow.D, "dt": flow.dt, "seed": flow.seed,
        "n_steps": cfg.calibration_steps, "n_samples": cfg.calibration_samples,
    }
    if layout.calibration.exists() and not force:
        data = report_exporter.read_json(layout.calibration)
        if data.get("key") == key:
            logger.info(f"Reusing calibration {layout.calibration}: lambda = {data['lambda']:.4g}")
            return LyapunovEstimate(
                lambda_=data["lambda"], stderr=data["stderr"],
                n_steps=data["key"]["n_steps"], n_samples=data["key"]["n_samples"], dt=flow.dt,
            )
        logger.info("Calibration on disk does not match the flow parameters; recomputing")

    estimate = estimate_lyapunov(flow, cfg.calibration_steps, cfg.calibration_samples)
    if estimate.lambda_ > 0 and flow.dt * estimate.lambda_ >= 0.05:
        logger.warning(
            f"dt*lambda = {flow.dt * estimate.lambda_:.3g} is not small; reduce dt below "
            f"{0.05 / estimate.lambda_:.3g}"
        )
    report_exporter.write_json(
        {
            "key": key,
            "lambda": estimate.lambda_,
            "stderr": estimate.stderr,
            "relative_error": estimate.relative_error,
            "dt_lambda": flow.dt * estimate.lambda_,
        },
        layout.calibration,
    )
    return estimate


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    """Snapshots written by a simulation run and the blob-count history."""
    snapshots: List[Path]
    checkpoints: List[Path]
    blob_counts: List[Tuple[float, int]]
    lambda_: float


def run_simulate(
    cfg: ExperimentConfig,
    layout: RunLayout,
    lyapunov: LyapunovEstimate,
    workers: int = 1,
    resume_from: Optional[Path] = None
) -> SimulationResult:
    """
    Pump, evolve and cull blobs up to T_lambda, writing snapshots and checkpoints.

    Time is split into pumping cycles of ``spawn_interval_lambda / lambda`` on a fixed
    grid. Each cycle spawns its blobs with a seed derived from (master seed, cycle),
    evolves to the cycle end and culls. Snapshots are rendered at every requested
    time and at T_lambda, each with a checkpoint; resuming from a checkpoint replays
    the remaining cycles exactly.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        lyapunov: Calibrated Lyapunov exponent
        workers: Render threads
        resume_from: Checkpoint to continue from

    Returns:
        The written files and the retained blob count after each cycle
    """
    lam = float(lyapunov.lambda_)
    if not lam > 0:
        raise ConfigurationError(
            f"Lyapunov exponent {lam:.4g} is not positive; cannot set the time unit",
            details={"lambda": lam},
        )
    flow = FlowRealization(cfg.flow)
    t_end = cfg.T_lambda / lam
    interval = cfg.pumping.spawn_interval_lambda / lam
    n_cycles = int(math.ceil(t_end / interval - _TIME_TOL)) if t_end > 0 else 0

    def cycle_time(k: int) -> float:
        return min(k * interval, t_end)

    tol = _TIME_TOL * max(1.0, t_end)
    horizon = t_end if cfg.pumping.spawn_frame == "preimage" else None
    pumping = Pumping.from_config(cfg.pumping, lam, cfg.T_lambda, horizon)
    spec = GridSpec.from_config(cfg.window, cfg.grid)

    if resume_from is not None:
        db = snapshot_exporter.read_checkpoint(resume_from)
        if db.t_now > t_end + tol:
            raise ConfigurationError(
                f"Checkpoint at t={db.t_now:.6g} is past the run end {t_end:.6g}",
                details={"checkpoint": str(resume_from)},
            )
        if db.horizon is not None and horizon is not None and db.horizon < horizon - tol:
            logger.warning(
                f"Checkpoint horizon {db.horizon:.6g} precedes the run end; new blobs use {horizon:.6g}"
            )
        k = int(math.floor(db.t_now / interval + _TIME_TOL))
        on_grid = abs(cycle_time(k) - db.t_now) <= tol
        sidecar = Path(resume_from).with_suffix(".json")
        if sidecar.exists():
            spawned_to = float(report_exporter.read_json(sidecar)["spawned_to"])
        else:
            spawned_to = db.t_now if on_grid else cycle_time(k + 1)
        logger.info(f"Resuming from {resume_from} at t*lambda = {db.t_now * lam:.4g}, cycle {k}")
    else:
        db = BlobDatabase(
            cfg.window.as_tuple(), 0.0, cfg.pumping.threshold(),
            cfg.pumping.support_sigmas, pumping.spawn_margin,
        )
        k, spawned_to = 0, 0.0

    targets = sorted({float(t) for t in cfg.snapshot_t_lambdas if t <= cfg.T_lambda} | {cfg.T_lambda})
    pending = [tl for tl in targets if tl / lam > db.t_now + tol or (resume_from is None and tl == 0.0)]
    result = SimulationResult(snapshots=[], checkpoints=[], blob_counts=[], lambda_=lam)
    logger.info(
        f"Simulating {cfg.name}: T*lambda = {cfg.T_lambda}, {n_cycles} cycles, "
        f"nu = {pumping.nu:.4g}, margin = {pumping.spawn_margin:.3g}, frame = {pumping.spawn_frame}"
    )

    def snapshot(tl: float, spawned_to: float) -> None:
        grid = render(db, spec, tile=cfg.grid.tile, workers=workers)
        stem = layout.snapshot_stem(tl)
        snapshot_exporter.write_snapshot(grid, stem, {
            "t_now": db.t_now,
            "t_lambda": tl,
            "lambda": lam,
            "lambda_stderr": lyapunov.stderr,
            "seed": cfg.seed,
            "flow_seed": cfg.flow.seed,
            "nu_over_lambda": cfg.pumping.nu_over_lambda,
            "n_blobs": int(np.count_nonzero(db.born)),
            "params": cfg.model_dump(mode="json"),
        })
        result.snapshots.append(stem)
        checkpoint = snapshot_exporter.write_checkpoint(db, layout.checkpoint(tl))
        report_exporter.write_json(
            {"t_now": db.t_now, "t_lambda": tl, "spawned_to": spawned_to, "seed": cfg.seed},
            checkpoint.with_suffix(".json"),
        )
        result.checkpoints.append(checkpoint)

    while pending and pending[0] / lam <= db.t_now + tol:
        snapshot(pending.pop(0), spawned_to)

    while k < n_cycles:
        t_a, t_b = cycle_time(k), cycle_time(k + 1)
        if spawned_to < t_b - tol:
            # a resumed run may have spawned part of this cycle already
            part = 0 if spawned_to <= t_a + tol else 1
            spawn_blobs(db, pumping, max(t_a, spawned_to), t_b, cycle_stream(cfg.seed, k, part), flow)
            spawned_to = t_b
        while pending and pending[0] / lam < t_b - tol:
            tl = pending.pop(0)
            evolve_to(db, flow, tl / lam)
            snapshot(tl, spawned_to)
        evolve_to(db, flow, t_b)
        cull(db)
        result.blob_counts.append((t_b * lam, len(db)))
        while pending and pending[0] / lam <= t_b + tol:
            snapshot(pending.pop(0), spawned_to)
        k += 1
        if k % 10 == 0 or k == n_cycles:
            logger.info(
                f"Cycle {k}/{n_cycles}: t*lambda = {t_b * lam:.4g}, {len(db)} blobs, "
                f"{flow.cached_chunks} flow chunks in memory"
            )
    return result


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

def _provenance(meta: Dict[str, Any], stem: Path, level: float) -> Dict[str, Any]:
    keys = ("origin", "pixel_size", "nx", "ny", "t_lambda", "t_now", "lambda", "flow_seed", "seed",
            "nu_over_lambda")
    out = {k: meta[k] for k in keys if k in meta}
    out.update(snapshot=str(stem), label=stem.name, level=level)
    return out


def run_contours(cfg: ExperimentConfig, layout: RunLayout, stem: Path) -> Dict[str, Any]:
    """
    Extract the isolines of one snapshot and write contour files and field figures.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        stem: Snapshot stem

    Returns:
        Summary with the field moments and contour counts
    """
    stem = Path(stem)
    grid, meta = snapshot_exporter.read_snapshot(stem)
    level = cfg.analysis.level
    contours = extract_isolines(grid, level)
    records = [measure(c, cfg.analysis.radius_weighting) for c in contours]
    provenance = _provenance(meta, snapshot_exporter.stem(stem), level)
    label = provenance["label"]
    contour_exporter.write_text(records, layout.contours_dir / f"{label}.txt", provenance)
    contour_exporter.write_binary(records, layout.contours_dir / f"{label}.bin", provenance)

    moments = field_moments(grid)
    closed = [r for r in records if r.contour.closed and not r.contour.touches_boundary]
    summary = {
        "label": label,
        "t_lambda": meta.get("t_lambda"),
        "moments": {
            "mean": moments.mean,
            "variance": moments.variance,
            "skewness": moments.skewness,
            "excess_kurtosis": moments.excess_kurtosis,
            "kurtosis_tolerance": moments.kurtosis_tolerance,
            "n_pixels": moments.n_pixels,
        },
        "n_contours": len(records),
        "n_closed": len(closed),
        "n_boundary": len(records) - len(closed),
        "no_nodal_lines": not records,
        "aspect_ratios": _aspect_summary(closed),
    }
    if not records:
        logger.warning(f"Snapshot {label} has no nodal lines at level {level}")

    figures_dir = layout.analysis_dir / label
    figure_exporter.plot_field(grid, figures_dir / "field.svg", [r.contour for r in closed[:2000]])
    if records:
        longest = max(records, key=lambda r: r.perimeter)
        figure_exporter.plot_contour(
            longest.contour, figures_dir / "longest_contour.svg",
            title=f"{label}: P = {longest.perimeter:.1f} L",
        )
    report_exporter.write_json(summary, figures_dir / "field.json")
    return summary


def _aspect_summary(records: Sequence[ContourRecord]) -> Dict[str, Any]:
    ratios = np.array([bounding_aspect_ratio(r.contour) for r in records if len(r.contour) >= 3])
    ratios = ratios[np.isfinite(ratios)]
    if ratios.size == 0:
        return {"n": 0}
    return {
        "n": int(ratios.size),
        "median": float(np.median(ratios)),
        "p10": float(np.percentile(ratios, 10)),
        "p90": float(np.percentile(ratios, 90)),
        "max": float(ratios.max()),
    }


def _load_contours(files: Iterable[Path]) -> List[Tuple[Dict[str, Any], List[ContourRecord]]]:
    return [(contour_exporter.read_metadata(f), contour_exporter.read(f)) for f in files]


def _eligible(records: Sequence[ContourRecord], min_perimeter: float) -> List[ContourRecord]:
    return [
        r for r in records
        if r.contour.closed and not r.contour.touches_boundary and r.perimeter >= min_perimeter
    ]


# ---------------------------------------------------------------------------
# fractal
# ---------------------------------------------------------------------------

def run_fractal(
    cfg: ExperimentConfig,
    layout: RunLayout,
    contour_files: Sequence[Path],
    workers: int = 1
) -> Dict[str, Any]:
    """
    Box-count the large closed contours and fit D_q below and above L.

    Per-contour tables number contours by their position in the eligible set, since
    ids repeat across snapshot files.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        contour_files: Contour files produced by ``run_contours``
        workers: Threads used across contours

    Returns:
        Summary with the ensemble D_q per order and window
    """
    a = cfg.analysis
    out_dir = layout.analysis_dir / "fractal"
    loaded = _load_contours(contour_files)
    pixel = min((m.get("pixel_size", cfg.pixel_size) for m, _ in loaded), default=cfg.pixel_size)
    width = max(
        (m.get("nx", cfg.grid.nx) * m.get("pixel_size", cfg.pixel_size) for m, _ in loaded),
        default=cfg.window.width,
    )
    origin = tuple(loaded[0][0].get("origin", (cfg.window.x0, cfg.window.y0))) if loaded else (0.0, 0.0)

    records = [
        r for meta, recs in loaded
        for r in _eligible(recs, a.min_perimeter_pixels * meta.get("pixel_size", pixel))
        if r.gyration_radius >= a.min_gyration_for_fractal
    ]
    windows = {
        "below_L": tuple(a.below_L) if a.below_L else (2.0 * pixel, 0.5),
        "above_L": tuple(a.above_L) if a.above_L else (2.0, width / 8.0),
    }
    summary: Dict[str, Any] = {
        "n_contours": len(records),
        "windows": windows,
        "dimensions": [],
    }
    if not records:
        summary["reason"] = "no closed contour large enough for box counting"
        logger.warning(summary["reason"])
        report_exporter.write_json(summary, out_dir / "fractal.json")
        return summary

    ladder = epsilon_ladder(2.0 * pixel, width / 4.0, a.epsilon_ratio)
    summary["ladder"] = {"eps_min": float(ladder[-1]), "eps_max": float(ladder[0]), "n": int(ladder.size)}
    logger.info(f"Box counting {len(records)} contours over {ladder.size} scales")
    curves = _pmap(lambda r: box_counts(r.contour, ladder, origin), records, workers)

    per_contour = []
    contour_ids = []
    slopes: Dict[Tuple[int, float], List[Tuple[float, float]]] = {}
    mean_slopes: Dict[float, List[Tuple[float, float]]] = {}
    for q in a.qs:
        for i, curve in enumerate(curves):
            if ladder.size >= 3:
                slopes[(i, q)] = local_slope(curve, q)
            for lo, hi in windows.values():
                try:
                    per_contour.append(generalized_dimension(curve, q, lo, hi))
                    contour_ids.append(i)
                except (DegenerateFitError, InvalidInputError):
                    pass
        if ladder.size >= 3:
            stacked = np.array([[d for _, d in slopes[(i, q)]] for i in range(len(curves))])
            scales = [s for s, _ in slopes[(0, q)]]
            mean_slopes[q] = list(zip(scales, np.nanmean(stacked, axis=0).tolist()))
        for name, (lo, hi) in windows.items():
            row: Dict[str, Any] = {"q": q, "window": name, "scale_lo": lo, "scale_hi": hi}
            try:
                e = ensemble_dimension(curves, q, lo, hi)
                row.update(
                    D_q=e.D_q, stderr=e.stderr, spread_stderr=e.spread_stderr,
                    fit_stderr=e.fit_stderr, n_contours=e.n_contours,
                )
                logger.info(f"D_{q:g} {name} = {e.D_q:.3f} +- {e.stderr:.3f} ({e.n_contours} contours)")
            except (DegenerateFitError, InvalidInputError) as err:
                row.update(D_q=None, reason=err.message)
                logger.warning(f"D_{q:g} {name}: {err.message}")
            summary["dimensions"].append(row)

    table_exporter.write_frame(table_exporter.dimensions_frame(per_contour, contour_ids), out_dir / "dq.csv")
    table_exporter.write_frame(table_exporter.slopes_frame(slopes), out_dir / "local_slopes.csv")
    if mean_slopes:
        figure_exporter.plot_local_slopes(mean_slopes, out_dir / "local_slopes.svg", "Local D_q")
        if 0.0 in mean_slopes:
            figure_exporter.plot_local_slopes({0.0: mean_slopes[0.0]}, out_dir / "local_slope_D0.svg",
                                              "Local D_0")
        summary["mean_local_slopes"] = {str(q): v for q, v in mean_slopes.items()}
    report_exporter.write_json(summary, out_dir / "fractal.json")
    return summary


# ---------------------------------------------------------------------------
# pdf
# ---------------------------------------------------------------------------

def _fit_or_reason(fn: Callable[[], Any]) -> Dict[str, Any]:
    try:
        fit = fn()
    except (InsufficientCountsError, InvalidInputError) as e:
        logger.warning(f"Tail fit skipped: {e.message}")
        return {"reason": e.message}
    return {
        "kind": fit.kind.value, "window": list(fit.window), "exponent": fit.exponent,
        "mu": fit.mu, "sigma": fit.sigma, "stderr": fit.stderr, "residual": fit.residual,
        "n_counts": fit.n_counts, "n_bins": fit.n_bins, "_fit": fit,
    }


def _pdf_quantity(
    name: str,
    per_file: List[np.ndarray],
    n_bins: int,
    r_d: float,
    left: Tuple[float, float],
    right: Optional[Tuple[float, float]],
    right_kind: TailKind,
    right_floor: float,
    nu_over_lambda: Optional[float],
    out_dir: Path
) -> Dict[str, Any]:
    values = np.concatenate(per_file) if per_file else np.empty(0)
    if values.size == 0:
        return {"n": 0, "reason": "no closed contours"}
    logs = np.log(values)
    lo, hi = float(logs.min()), float(logs.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    h = merge_histograms([histogram_log(v, n_bins, (lo, hi)) for v in per_file if v.size] or
                         [histogram_log(values, n_bins, (lo, hi))])
    out: Dict[str, Any] = {"n": int(h.n_total), "n_files": len(per_file)}
    try:
        mode = mode_location(h, mask_below=5.0 * r_d)
        out["mode"] = {"location": mode.location, "multimodal": mode.multimodal, "secondary": mode.secondary}
    except InsufficientCountsError as e:
        out["mode"] = {"location": None, "reason": e.message}
        logger.warning(f"{name} PDF mode undefined: {e.message}")

    out["left_tail"] = _fit_or_reason(lambda: fit_left_tail(h, left))
    right = right or (right_floor, float(np.exp(hi)))
    out["right_tail"] = _fit_or_reason(lambda: fit_right_tail(h, right, right_kind))
    if nu_over_lambda is not None:
        out["poisson_overlay"] = _fit_or_reason(lambda: fit_poisson_overlay(h, right, nu_over_lambda))

    table_exporter.write_frame(table_exporter.histogram_frame(h), out_dir / f"hist_{name}.csv")
    fits = [f.pop("_fit") for f in (out["left_tail"], out["right_tail"], out.get("poisson_overlay", {}))
            if "_fit" in f]
    figure_exporter.plot_pdf(h, out_dir / f"pdf_{name}.svg", fits, xlabel=f"{name} / L")
    return out


def run_pdf(cfg: ExperimentConfig, layout: RunLayout, contour_files: Sequence[Path]) -> Dict[str, Any]:
    """
    PDFs of perimeter, mean radius and gyration radius, merged over contour files.

    Each file is binned on a common log range and the histograms are merged, so the
    result averages over snapshots or realizations.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        contour_files: Contour files, possibly from several runs

    Returns:
        Summary with modes and tail fits per quantity
    """
    a = cfg.analysis
    out_dir = layout.analysis_dir / "pdf"
    loaded = _load_contours(contour_files)
    r_d = max((m.get("pixel_size", cfg.pixel_size) for m, _ in loaded), default=cfg.pixel_size)
    nu = next((m["nu_over_lambda"] for m, _ in loaded if "nu_over_lambda" in m), cfg.pumping.nu_over_lambda)

    per_file: Dict[str, List[np.ndarray]] = {"perimeter": [], "radius": [], "gyration": []}
    for meta, recs in loaded:
        rs = _eligible(recs, a.min_perimeter_pixels * meta.get("pixel_size", r_d))
        rs = [r for r in rs if r.mean_radius > 0]
        per_file["perimeter"].append(np.array([r.perimeter for r in rs]))
        per_file["radius"].append(np.array([r.mean_radius for r in rs]))
        per_file["gyration"].append(np.array([r.gyration_radius for r in rs]))

    left = tuple(a.left_tail) if a.left_tail else (5.0 * r_d, 1.0 / 3.0)
    summary = {
        "perimeter": _pdf_quantity(
            "perimeter", per_file["perimeter"], a.n_bins, r_d, left,
            tuple(a.right_tail_perimeter) if a.right_tail_perimeter else None,
            TailKind.POWER_LAW_RIGHT, 10.0, None, out_dir,
        ),
        "radius": _pdf_quantity(
            "radius", per_file["radius"], a.n_bins, r_d, left,
            tuple(a.right_tail_size) if a.right_tail_size else None,
            TailKind.LOG_NORMAL_RIGHT, 1.5, nu, out_dir,
        ),
        "gyration": _pdf_quantity(
            "gyration", per_file["gyration"], a.n_bins, r_d, left,
            tuple(a.right_tail_size) if a.right_tail_size else None,
            TailKind.LOG_NORMAL_RIGHT, 1.5, nu, out_dir,
        ),
        "nu_over_lambda": nu,
        "n_files": len(loaded),
    }
    report_exporter.write_json(summary, out_dir / "pdf.json")
    return summary


def run_analyze(
    cfg: ExperimentConfig,
    layout: RunLayout,
    stems: Optional[Sequence[Path]] = None,
    workers: int = 1
) -> Dict[str, Any]:
    """
    Contours, fractal dimensions and PDFs of a run's snapshots.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        stems: Snapshots to analyze; defaults to all snapshots of the run
        workers: Threads used across contours

    Returns:
        The combined summary, also written to ``analysis/summary.json``
    """
    stems = list(stems) if stems is not None else layout.snapshot_stems()
    if not stems:
        raise InvalidInputError(f"No snapshots found under {layout.snapshots_dir}")
    snapshots = [run_contours(cfg, layout, s) for s in stems]
    files = [layout.contours_dir / f"{s['label']}.txt" for s in snapshots]
    summary: Dict[str, Any] = {
        "snapshots": snapshots,
        "no_nodal_lines": all(s["no_nodal_lines"] for s in snapshots),
    }
    if summary["no_nodal_lines"]:
        logger.warning("No nodal lines in any snapshot; fractal and PDF stages skipped")
    else:
        if cfg.analysis.run_fractal:
            summary["fractal"] = run_fractal(cfg, layout, files, workers)
        if cfg.analysis.run_pdf:
            summary["pdf"] = run_pdf(cfg, layout, files)
    report_exporter.write_json(summary, layout.analysis_dir / "summary.json")
    return summary


# ---------------------------------------------------------------------------
# loewner
# ---------------------------------------------------------------------------

def group_label(meta: Dict[str, Any]) -> str:
    """Ensemble key (realization, T*lambda, r_d) of a contour file."""
    return (
        f"seed{meta.get('flow_seed', 'na')}_T{meta.get('t_lambda', 'na')}"
        f"_rd{meta.get('pixel_size', float('nan')):.4g}"
    )


def _unzip_contour(
    record: ContourRecord,
    window: Optional[Tuple[float, float, float, float]],
    factors: Tuple[float, float],
    cfg: ExperimentConfig,
    spacing: float
) -> Optional[DrivingFunction]:
    c = record.contour
    lc = cfg.loewner
    try:
        curve = prepare_chordal(
            c, window, min_perimeter=lc.min_perimeter, drop_fraction=lc.drop_fraction,
            spacing=spacing, max_points=lc.max_points,
        )
        if factors != (1.0, 1.0):
            curve = rescale_curve(curve, *factors)
        driving = unzip(curve)
    except (ChordalPreparationError, LoewnerBreakdownError, NonFiniteStateError) as e:
        logger.warning(f"Skipping contour {c.contour_id}: {e.message}")
        return None
    driving.contour_id = c.contour_id
    return driving


def run_loewner(
    cfg: ExperimentConfig,
    layout: RunLayout,
    contour_files: Sequence[Path],
    drivings_files: Sequence[Path] = (),
    workers: int = 1
) -> Dict[str, Any]:
    """
    Unzip the long closed contours and estimate kappa per ensemble group.

    Contours are grouped by (flow seed, T*lambda, r_d). Driving functions read from
    ``drivings_files`` join the ensemble under their own group labels.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        contour_files: Contour files produced by ``run_contours``
        drivings_files: Extra driving-function CSVs
        workers: Threads used across contours

    Returns:
        Summary with kappa per group, or an empty group list with a reason
    """
    lc = cfg.loewner
    out_dir = layout.loewner_dir
    groups: Dict[str, List[DrivingFunction]] = {}
    n_candidates = 0
    for meta, records in _load_contours(contour_files):
        pixel = float(meta.get("pixel_size", cfg.pixel_size))
        t_lambda = float(meta.get("t_lambda", cfg.T_lambda))
        factors = contraction_factors(lc, pixel, t_lambda)
        window = grid_window(meta)
        candidates = _eligible(records, lc.min_perimeter)
        n_candidates += len(candidates)
        logger.info(
            f"{meta.get('label', 'contours')}: {len(candidates)} of {len(records)} contours "
            f"reach P >= {lc.min_perimeter:g}"
        )
        spacing = lc.spacing or pixel
        drivings = _pmap(lambda r: _unzip_contour(r, window, factors, cfg, spacing), candidates, workers)
        drivings = [d for d in drivings if d is not None]
        if drivings:
            groups.setdefault(group_label(meta), []).extend(drivings)
    for path in drivings_files:
        for label, ds in table_exporter.read_drivings(path).items():
            groups.setdefault(label or Path(path).stem, []).extend(ds)

    summary: Dict[str, Any] = {
        "contraction": lc.contraction,
        "n_candidates": n_candidates,
        "groups": [],
    }
    if not groups:
        summary["reason"] = "no contour qualifies for the Loewner analysis"
        logger.warning(summary["reason"])
        report_exporter.write_json(summary, out_dir / "kappa.json")
        return summary

    estimates = {}
    frames_curve = []
    frames_driving = []
    for label, drivings in sorted(groups.items()):
        frames_driving.append(table_exporter.drivings_frame(drivings, label))
        row: Dict[str, Any] = {"group": label, "n_drivings": len(drivings)}
        try:
            e = effective_diffusivity(drivings, lc.t_window, lc.n_ladder)
        except (InsufficientEnsembleError, InvalidInputError) as err:
            row.update(kappa=None, reason=err.message)
            logger.warning(f"Group {label}: {err.message}")
            summary["groups"].append(row)
            continue
        lag1 = [
            float(increment_autocorrelation(d, n_lags=1)[1])
            for d in drivings if len(d) >= 4
        ]
        row.update(
            kappa=e.kappa, stderr=e.stderr, kappa_ratio=e.kappa_ratio, t_window=list(e.t_window),
            n_contours=e.n_contours, increment_lag1_correlation=float(np.mean(lag1)) if lag1 else None,
        )
        estimates[label] = e
        frames_curve.append(table_exporter.diffusivity_frame(e, label))
        summary["groups"].append(row)

    table_exporter.write_frame(pd.concat(frames_driving, ignore_index=True), out_dir / "drivings.csv")
    if frames_curve:
        table_exporter.write_frame(pd.concat(frames_curve, ignore_index=True), out_dir / "msd.csv")
        figure_exporter.plot_diffusivity(estimates, out_dir / "diffusivity.svg")
    report_exporter.write_json(summary, out_dir / "kappa.json")
    return summary


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def run_report(
    cfg: ExperimentConfig,
    layout: RunLayout,
    check: bool = False
) -> Tuple[Dict[str, Any], List[CheckResult]]:
    """
    Collect the stage summaries into ``report.json`` and ``report.md``.

    Args:
        cfg: Experiment configuration
        layout: Run directory layout
        check: Evaluate the acceptance checks

    Returns:
        The report and the check results (empty unless ``check``)
    """
    def optional(path: Path) -> Optional[Dict[str, Any]]:
        return report_exporter.read_json(path) if path.exists() else None

    calibration = optional(layout.calibration)
    analysis = optional(layout.analysis_dir / "summary.json") or {}
    report: Dict[str, Any] = {
        "name": cfg.name,
        "output_dir": str(layout.root),
        "T_lambda": cfg.T_lambda,
        "nu_over_lambda": cfg.pumping.nu_over_lambda,
        "pixel_size": cfg.pixel_size,
        "calibration": calibration,
        "snapshots": analysis.get("snapshots", []),
        "no_nodal_lines": analysis.get("no_nodal_lines"),
        "fractal": analysis.get("fractal") or optional(layout.analysis_dir / "fractal" / "fractal.json"),
        "pdf": analysis.get("pdf") or optional(layout.analysis_dir / "pdf" / "pdf.json"),
        "loewner": optional(layout.loewner_dir / "kappa.json"),
    }
    checks = evaluate_checks(report) if check else []
    report["checks"] = [c.to_dict() for c in checks]
    report_exporter.write_json(report, layout.root / "report.json")
    report_exporter.write_markdown(report, layout.root / "report.md")
    return report, checks


def run_all(
    cfg: ExperimentConfig,
    layout: RunLayout,
    workers: int = 1,
    check: bool = False
) -> Tuple[Dict[str, Any], List[CheckResult]]:
    """Every stage in order for one experiment."""
    lyapunov = run_calibrate(cfg, layout)
    sim = run_simulate(cfg, layout, lyapunov, workers)
    analysis = run_analyze(cfg, layout, sim.snapshots, workers)
    if not analysis["no_nodal_lines"]:
        run_loewner(cfg, layout, layout.contour_files(), workers=workers)
    return run_report(cfg, layout, check)
