#!/usr/bin/env python3
"""
Command-line interface for batchelor-isolines.
"""

import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import typer
from loguru import logger
from rich.console import Console
from rich.table import Table

from config import ExperimentConfig, load_experiment_config, settings
from utils.logging import run_log, setup_logging
from utils.validation import BatchelorError, ConfigurationError, InvalidInputError

app = typer.Typer(help="batchelor-isolines: simulate Batchelor-regime scalar fields and analyze their isolines")
console = Console()

EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECKS = 3

CONFIG_OPTION = typer.Option(..., "--config", "-c", help="Experiment config (JSON)")
SEED_OPTION = typer.Option(None, "--seed", "-s", help="Override the master pumping seed")
WORKERS_OPTION = typer.Option(None, "--workers", "-w", help="Worker threads (default: BATCHELOR_WORKERS)")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Run directory (default: config output_dir)")


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, "--log-level", help="Log level")) -> None:
    setup_logging(level=log_level)


def _fail(e: Exception) -> NoReturn:
    """Log an error and exit with the code of its class."""
    if isinstance(e, (ConfigurationError, InvalidInputError)):
        logger.error(f"Error: {e.message}")
        sys.exit(EXIT_USAGE)
    if isinstance(e, BatchelorError):
        logger.error(f"Error: {e.message}")
    else:
        logger.error(f"Error: {str(e)}")
    sys.exit(EXIT_RUNTIME)


def _load(config: str, seed: Optional[int]) -> ExperimentConfig:
    cfg = load_experiment_config(config)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _workers(workers: Optional[int]) -> int:
    return workers or settings.workers


def _print_mapping(title: str, rows: Dict[str, Any]) -> None:
    table = Table(title=title)
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    for key, value in rows.items():
        if value is None:
            value = "n/a"
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)


def _print_checks(checks: List[Any]) -> None:
    table = Table(title="Acceptance checks")
    for column in ("Check", "Value", "Expected", "Result"):
        table.add_column(column)
    for c in checks:
        result = "[yellow]skipped[/]" if c.passed is None else ("[green]passed[/]" if c.passed else "[red]FAILED[/]")
        value = "n/a" if c.value is None else f"{c.value:.4g}"
        table.add_row(c.name, value, c.expected, result + (f" ({c.note})" if c.note else ""))
    console.print(table)


@app.command()
def calibrate(
    config: str = CONFIG_OPTION,
    out: Optional[str] = OUT_OPTION,
    force: bool = typer.Option(False, "--force", "-f", help="Recompute even if a calibration exists")
):
    """
    Estimate the Lyapunov exponent of the configured flow.
    """
    from harness import resolve_layout, run_calibrate

    try:
        cfg = _load(config, None)
        estimate = run_calibrate(cfg, resolve_layout(cfg, out), force=force)
        _print_mapping("Lyapunov exponent", {
            "lambda": estimate.lambda_,
            "stderr": estimate.stderr,
            "relative error": estimate.relative_error,
            "dt lambda": cfg.flow.dt * estimate.lambda_,
        })
    except (BatchelorError, OSError) as e:
        _fail(e)


@app.command()
def simulate(
    config: str = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    out: Optional[str] = OUT_OPTION,
    resume: Optional[str] = typer.Option(None, "--resume", "-r", help="Checkpoint to continue from")
):
    """
    Pump and evolve blobs, writing snapshots and checkpoints.
    """
    from harness import resolve_layout, run_calibrate, run_simulate

    try:
        cfg = _load(config, seed)
        layout = resolve_layout(cfg, out)
        with run_log(layout.root):
            lyapunov = run_calibrate(cfg, layout)
            result = run_simulate(
                cfg, layout, lyapunov, _workers(workers), Path(resume) if resume else None
            )
        for stem in result.snapshots:
            console.print(f"- {stem}")
        logger.info(f"Simulation wrote {len(result.snapshots)} snapshots under {layout.root}")
    except (BatchelorError, OSError) as e:
        _fail(e)


@app.command()
def contours(
    config: str = CONFIG_OPTION,
    out: Optional[str] = OUT_OPTION,
    snapshot: Optional[List[str]] = typer.Option(None, "--snapshot", help="Snapshot stem (default: all)")
):
    """
    Extract isolines and field moments from snapshots.
    """
    from harness import resolve_layout, run_contours

    try:
        cfg = _load(config, None)
        layout = resolve_layout(cfg, out)
        stems = [Path(s) for s in snapshot] if snapshot else layout.snapshot_stems()
        if not stems:
            raise InvalidInputError(f"No snapshots found under {layout.snapshots_dir}")
        table = Table(title="Snapshots")
        for column in ("Snapshot", "Contours", "Closed", "Excess kurtosis"):
            table.add_column(column)
        for stem in stems:
            s = run_contours(cfg, layout, stem)
            k = s["moments"]["excess_kurtosis"]
            table.add_row(s["label"], str(s["n_contours"]), str(s["n_closed"]), "n/a" if k is None else f"{k:.3g}")
        console.print(table)
    except (BatchelorError, OSError) as e:
        _fail(e)


def _contour_files(layout: Any, files: Optional[List[str]]) -> List[Path]:
    paths = [Path(f) for f in files] if files else layout.contour_files()
    if not paths:
        raise InvalidInputError(f"No contour files found under {layout.contours_dir}")
    return paths


@app.command()
def fractal(
    config: str = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    out: Optional[str] = OUT_OPTION,
    contour_file: Optional[List[str]] = typer.Option(None, "--contours", help="Contour file (default: all)")
):
    """
    Generalized dimensions of the closed contours.
    """
    from harness import resolve_layout, run_fractal

    try:
        cfg = _load(config, None)
        layout = resolve_layout(cfg, out)
        summary = run_fractal(cfg, layout, _contour_files(layout, contour_file), _workers(workers))
        table = Table(title=f"D_q ({summary['n_contours']} contours)")
        for column in ("q", "Window", "D_q", "stderr"):
            table.add_column(column)
        for row in summary["dimensions"]:
            d = row.get("D_q")
            table.add_row(
                f"{row['q']:g}", row["window"],
                "n/a" if d is None else f"{d:.4f}",
                row.get("reason", "") if d is None else f"{row['stderr']:.2g}",
            )
        console.print(table)
    except (BatchelorError, OSError) as e:
        _fail(e)


@app.command()
def pdf(
    config: str = CONFIG_OPTION,
    out: Optional[str] = OUT_OPTION,
    contour_file: Optional[List[str]] = typer.Option(
        None, "--contours", help="Contour file; repeat to merge runs (default: all of this run)"
    )
):
    """
    Log-binned PDFs of contour perimeter and size with tail fits.
    """
    from harness import resolve_layout, run_pdf

    try:
        cfg = _load(config, None)
        layout = resolve_layout(cfg, out)
        summary = run_pdf(cfg, layout, _contour_files(layout, contour_file))
        for name in ("perimeter", "radius", "gyration"):
            q = summary[name]
            _print_mapping(f"{name} PDF", {
                "N": q.get("n", 0),
                "mode": (q.get("mode") or {}).get("location"),
                "left tail exponent": (q.get("left_tail") or {}).get("exponent"),
                "right tail exponent": (q.get("right_tail") or {}).get("exponent"),
                "right tail sigma": (q.get("right_tail") or {}).get("sigma"),
            })
    except (BatchelorError, OSError) as e:
        _fail(e)


@app.command()
def loewner(
    config: str = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    out: Optional[str] = OUT_OPTION,
    contour_file: Optional[List[str]] = typer.Option(None, "--contours", help="Contour file (default: all)"),
    drivings: Optional[List[str]] = typer.Option(None, "--drivings", help="Extra driving-function CSV")
):
    """
    Unzip long contours into driving functions and estimate kappa.
    """
    from harness import resolve_layout, run_loewner

    try:
        cfg = _load(config, None)
        layout = resolve_layout(cfg, out)
        files = [Path(f) for f in contour_file] if contour_file else layout.contour_files()
        summary = run_loewner(
            cfg, layout, files, [Path(d) for d in drivings or []], _workers(workers)
        )
        table = Table(title=f"Driving functions ({summary['contraction']})")
        for column in ("Group", "Drivings", "kappa", "stderr"):
            table.add_column(column)
        for g in summary["groups"]:
            kappa = g.get("kappa")
            table.add_row(
                g["group"], str(g["n_drivings"]),
                "n/a" if kappa is None else f"{kappa:.3f}",
                g.get("reason", "") if kappa is None else f"{g['stderr']:.2g}",
            )
        console.print(table)
        if not summary["groups"]:
            logger.warning(summary.get("reason", "no driving functions"))
    except (BatchelorError, OSError) as e:
        _fail(e)


@app.command()
def report(
    config: str = CONFIG_OPTION,
    out: Optional[str] = OUT_OPTION,
    check: bool = typer.Option(False, "--check", help="Evaluate acceptance checks; exit 3 on failure")
):
    """
    Collect stage summaries into report.json and report.md.
    """
    from harness import resolve_layout, run_report, summarize

    try:
        cfg = _load(config, None)
        layout = resolve_layout(cfg, out)
        _, checks = run_report(cfg, layout, check)
    except (BatchelorError, OSError) as e:
        _fail(e)
    logger.info(f"Report written to {layout.root / 'report.md'}")
    if check:
        _print_checks(checks)
        passed, failed, skipped = summarize(checks)
        logger.info(f"Checks: {passed} passed, {failed} failed, {skipped} skipped")
        if failed:
            sys.exit(EXIT_CHECKS)


@app.command(name="all")
def run_all_command(
    config: List[str] = typer.Option(..., "--config", "-c", help="Experiment config; repeat for several"),
    seed: Optional[int] = SEED_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Run directory (single config only)"),
    check: bool = typer.Option(False, "--check", help="Evaluate acceptance checks; exit 3 on failure")
):
    """
    Run every stage for one or more experiments.
    """
    from harness import resolve_layout, run_all, summarize

    if out and len(config) > 1:
        logger.error("--out applies to a single config")
        sys.exit(EXIT_USAGE)

    any_failed = False
    for path in config:
        try:
            cfg = _load(path, seed)
            layout = resolve_layout(cfg, out)
            with run_log(layout.root):
                logger.info(f"Running {cfg.name} into {layout.root}")
                _, checks = run_all(cfg, layout, _workers(workers), check)
        except (BatchelorError, OSError) as e:
            _fail(e)
        if check:
            _print_checks(checks)
            _, failed, _ = summarize(checks)
            any_failed = any_failed or failed > 0
    if any_failed:
        sys.exit(EXIT_CHECKS)


if __name__ == "__main__":
    app()
