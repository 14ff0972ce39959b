"""
Harness module: the staged experiment pipeline and its acceptance checks.
"""

from .acceptance import CheckResult, evaluate_checks, summarize
from .pipeline import (
    RunLayout,
    SimulationResult,
    cycle_stream,
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
)

__all__ = [
    "CheckResult",
    "RunLayout",
    "SimulationResult",
    "cycle_stream",
    "evaluate_checks",
    "group_label",
    "resolve_layout",
    "run_all",
    "run_analyze",
    "run_calibrate",
    "run_contours",
    "run_fractal",
    "run_loewner",
    "run_pdf",
    "run_report",
    "run_simulate",
    "summarize",
]
