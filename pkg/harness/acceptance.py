"""
Acceptance checks evaluated by ``report --check``.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

from utils.logging import get_logger

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass
class CheckResult:
    """
    Outcome of one acceptance check; ``passed`` is None when the quantity is missing.
    """
    name: str
    value: Optional[float]
    expected: str
    passed: Optional[bool]
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _get(data: Optional[Dict[str, Any]], *keys: Any) -> Any:
    for key in keys:
        if data is None:
            return None
        if isinstance(data, list):
            data = data[key] if isinstance(key, int) and key < len(data) else None
        else:
            data = data.get(key)
    return data


def _dimension(fractal: Optional[Dict[str, Any]], q: float, window: str) -> Optional[Dict[str, Any]]:
    for row in (fractal or {}).get("dimensions", []):
        if row.get("q") == q and row.get("window") == window and row.get("D_q") is not None:
            return row
    return None


def _within(name: str, value: Optional[float], lo: float, hi: float, note: str = "") -> CheckResult:
    expected = f"[{lo:.4g}, {hi:.4g}]"
    if value is None:
        return CheckResult(name, None, expected, None, note or "not available")
    return CheckResult(name, float(value), expected, bool(lo <= value <= hi), note)


def evaluate_checks(report: Dict[str, Any]) -> List[CheckResult]:
    """
    Evaluate the acceptance criteria that the report's data supports.

    Args:
        report: Report assembled by ``run_report``

    Returns:
        One result per criterion; missing quantities give ``passed=None``
    """
    checks: List[CheckResult] = []

    kurtosis = [
        s["moments"]["excess_kurtosis"]
        for s in report.get("snapshots", [])
        if _get(s, "moments", "excess_kurtosis") is not None
    ]
    checks.append(_within(
        "gaussianity |excess kurtosis|", max((abs(k) for k in kurtosis), default=None), 0.0, 0.2,
        note=f"{len(kurtosis)} snapshots",
    ))

    fractal = report.get("fractal")
    below = _dimension(fractal, 0.0, "below_L")
    checks.append(_within("D_0 below L", below and below["D_q"], 0.95, 1.05))
    above = _dimension(fractal, 0.0, "above_L")
    checks.append(_within("D_0 above L", above and above["D_q"], 1.50, 1.75))
    checks.append(_monofractal_check(fractal))

    pdf = report.get("pdf")
    checks.append(_within("size PDF mode", _get(pdf, "radius", "mode", "location"), 1.0 / 1.5, 1.5))
    checks.append(_within(
        "perimeter PDF mode", _get(pdf, "perimeter", "mode", "location"), TWO_PI / 1.5, TWO_PI * 1.5
    ))
    checks.append(_within("left tail exponent", _get(pdf, "perimeter", "left_tail", "exponent"), 1.2, 1.8))
    checks.append(_within(
        "perimeter right tail exponent", _get(pdf, "perimeter", "right_tail", "exponent"), -2.3, -1.7
    ))

    overlay = _get(pdf, "radius", "poisson_overlay", "residual")
    lognormal = _get(pdf, "radius", "right_tail", "residual")
    if overlay is None or lognormal is None:
        checks.append(CheckResult("Poisson overlay worse than log-normal", None, "residual ratio > 1", None,
                                  "not available"))
    else:
        ratio = overlay / lognormal if lognormal > 0 else math.inf
        checks.append(CheckResult(
            "Poisson overlay worse than log-normal", ratio, "residual ratio > 1", bool(overlay > lognormal)
        ))

    loewner = report.get("loewner") or {}
    if loewner.get("contraction") == "L_over_rd":
        for g in loewner.get("groups", []):
            checks.append(_within(f"kappa after contraction ({g['group']})", g.get("kappa"), 2.0, 20.0))

    for c in checks:
        status = "skipped" if c.passed is None else ("passed" if c.passed else "FAILED")
        logger.info(f"Check {c.name}: {status} (value {c.value}, expected {c.expected})")
    return checks


def _monofractal_check(fractal: Optional[Dict[str, Any]]) -> CheckResult:
    rows = [_dimension(fractal, q, "above_L") for q in (0.0, 2.0, 4.0)]
    name = "D_q agree for q in {0, 2, 4}"
    if any(r is None for r in rows):
        return CheckResult(name, None, "spread within combined error", None, "not available")
    values = [r["D_q"] for r in rows]
    spread = max(values) - min(values)
    combined = math.sqrt(sum(r["stderr"] ** 2 for r in rows))
    return CheckResult(name, spread, f"<= {3 * combined:.3g}", bool(spread <= 3 * combined))


def summarize(checks: List[CheckResult]) -> Tuple[int, int, int]:
    """Counts of (passed, failed, skipped) checks."""
    passed = sum(1 for c in checks if c.passed is True)
    failed = sum(1 for c in checks if c.passed is False)
    return passed, failed, len(checks) - passed - failed
