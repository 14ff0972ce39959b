"""
Run reports: JSON summaries and the markdown digest rendered from a jinja2 template.
"""

import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from jinja2 import Environment, FileSystemLoader, Undefined, select_autoescape

from utils.logging import get_logger
from utils.validation import SnapshotFormatError

logger = get_logger(__name__)

PathLike = Union[str, Path]


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays, tuples and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


class ReportExporter:
    """
    Writer of JSON summaries and markdown reports.
    """

    def __init__(self, templates_dir: Optional[str] = None):
        """
        Initialize the report exporter.

        Args:
            templates_dir: Directory containing report templates
        """
        self.templates_dir = templates_dir or os.path.join(os.path.dirname(__file__), "templates")

        # Initialize Jinja2 environment
        self.env = Environment(
            loader=FileSystemLoader(self.templates_dir),
            autoescape=select_autoescape(["html", "xml"]),
            trim_blocks=True,
            lstrip_blocks=True
        )
        self.env.filters["num"] = _format_number

    def write_json(self, data: Dict[str, Any], path: PathLike) -> Path:
        """
        Write a summary as indented JSON.

        Args:
            data: Summary data (numpy values are converted)
            path: Output file

        Returns:
            The file path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Wrote summary {path}")
        return path

    def read_json(self, path: PathLike) -> Dict[str, Any]:
        """Read a JSON summary."""
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise SnapshotFormatError(f"Cannot read summary {path}: {e}", details={"path": str(path)}) from e

    def render_markdown(self, report: Dict[str, Any], template: str = "report.md.j2") -> str:
        """Render a report with a template from ``templates_dir``."""
        return self.env.get_template(template).render(report=to_jsonable(report))

    def write_markdown(self, report: Dict[str, Any], path: PathLike, template: str = "report.md.j2") -> Path:
        """
        Render a report and write it as markdown.

        Args:
            report: Report data
            path: Output file
            template: Template name in ``templates_dir``

        Returns:
            The file path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render_markdown(report, template), encoding="utf-8")
        logger.info(f"Wrote report {path}")
        return path


def _format_number(value: Any, digits: int = 4) -> str:
    if value is None or isinstance(value, Undefined):
        return "n/a"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return str(value)
    return f"{value:.{digits}g}"


# Create a global instance
report_exporter = ReportExporter()
