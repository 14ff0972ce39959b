"""
Exporters module: snapshots, checkpoints, contour files, tables, figures and reports.
"""

from .contours import ContourExporter, ContourRecord, contour_exporter, grid_window, measure
from .figures import FigureExporter, figure_exporter
from .report import ReportExporter, report_exporter, to_jsonable
from .snapshot import SnapshotExporter, snapshot_exporter
from .tables import TableExporter, table_exporter

__all__ = [
    "ContourExporter",
    "ContourRecord",
    "FigureExporter",
    "ReportExporter",
    "SnapshotExporter",
    "TableExporter",
    "contour_exporter",
    "figure_exporter",
    "grid_window",
    "measure",
    "report_exporter",
    "snapshot_exporter",
    "table_exporter",
    "to_jsonable",
]
