"""
CSV tables for dimensions, local slopes, histograms and driving functions.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fractal import DimensionEstimate, EnsembleDimension
from loewner import DiffusivityEstimate, DrivingFunction
from stats import LogHistogram
from utils.logging import get_logger
from utils.validation import SnapshotFormatError

logger = get_logger(__name__)

PathLike = Union[str, Path]


class TableExporter:
    """
    Writer of the pipeline's CSV tables; every table is a pandas DataFrame.
    """

    def write_frame(self, frame: pd.DataFrame, path: PathLike) -> Optional[Path]:
        """
        Write one DataFrame; failures are logged and reported as None.

        Args:
            frame: Table to write
            path: Output CSV path

        Returns:
            The file path or None if failed
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format="%.17g")
            logger.info(f"Wrote {len(frame)} rows to {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing table {path}: {str(e)}")
            return None

    def dimensions_frame(
        self,
        estimates: Iterable[Union[DimensionEstimate, EnsembleDimension]],
        contour_ids: Optional[Sequence[int]] = None
    ) -> pd.DataFrame:
        """
        Rows (contour_id, q, scale_lo, scale_hi, D_q, stderr); ensemble rows use contour_id -1.

        Args:
            estimates: Per-contour or ensemble estimates
            contour_ids: Contour id of each per-contour estimate
        """
        rows = []
        for i, e in enumerate(estimates):
            row = {
                "contour_id": -1 if contour_ids is None else int(contour_ids[i]),
                "q": e.q,
                "scale_lo": e.scale_lo,
                "scale_hi": e.scale_hi,
                "D_q": e.D_q,
                "stderr": e.stderr,
            }
            if isinstance(e, EnsembleDimension):
                row.update(
                    spread_stderr=e.spread_stderr, fit_stderr=e.fit_stderr, n_contours=e.n_contours
                )
            rows.append(row)
        return pd.DataFrame(
            rows, columns=["contour_id", "q", "scale_lo", "scale_hi", "D_q", "stderr",
                           "spread_stderr", "fit_stderr", "n_contours"],
        )

    def slopes_frame(self, slopes: Dict[Tuple[int, float], List[Tuple[float, float]]]) -> pd.DataFrame:
        """
        Local slopes keyed by (contour_id, q) as rows (contour_id, q, scale, D_q_local).
        """
        rows = [
            {"contour_id": cid, "q": q, "scale": s, "D_q_local": d}
            for (cid, q), pairs in sorted(slopes.items())
            for s, d in pairs
        ]
        return pd.DataFrame(rows, columns=["contour_id", "q", "scale", "D_q_local"])

    def histogram_frame(self, h: LogHistogram) -> pd.DataFrame:
        """Bins of a log histogram with densities and their Poisson errors."""
        return pd.DataFrame({
            "log_lo": h.bin_edges[:-1],
            "log_hi": h.bin_edges[1:],
            "log_center": h.centers,
            "count": h.counts,
            "density": h.densities,
            "density_err": h.density_errors,
        })

    def read_histogram(self, path: PathLike) -> LogHistogram:
        """Rebuild a histogram from its CSV dump."""
        try:
            frame = pd.read_csv(path)
            edges = np.append(frame["log_lo"].to_numpy(), frame["log_hi"].to_numpy()[-1])
            return LogHistogram(bin_edges=edges, counts=frame["count"].to_numpy())
        except (OSError, KeyError, IndexError, pd.errors.ParserError) as e:
            raise SnapshotFormatError(f"Cannot read histogram {path}: {e}", details={"path": str(path)}) from e

    def drivings_frame(self, drivings: Sequence[DrivingFunction], group: str = "") -> pd.DataFrame:
        """Rows (group, contour_id, step, t, xi) for every driving sample."""
        frames = [
            pd.DataFrame({
                "group": group,
                "contour_id": d.contour_id,
                "step": np.arange(len(d)),
                "t": d.t,
                "xi": d.xi,
            })
            for d in drivings
        ]
        if not frames:
            return pd.DataFrame(columns=["group", "contour_id", "step", "t", "xi"])
        return pd.concat(frames, ignore_index=True)

    def read_drivings(self, path: PathLike) -> Dict[str, List[DrivingFunction]]:
        """
        Read a driving-function CSV back into groups.

        Args:
            path: CSV with columns (group, contour_id, step, t, xi)

        Returns:
            Drivings per group, ordered by contour id
        """
        try:
            frame = pd.read_csv(path, dtype={"group": str}, keep_default_na=False)
            groups: Dict[str, List[DrivingFunction]] = {}
            for (group, cid), rows in frame.groupby(["group", "contour_id"], sort=True):
                rows = rows.sort_values("step")
                groups.setdefault(str(group), []).append(
                    DrivingFunction(t=rows["t"].to_numpy(), xi=rows["xi"].to_numpy(), contour_id=int(cid))
                )
        except (OSError, KeyError, pd.errors.ParserError) as e:
            raise SnapshotFormatError(f"Cannot read drivings {path}: {e}", details={"path": str(path)}) from e
        return groups

    def diffusivity_frame(self, estimate: DiffusivityEstimate, group: str = "") -> pd.DataFrame:
        """Ensemble curve rows (group, t, msd, msd_over_t)."""
        return pd.DataFrame({
            "group": group,
            "t": estimate.ladder,
            "msd": estimate.msd,
            "msd_over_t": estimate.msd_over_t,
        })


# Create a global instance
table_exporter = TableExporter()
