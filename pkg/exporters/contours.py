"""
Contour files.

Text format, one record per contour::

    # contour <id> <closed> <n> <level> <P> <R> <R_gyr> <touches_boundary>
    x y
    ...

The binary variant stores the same header fields as a packed struct followed by n
(x, y) float64 pairs. A JSON sidecar ``<stem>.json`` carries the snapshot provenance.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from contour import Contour, gyration_radius, mean_radius, perimeter
from utils.logging import get_logger
from utils.validation import SnapshotFormatError

logger = get_logger(__name__)

PathLike = Union[str, Path]

BINARY_MAGIC = b"CONTOUR1"

# id, closed, n, level, P, R, R_gyr, touches_boundary
_RECORD_HEADER = struct.Struct("<qBQdddd?")


@dataclass
class ContourRecord:
    """A contour with its precomputed geometry."""
    contour: Contour
    perimeter: float
    mean_radius: float
    gyration_radius: float


def measure(c: Contour, weighting: str = "arc") -> ContourRecord:
    """
    Compute P, R and R_gyr of a contour.

    Args:
        c: Contour with at least 3 vertices
        weighting: Vertex weighting of the mean radius

    Returns:
        The record
    """
    return ContourRecord(
        contour=c,
        perimeter=perimeter(c),
        mean_radius=mean_radius(c, weighting=weighting) if len(c) >= 3 else 0.0,
        gyration_radius=gyration_radius(c),
    )


class ContourExporter:
    """
    Reader and writer for contour files in text and binary form.
    """

    def write_text(
        self,
        records: Sequence[ContourRecord],
        path: PathLike,
        metadata: Optional[Dict[str, Any]] = None
    ) -> Path:
        """
        Write contours as text.

        Args:
            records: Measured contours
            path: Output file (``.txt``)
            metadata: Provenance written to the JSON sidecar

        Returns:
            The file path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for r in records:
                c = r.contour
                f.write(
                    f"# contour {c.contour_id} {int(c.closed)} {len(c)} {c.level!r} "
                    f"{r.perimeter!r} {r.mean_radius!r} {r.gyration_radius!r} {int(c.touches_boundary)}\n"
                )
                np.savetxt(f, c.vertices, fmt="%.17g")
        self._write_sidecar(path, len(records), metadata)
        logger.info(f"Wrote {len(records)} contours to {path}")
        return path

    def read_text(self, path: PathLike) -> List[ContourRecord]:
        """
        Read a text contour file.

        Args:
            path: File written by :meth:`write_text`

        Returns:
            The records in file order
        """
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise SnapshotFormatError(f"Cannot read contour file {path}: {e}", details={"path": str(path)}) from e

        records: List[ContourRecord] = []
        i = 0
        while i < len(lines):
            line = lines[i].strip()
            if not line:
                i += 1
                continue
            fields = line.split()
            if fields[:2] != ["#", "contour"] or len(fields) != 10:
                raise SnapshotFormatError(
                    f"{path}:{i + 1}: expected a contour header, got {line!r}",
                    details={"path": str(path), "line": i + 1},
                )
            cid, closed, n = int(fields[2]), bool(int(fields[3])), int(fields[4])
            level, p, r, g = (float(v) for v in fields[5:9])
            touches = bool(int(fields[9]))
            body = lines[i + 1:i + 1 + n]
            if len(body) != n:
                raise SnapshotFormatError(f"{path}: contour {cid} is truncated", details={"path": str(path)})
            vertices = np.array([[float(v) for v in row.split()] for row in body]).reshape(n, 2)
            contour = Contour(
                vertices=vertices, closed=closed, level=level,
                touches_boundary=touches, contour_id=cid,
            )
            records.append(ContourRecord(contour, p, r, g))
            i += 1 + n
        return records

    def write_binary(
        self,
        records: Sequence[ContourRecord],
        path: PathLike,
        metadata: Optional[Dict[str, Any]] = None
    ) -> Path:
        """
        Write contours in the compact binary form.

        Args:
            records: Measured contours
            path: Output file (``.bin``)
            metadata: Provenance written to the JSON sidecar

        Returns:
            The file path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(struct.pack("<Q", len(records)))
            for r in records:
                c = r.contour
                f.write(_RECORD_HEADER.pack(
                    c.contour_id, int(c.closed), len(c), c.level,
                    r.perimeter, r.mean_radius, r.gyration_radius, c.touches_boundary,
                ))
                f.write(np.ascontiguousarray(c.vertices, dtype="<f8").tobytes())
        self._write_sidecar(path, len(records), metadata)
        logger.info(f"Wrote {len(records)} contours to {path}")
        return path

    def read_binary(self, path: PathLike) -> List[ContourRecord]:
        """
        Read a binary contour file.

        Args:
            path: File written by :meth:`write_binary`

        Returns:
            The records in file order
        """
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise SnapshotFormatError(f"Cannot read contour file {path}: {e}", details={"path": str(path)}) from e
        if raw[:len(BINARY_MAGIC)] != BINARY_MAGIC:
            raise SnapshotFormatError(f"{path} is not a binary contour file", details={"path": str(path)})
        (count,) = struct.unpack_from("<Q", raw, len(BINARY_MAGIC))
        offset = len(BINARY_MAGIC) + 8
        records: List[ContourRecord] = []
        try:
            for _ in range(count):
                cid, closed, n, level, p, r, g, touches = _RECORD_HEADER.unpack_from(raw, offset)
                offset += _RECORD_HEADER.size
                vertices = np.frombuffer(raw, dtype="<f8", count=2 * n, offset=offset).reshape(n, 2)
                offset += 16 * n
                contour = Contour(
                    vertices=vertices.astype(float), closed=bool(closed), level=level,
                    touches_boundary=bool(touches), contour_id=cid,
                )
                records.append(ContourRecord(contour, p, r, g))
        except (struct.error, ValueError) as e:
            raise SnapshotFormatError(f"{path} is truncated: {e}", details={"path": str(path)}) from e
        return records

    def read(self, path: PathLike) -> List[ContourRecord]:
        """Read a contour file, choosing the format from the suffix."""
        path = Path(path)
        return self.read_binary(path) if path.suffix == ".bin" else self.read_text(path)

    def read_metadata(self, path: PathLike) -> Dict[str, Any]:
        """Provenance sidecar of a contour file; empty when missing."""
        meta_path = Path(path).with_suffix(".json")
        if not meta_path.exists():
            return {}
        return json.loads(meta_path.read_text(encoding="utf-8"))

    def _write_sidecar(self, path: Path, n: int, metadata: Optional[Dict[str, Any]]) -> None:
        meta = {"n_contours": n}
        meta.update(metadata or {})
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def grid_window(meta: Dict[str, Any]) -> Optional[Tuple[float, float, float, float]]:
    """Pixel-center extent (xmin, ymin, xmax, ymax) of the source grid recorded in a sidecar."""
    try:
        x0, y0 = meta["origin"]
        p, nx, ny = meta["pixel_size"], meta["nx"], meta["ny"]
    except KeyError:
        return None
    return (x0 + 0.5 * p, y0 + 0.5 * p, x0 + (nx - 0.5) * p, y0 + (ny - 0.5) * p)


# Create a global instance
contour_exporter = ContourExporter()
