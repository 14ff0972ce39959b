"""
Snapshot and checkpoint files.

A snapshot is a raw little-endian float64 array of shape (nx, ny) in row-major order
(``<stem>.f64``) with a JSON sidecar (``<stem>.json``). A checkpoint is a versioned
binary dump of the blob database.
"""

import json
import math
import os
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from scalar import BlobDatabase, FieldGrid, GridSpec
from utils.logging import get_logger
from utils.validation import SnapshotFormatError

logger = get_logger(__name__)

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"BLOBDB\x00\x00"
CHECKPOINT_VERSION = 1

# magic, version, n_blobs, t_now, horizon, window (4), cull_threshold, support_sigmas, margin
_HEADER = struct.Struct("<8sIQ" + "d" * 9)

# t0, r_c (2), theta0, W (4), I (xx, xy, yy), det_I, t_state
_RECORD = np.dtype([
    ("t0", "<f8"),
    ("r_c", "<f8", (2,)),
    ("theta0", "<f8"),
    ("W", "<f8", (4,)),
    ("I", "<f8", (3,)),
    ("det_I", "<f8"),
    ("t_state", "<f8"),
])


class SnapshotExporter:
    """
    Reader and writer for field snapshots and blob checkpoints.
    """

    @staticmethod
    def stem(path: PathLike) -> Path:
        """Snapshot stem of a stem, value file or sidecar path (labels may contain dots)."""
        path = Path(path)
        if path.suffix in (".json", ".f64"):
            return path.with_suffix("")
        return path

    @staticmethod
    def paths(stem: PathLike) -> Tuple[Path, Path]:
        """Value file and sidecar of a snapshot stem."""
        stem = Path(stem)
        return stem.parent / f"{stem.name}.f64", stem.parent / f"{stem.name}.json"

    def write_snapshot(
        self,
        grid: FieldGrid,
        stem: PathLike,
        metadata: Optional[Dict[str, Any]] = None
    ) -> Tuple[Path, Path]:
        """
        Write grid values and their metadata sidecar.

        Args:
            grid: Rendered field
            stem: Path without extension
            metadata: Extra keys for the sidecar (t_now, params echo, seed, lambda ...)

        Returns:
            Paths of the value file and the sidecar
        """
        stem = self.stem(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        values_path, meta_path = self.paths(stem)

        np.ascontiguousarray(grid.values, dtype="<f8").tofile(values_path)
        meta = {
            "origin": [float(grid.origin[0]), float(grid.origin[1])],
            "pixel_size": float(grid.pixel_size),
            "nx": int(grid.nx),
            "ny": int(grid.ny),
            "dtype": "<f8",
            "order": "C",
            "values_file": values_path.name,
        }
        meta.update(metadata or {})
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Wrote snapshot {values_path} ({grid.nx}x{grid.ny})")
        return values_path, meta_path

    def read_snapshot(self, stem: PathLike) -> Tuple[FieldGrid, Dict[str, Any]]:
        """
        Read a snapshot written by :meth:`write_snapshot`.

        Args:
            stem: Path without extension (a path ending in .json or .f64 is accepted)

        Returns:
            The grid and its metadata
        """
        stem = self.stem(stem)
        default_values, meta_path = self.paths(stem)
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            nx, ny = int(meta["nx"]), int(meta["ny"])
            values_path = meta_path.parent / meta.get("values_file", default_values.name)
            values = np.fromfile(values_path, dtype="<f8")
        except (OSError, KeyError, ValueError) as e:
            raise SnapshotFormatError(
                f"Cannot read snapshot {stem}: {e}", details={"path": str(stem)}
            ) from e
        if values.size != nx * ny:
            raise SnapshotFormatError(
                f"Snapshot {stem} holds {values.size} values, expected {nx}x{ny}",
                details={"path": str(stem)},
            )
        spec = GridSpec(
            origin=(float(meta["origin"][0]), float(meta["origin"][1])),
            pixel_size=float(meta["pixel_size"]),
            nx=nx,
            ny=ny,
        )
        return FieldGrid(spec=spec, values=values.reshape(nx, ny).astype(float)), meta

    def write_checkpoint(self, db: BlobDatabase, path: PathLike) -> Path:
        """
        Dump the blob database with a versioned header.

        Args:
            db: Blob database
            path: Output file

        Returns:
            The file path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = len(db)
        records = np.zeros(n, dtype=_RECORD)
        records["t0"] = db.t0
        records["r_c"] = db.r_c
        records["theta0"] = db.theta0
        records["W"] = db.W.reshape(n, 4)
        records["I"] = np.column_stack([db.I[:, 0, 0], db.I[:, 0, 1], db.I[:, 1, 1]])
        records["det_I"] = db.det_I
        records["t_state"] = db.t_state
        horizon = math.nan if db.horizon is None else float(db.horizon)
        header = _HEADER.pack(
            CHECKPOINT_MAGIC, CHECKPOINT_VERSION, n, db.t_now, horizon,
            *db.window, db.cull_threshold, db.support_sigmas, db.margin,
        )
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as f:
            f.write(header)
            f.write(records.tobytes())
        os.replace(tmp, path)
        logger.info(f"Wrote checkpoint {path} with {n} blobs at t={db.t_now:.6g}")
        return path

    def read_checkpoint(self, path: PathLike) -> BlobDatabase:
        """
        Restore a blob database from a checkpoint.

        Args:
            path: Checkpoint file

        Returns:
            The database, bit-identical to the one written
        """
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise SnapshotFormatError(f"Cannot read checkpoint {path}: {e}", details={"path": str(path)}) from e
        if len(raw) < _HEADER.size:
            raise SnapshotFormatError(f"Checkpoint {path} is truncated", details={"path": str(path)})
        magic, version, n, t_now, horizon, *rest = _HEADER.unpack_from(raw)
        if magic != CHECKPOINT_MAGIC:
            raise SnapshotFormatError(f"{path} is not a blob checkpoint", details={"path": str(path)})
        if version != CHECKPOINT_VERSION:
            raise SnapshotFormatError(
                f"Unsupported checkpoint version {version}", details={"path": str(path), "version": version}
            )
        window, (cull_threshold, support_sigmas, margin) = tuple(rest[:4]), rest[4:]
        body = raw[_HEADER.size:]
        if len(body) != n * _RECORD.itemsize:
            raise SnapshotFormatError(
                f"Checkpoint {path} holds {len(body)} record bytes, expected {n * _RECORD.itemsize}",
                details={"path": str(path)},
            )
        records = np.frombuffer(body, dtype=_RECORD, count=n)

        db = BlobDatabase(window, t_now, cull_threshold, support_sigmas, margin)
        db.horizon = None if math.isnan(horizon) else horizon
        db.t0 = records["t0"].astype(float)
        db.r_c = records["r_c"].astype(float).reshape(n, 2)
        db.theta0 = records["theta0"].astype(float)
        db.W = records["W"].astype(float).reshape(n, 2, 2)
        I = np.empty((n, 2, 2))
        I[:, 0, 0] = records["I"][:, 0]
        I[:, 0, 1] = I[:, 1, 0] = records["I"][:, 1]
        I[:, 1, 1] = records["I"][:, 2]
        db.I = I
        db.det_I = records["det_I"].astype(float)
        db.t_state = records["t_state"].astype(float)
        logger.info(f"Read checkpoint {path} with {n} blobs at t={t_now:.6g}")
        return db


# Create a global instance
snapshot_exporter = SnapshotExporter()
