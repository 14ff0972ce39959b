"""
SVG figures: field snapshots, contours, local slopes, PDFs with tail fits and the
driving-function diffusivity curves.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from contour import Contour  # noqa: E402
from loewner import DiffusivityEstimate  # noqa: E402
from scalar import FieldGrid  # noqa: E402
from stats import LogHistogram, TailFit, TailKind  # noqa: E402
from utils.logging import get_logger  # noqa: E402

logger = get_logger(__name__)

PathLike = Union[str, Path]

_TAIL_STYLES = {
    TailKind.POWER_LAW_LEFT: ("C1", "-"),
    TailKind.POWER_LAW_RIGHT: ("C2", "-"),
    TailKind.LOG_NORMAL_RIGHT: ("C3", "--"),
    TailKind.POISSON_PREDICTION: ("0.4", ":"),
}


def _tail_curve(h: LogHistogram, fit: TailFit) -> Tuple[np.ndarray, np.ndarray]:
    """Fitted log density over the fit window, anchored to the histogram in that window."""
    u = np.linspace(np.log(fit.window[0]), np.log(fit.window[1]), 50)
    if fit.kind == TailKind.LOG_NORMAL_RIGHT:
        shape = -((u - fit.mu) ** 2) / (2.0 * fit.sigma ** 2)
    else:
        shape = (fit.exponent + 1.0) * u
    inside = (h.centers >= u[0]) & (h.centers <= u[-1]) & (h.counts > 0)
    if not np.any(inside):
        return u, np.full_like(u, np.nan)
    uc = h.centers[inside]
    ref = (
        -((uc - fit.mu) ** 2) / (2.0 * fit.sigma ** 2)
        if fit.kind == TailKind.LOG_NORMAL_RIGHT
        else (fit.exponent + 1.0) * uc
    )
    offset = float(np.mean(np.log(h.densities[inside]) - ref))
    return u, np.exp(shape + offset)


class FigureExporter:
    """
    Writer of the SVG figure set.
    """

    def _save(self, fig: "plt.Figure", path: PathLike) -> Optional[Path]:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", bbox_inches="tight")
            logger.info(f"Wrote figure {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing figure {path}: {str(e)}")
            return None
        finally:
            plt.close(fig)

    def plot_field(
        self,
        grid: FieldGrid,
        path: PathLike,
        contours: Sequence[Contour] = (),
        max_pixels: int = 1024
    ) -> Optional[Path]:
        """
        Snapshot of the field with optional isolines drawn on top.

        Args:
            grid: Rendered field
            path: Output SVG
            contours: Isolines to overlay
            max_pixels: Larger grids are subsampled to this many pixels per side
        """
        stride = max(1, int(np.ceil(max(grid.nx, grid.ny) / max_pixels)))
        xmin, ymin, xmax, ymax = grid.spec.extent
        vmax = float(np.max(np.abs(grid.values))) or 1.0
        fig, ax = plt.subplots(figsize=(7, 7))
        im = ax.imshow(
            grid.values[::stride, ::stride].T, origin="lower", extent=(xmin, xmax, ymin, ymax),
            cmap="RdBu_r", vmin=-vmax, vmax=vmax, interpolation="nearest",
        )
        for c in contours:
            v = np.vstack([c.vertices, c.vertices[:1]]) if c.closed else c.vertices
            ax.plot(v[:, 0], v[:, 1], color="k", lw=0.3)
        fig.colorbar(im, ax=ax, shrink=0.8, label=r"$\theta$")
        ax.set_xlabel("x / L")
        ax.set_ylabel("y / L")
        ax.set_aspect("equal")
        return self._save(fig, path)

    def plot_contour(self, c: Contour, path: PathLike, title: Optional[str] = None) -> Optional[Path]:
        """Single contour, e.g. the longest isoline of a snapshot."""
        v = np.vstack([c.vertices, c.vertices[:1]]) if c.closed else c.vertices
        fig, ax = plt.subplots(figsize=(7, 7))
        ax.plot(v[:, 0], v[:, 1], color="k", lw=0.5)
        ax.set_xlabel("x / L")
        ax.set_ylabel("y / L")
        ax.set_aspect("equal")
        ax.set_title(title or f"contour {c.contour_id}")
        return self._save(fig, path)

    def plot_local_slopes(
        self,
        slopes: Dict[float, List[Tuple[float, float]]],
        path: PathLike,
        title: str = "Local dimension"
    ) -> Optional[Path]:
        """
        Local D_q against box size, one line per q.

        Args:
            slopes: (scale, D_q_local) pairs per q, typically averaged over contours
            path: Output SVG
            title: Figure title
        """
        fig, ax = plt.subplots(figsize=(7, 5))
        for q, pairs in sorted(slopes.items()):
            if not pairs:
                continue
            s, d = np.array(pairs).T
            ax.semilogx(s, d, marker="o", ms=3, label=f"q = {q:g}")
        ax.axvline(1.0, color="0.6", ls=":", lw=1)
        ax.set_xlabel(r"$\varepsilon / L$")
        ax.set_ylabel(r"local $D_q$")
        ax.set_title(title)
        ax.legend()
        ax.grid(True, which="both", ls=":")
        return self._save(fig, path)

    def plot_pdf(
        self,
        h: LogHistogram,
        path: PathLike,
        fits: Sequence[TailFit] = (),
        xlabel: str = "x / L"
    ) -> Optional[Path]:
        """
        Log-binned PDF with fitted tails and the Poisson overlay.

        Args:
            h: Histogram in log(x/L)
            path: Output SVG
            fits: Tail fits to overlay
            xlabel: Axis label
        """
        occupied = h.counts > 0
        x = np.exp(h.centers[occupied])
        fig, ax = plt.subplots(figsize=(7, 5))
        ax.errorbar(
            x, h.densities[occupied], yerr=h.density_errors[occupied],
            fmt="o", ms=3, color="C0", label=f"N = {h.n_total}",
        )
        for fit in fits:
            u, y = _tail_curve(h, fit)
            color, ls = _TAIL_STYLES[fit.kind]
            if fit.kind == TailKind.LOG_NORMAL_RIGHT:
                label = rf"log-normal $\sigma$ = {fit.sigma:.2f}"
            else:
                label = f"{fit.kind.value} {fit.exponent:+.2f}"
            ax.plot(np.exp(u), y, color=color, ls=ls, label=label)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("PDF per unit log x")
        ax.legend()
        ax.grid(True, which="both", ls=":")
        return self._save(fig, path)

    def plot_diffusivity(
        self,
        estimates: Dict[str, DiffusivityEstimate],
        path: PathLike
    ) -> Optional[Path]:
        """
        <xi^2(t)> and <xi^2>/t for each group, with the fitted slope.

        Args:
            estimates: Diffusivity estimate per group label
            path: Output SVG
        """
        fig, (ax_msd, ax_ratio) = plt.subplots(1, 2, figsize=(11, 4.5))
        for i, (group, e) in enumerate(sorted(estimates.items())):
            color = f"C{i % 10}"
            ax_msd.plot(e.ladder, e.msd, color=color, label=f"{group} (n = {e.n_contours})")
            t_lo, t_hi = e.t_window
            t = np.linspace(t_lo, t_hi, 20)
            inside = (e.ladder >= t_lo) & (e.ladder <= t_hi)
            offset = float(np.mean(e.msd[inside] - e.kappa * e.ladder[inside]))
            ax_msd.plot(t, e.kappa * t + offset, color=color, ls="--", lw=1)
            ax_ratio.plot(e.ladder, e.msd_over_t, color=color, label=rf"$\kappa$ = {e.kappa:.2f}")
        ax_msd.set_xlabel("capacity time t")
        ax_msd.set_ylabel(r"$\langle \xi^2 \rangle$")
        ax_ratio.set_xlabel("capacity time t")
        ax_ratio.set_ylabel(r"$\langle \xi^2 \rangle / t$")
        for ax in (ax_msd, ax_ratio):
            ax.grid(True, ls=":")
            ax.legend(fontsize="small")
        return self._save(fig, path)


# Create a global instance
figure_exporter = FigureExporter()
