"""Static SVG figures with byte-stable output for fixed input."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import Mesh  # noqa: E402

__all__ = ["plot_fields", "plot_history"]

_RC = {"svg.hashsalt": "plapsys", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_fields(path, mesh: Mesh, fields: dict, title: str = "") -> None:
    """Line plot (1D) or one heatmap per field (2D)."""
    with plt.rc_context(_RC):
        if mesh.dim == 1:
            fig, ax = plt.subplots(figsize=(6, 4))
            x = mesh.coords[0]
            for name, f in fields.items():
                ax.plot(x, np.asarray(getattr(f, "values", f)), label=name)
            ax.set_xlabel("x")
            ax.legend()
        else:
            k = len(fields)
            fig, axes = plt.subplots(1, k, figsize=(4 * k, 3.6), squeeze=False)
            (x0, x1), (y0, y1) = mesh.extents
            for ax, (name, f) in zip(axes[0], fields.items()):
                vals = np.asarray(getattr(f, "values", f))
                im = ax.imshow(vals.T, origin="lower", extent=(x0, x1, y0, y1), cmap="viridis")
                ax.set_title(name)
                fig.colorbar(im, ax=ax, shrink=0.8)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def plot_history(path, values, ylabel: str = "residual", log: bool = True) -> None:
    """Residual history against iteration number."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        vals = np.asarray(values, dtype=float)
        k = np.arange(1, len(vals) + 1)
        if log and len(vals) and np.all(vals > 0):
            ax.semilogy(k, vals, marker=".")
        else:
            ax.plot(k, vals, marker=".")
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        _save(fig, path)
