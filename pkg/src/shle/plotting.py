"""Static figures for the CLI report paths.

Figures are written as SVG with a fixed hash salt and no date metadata, so
the same data always produces the same bytes.  Each data series is tagged
with a ``gid`` that survives into the SVG as a group id.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .io_formats import ResultsTable  # noqa: E402

RAW_GID = "h_df"
FILTERED_GID = "h_tf"

_STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.hashsalt": "shle",
    "svg.fonttype": "none",
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_heights(table: ResultsTable, path: str | Path, ground_truth: float | None = None) -> None:
    """Raw and Kalman-filtered height against frame index."""
    frames = [r.frame_index for r in table.rows]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.7))
        ax.plot(frames, [r.h_df for r in table.rows], color="0.55", lw=1.0, marker=".", ms=3,
                label="raw $h_{df}$", gid=RAW_GID)
        ax.plot(frames, [r.h_tf for r in table.rows], color="tab:red", lw=1.6,
                label="filtered $h_{tf}$", gid=FILTERED_GID)
        if ground_truth is not None:
            ax.axhline(ground_truth, color="k", ls="--", lw=0.8, label="ground truth", gid="ground_truth")
        ax.set_xlabel("frame")
        ax.set_ylabel("height (m)")
        ax.set_title(f"scene height {table.scene_height_m:.3f} m")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_sweep(param: str, values: Sequence[float], he: Sequence[float], her: Sequence[float], path: str | Path) -> None:
    """|HE| (black, left axis) and HER (red, right axis) against a swept value."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.plot(values, [abs(v) for v in he], color="k", marker="o", ms=4, gid="abs_he")
        ax.set_xlabel(param)
        ax.set_ylabel("|HE| (m)")
        twin = ax.twinx()
        twin.plot(values, her, color="tab:red", marker="s", ms=4, gid="her")
        twin.set_ylabel("HER (%)", color="tab:red")
        twin.tick_params(axis="y", colors="tab:red")
        fig.tight_layout()
        _save(fig, path)
