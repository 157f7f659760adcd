"""Deterministic matplotlib setup shared by the plotting scripts.

SVG output is made byte-reproducible by pinning the hash salt and dropping
the date metadata; styling uses a fixed palette keyed by sorted labels.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

matplotlib.rcParams["svg.hashsalt"] = "letf-figures"

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

MARKERS = ["o", "s", "^", "v", "D", "P", "X", "*", "h", "<"]


def style_for(index: int) -> dict:
    return {"color": PALETTE[index % len(PALETTE)],
            "marker": MARKERS[index % len(MARKERS)]}


def save_figure(fig, out_dir: str | Path, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def caption_note(n_errors: int) -> str:
    if n_errors == 0:
        return ""
    plural = "s" if n_errors != 1 else ""
    return f" ({n_errors} failed run{plural} excluded)"
