#!/usr/bin/env python3
"""Time-averaged RMSE (and CRPS) against ensemble size, one line per pipeline.

Usage:
    python figures/plot_rmse_vs_m.py --csv results.csv --out figs/ \
        [--filter "pipeline=esrf|etpf_exact"] [--score crps]
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

from plot_common import caption_note, save_figure, style_for
from results_table import ResultTable


def plot_rmse_vs_m(table: ResultTable, out_dir: str, score: str = "rmse") -> dict:
    """One marker per (pipeline, M) cell; returns per-line point counts."""
    m_values = sorted({row["M"] for row in table.rows})
    if len(m_values) < 2:
        raise ValueError("need results for at least two distinct ensemble sizes")
    series: dict[str, dict[int, float]] = defaultdict(dict)
    for row in table.rows:
        series[row["pipeline"]][row["M"]] = row[score]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    counts = {}
    for idx, pipeline in enumerate(sorted(series)):
        cells = series[pipeline]
        xs = [m for m in m_values if m in cells]
        ys = [cells[m] for m in xs]
        ax.plot(xs, ys, label=pipeline, **style_for(idx))
        counts[pipeline] = len(xs)
    ax.set_xlabel("ensemble size M")
    ax.set_ylabel(f"time-averaged {score.upper()}")
    ax.set_title(f"{score.upper()} vs ensemble size{caption_note(table.n_errors)}")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    path = save_figure(fig, out_dir, f"{score}_vs_m.svg")
    return {"path": path, "points_per_line": counts, "excluded": table.n_errors}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--filter", default=None)
    parser.add_argument("--score", default="rmse", choices=["rmse", "crps"])
    args = parser.parse_args(argv)
    table = ResultTable.load(args.csv).filter(args.filter)
    if not table.rows:
        print(f"error: no rows match filter {args.filter!r}", file=sys.stderr)
        return 1
    info = plot_rmse_vs_m(table, args.out, args.score)
    print(info["path"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
