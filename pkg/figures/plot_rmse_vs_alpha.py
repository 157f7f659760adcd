#!/usr/bin/env python3
"""Time-averaged RMSE against the bridging parameter, one line per ensemble size.

Missing alpha cells break the line rather than being interpolated.

Usage:
    python figures/plot_rmse_vs_alpha.py --csv results.csv --out figs/ \
        [--filter "pipeline=hybrid:etpf2_exact"] [--score crps]
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

import numpy as np
import matplotlib.pyplot as plt

from plot_common import caption_note, save_figure, style_for
from results_table import ResultTable


def plot_rmse_vs_alpha(table: ResultTable, out_dir: str, score: str = "rmse") -> dict:
    rows = [row for row in table.rows if row["alpha"] is not None]
    if not rows:
        raise ValueError("no rows with a bridging parameter")
    alphas = sorted({row["alpha"] for row in rows})
    series: dict[int, dict[float, float]] = defaultdict(dict)
    for row in rows:
        series[row["M"]][row["alpha"]] = row[score]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    counts = {}
    for idx, m in enumerate(sorted(series)):
        cells = series[m]
        xs = np.array(alphas)
        ys = np.array([cells.get(a, np.nan) for a in alphas])  # nan breaks the line
        ax.plot(xs, ys, label=f"M = {m}", **style_for(idx))
        counts[m] = int(np.sum(~np.isnan(ys)))
    ax.set_xlabel("bridging parameter alpha")
    ax.set_ylabel(f"time-averaged {score.upper()}")
    ax.set_title(f"{score.upper()} vs bridging parameter{caption_note(table.n_errors)}")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    path = save_figure(fig, out_dir, f"{score}_vs_alpha.svg")
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
    info = plot_rmse_vs_alpha(table, args.out, args.score)
    print(info["path"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
