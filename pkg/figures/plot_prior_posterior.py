#!/usr/bin/env python3
"""Prior-versus-transformed scatter plots for weighted-sample transforms.

Input CSV columns: prior_0..prior_{d-1}, transformed_0..transformed_{d-1}
(one row per sample).  Produces one prior-vs-transformed panel per dimension
plus a two-dimensional overlay when d >= 2, and reports how many transformed
samples land outside the bounding box of the prior samples.

Usage:
    python figures/plot_prior_posterior.py --csv samples.csv --out figs/
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np
import matplotlib.pyplot as plt

from plot_common import save_figure


def load_samples(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        prior_cols = sorted(n for n in names if n.startswith("prior_"))
        trans_cols = sorted(n for n in names if n.startswith("transformed_"))
        if not prior_cols or len(prior_cols) != len(trans_cols):
            raise ValueError(
                "expected matching prior_i / transformed_i columns, got "
                f"{names}")
        rows = list(reader)
    prior = np.array([[float(r[c]) for c in prior_cols] for r in rows]).T
    trans = np.array([[float(r[c]) for c in trans_cols] for r in rows]).T
    return prior, trans


def plot_prior_posterior(prior: np.ndarray, transformed: np.ndarray,
                         out_dir: str) -> dict:
    if prior.shape != transformed.shape:
        raise ValueError("prior and transformed sample shapes differ")
    dim, n = prior.shape
    lo = prior.min(axis=1)
    hi = prior.max(axis=1)
    outside = np.any((transformed < lo[:, None]) | (transformed > hi[:, None]),
                     axis=0)
    n_outside = int(outside.sum())
    panels = dim + (1 if dim >= 2 else 0)
    fig, axes = plt.subplots(1, panels, figsize=(4.0 * panels, 3.6))
    axes = np.atleast_1d(axes)
    for k in range(dim):
        ax = axes[k]
        ax.scatter(prior[k], transformed[k], s=8, color="#1f77b4", alpha=0.6)
        span = [min(prior[k].min(), transformed[k].min()),
                max(prior[k].max(), transformed[k].max())]
        ax.plot(span, span, color="#7f7f7f", lw=0.8)
        ax.axhline(lo[k], color="#d62728", lw=0.6, ls="--")
        ax.axhline(hi[k], color="#d62728", lw=0.6, ls="--")
        ax.set_xlabel(f"prior sample, dim {k}")
        ax.set_ylabel(f"transformed sample, dim {k}")
    if dim >= 2:
        ax = axes[-1]
        ax.scatter(prior[0], prior[1], s=8, color="#7f7f7f", alpha=0.5,
                   label="prior")
        ax.scatter(transformed[0], transformed[1], s=8, color="#d62728",
                   alpha=0.6, label="transformed")
        ax.set_xlabel("dim 0")
        ax.set_ylabel("dim 1")
        ax.legend(fontsize=8)
    fig.suptitle(f"prior vs transformed samples "
                 f"({n_outside} of {n} outside the prior range)")
    fig.tight_layout()
    path = save_figure(fig, out_dir, "prior_posterior.svg")
    return {"path": path, "n_outside": n_outside, "n_samples": n}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--filter", default=None, help="unused; accepted for interface parity")
    args = parser.parse_args(argv)
    try:
        prior, trans = load_samples(args.csv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    info = plot_prior_posterior(prior, trans, args.out)
    print(f"{info['path']} ({info['n_outside']} transformed samples outside the prior range)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
