#!/usr/bin/env python3
"""Generate prior/transformed sample CSVs for the scatter-plot script.

Draws a two-dimensional Gaussian prior, weights it against a synthetic
observation of the first component, and applies a selection of weighted-
sample transforms.  Each transform writes one CSV with columns
prior_0, prior_1, transformed_0, transformed_1 consumable by
figures/plot_prior_posterior.py.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from letf import (Ensemble, ObservationModel, TransformMatrix, apply_transform,
                  importance_weights, riccati_correction, second_order_transform,
                  sinkhorn)


def write_samples(path: Path, prior: np.ndarray, transformed: np.ndarray):
    dim = prior.shape[0]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"prior_{k}" for k in range(dim)]
                        + [f"transformed_{k}" for k in range(dim)])
        for j in range(prior.shape[1]):
            writer.writerow(list(prior[:, j]) + list(transformed[:, j]))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="scatter_demo")
    parser.add_argument("--m", type=int, default=300, help="number of samples")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    prior = np.vstack([3.0 + 1.0 * rng.standard_normal(args.m),
                       12.0 + 2.0 * rng.standard_normal(args.m)])
    ens = Ensemble(prior)
    obs = ObservationModel(h=lambda z: z[:1], r=np.array([[0.5]]),
                           observed_indices=(0,))
    y = np.array([4.2])
    w = importance_weights(ens, y, obs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = sinkhorn(ens, w, lam=40.0, max_iter=200_000)
    corrected = TransformMatrix(base.d + riccati_correction(base, w).delta, weights=w)
    transforms = {
        "netf_optimal": second_order_transform(None, w, ens, mode="netf_optimal"),
        "netf_symmetric": second_order_transform(None, w, ens, mode="netf_symmetric"),
        "etpf_sinkhorn": base,
        "etpf2_sinkhorn": corrected,
    }
    for name, d in transforms.items():
        analysis = apply_transform(ens, d)
        write_samples(out / f"{name}.csv", prior, analysis.states)
        print(out / f"{name}.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
