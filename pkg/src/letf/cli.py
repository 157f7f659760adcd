"""Batch front end: validate configs, run experiments and sweeps, emit CSV.

Config files are YAML (the schema is documented in the README); results are
appended to a CSV whose column order is part of the output contract:

    config_hash, model, pipeline, M, alpha, lambda, beta, K, burn_in,
    seed_truth, seed_obs, seed_init, seed_rejuv, seed_rot, rmse, crps,
    wall_time_s, error
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .harness import (PIPELINES, ExperimentConfig, SeedSet, canonical_pipeline,
                      run_experiment)
from .kalman import PARTICLE_MODES, LocalizationConfig
from .models import ModelSpec

CSV_COLUMNS = ["config_hash", "model", "pipeline", "M", "alpha", "lambda", "beta",
               "K", "burn_in", "seed_truth", "seed_obs", "seed_init", "seed_rejuv",
               "seed_rot", "rmse", "crps", "wall_time_s", "error"]

_DEFAULTS = {
    "model": {"name": None, "params": {}, "dt_internal": 0.01, "dt_obs": None},
    "observations": {"kind": "first_component", "r_value": 8.0, "parity": "odd"},
    "ensemble": {"size": None},
    "pipeline": {"id": None, "alpha": None, "lambda": None,
                 "inner": "etpf2_exact", "order": "particle_first"},
    "rejuvenation": {"beta": 0.2},
    "run": {"n_cycles": 1000, "burn_in": None},
    "seeds": {"truth": 101, "obs_noise": 202, "init_ensemble": 303,
              "rejuvenation": 404, "random_rotations": 505},
    "localization": None,
    "sweep": None,
}

_REQUIRED = [("model", "name"), ("pipeline", "id"), ("ensemble", "size")]


class ConfigError(ValueError):
    """Invalid configuration; message lists the offending keys."""


def _merge_defaults(raw: dict) -> dict:
    cfg = {}
    for section, defaults in _DEFAULTS.items():
        value = raw.get(section)
        if isinstance(defaults, dict):
            merged = dict(defaults)
            if value is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"section '{section}' must be a mapping")
                unknown = set(value) - set(defaults)
                if unknown:
                    raise ConfigError(
                        f"unknown keys in section '{section}': {sorted(unknown)}")
                merged.update(value)
            cfg[section] = merged
        else:
            cfg[section] = value
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    return cfg


def normalize_config(raw: dict) -> dict:
    """Fill defaults and validate; returns the effective config mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    cfg = _merge_defaults(raw)
    missing = [f"{sec}.{key}" for sec, key in _REQUIRED
               if sec not in raw or not isinstance(raw.get(sec), dict) or raw[sec].get(key) is None]
    if missing:
        raise ConfigError(f"missing required keys: {missing}")
    problems = []
    pid = canonical_pipeline(str(cfg["pipeline"]["id"]))
    cfg["pipeline"]["id"] = pid
    if pid not in PIPELINES:
        problems.append(f"pipeline.id: unknown pipeline {pid!r}")
    alpha = cfg["pipeline"]["alpha"]
    if pid == "hybrid":
        if alpha is None:
            problems.append("pipeline.alpha: required for the hybrid pipeline")
        elif not 0.0 <= float(alpha) <= 1.0:
            problems.append(f"pipeline.alpha: {alpha} outside [0, 1]")
        inner = canonical_pipeline(str(cfg["pipeline"]["inner"]))
        cfg["pipeline"]["inner"] = inner
        if inner not in PARTICLE_MODES:
            problems.append(f"pipeline.inner: unknown particle mode {inner!r}")
    lam = cfg["pipeline"]["lambda"]
    needs_lam = "sinkhorn" in pid or (pid == "hybrid" and "sinkhorn" in str(cfg["pipeline"]["inner"]))
    if needs_lam and (lam is None or float(lam) <= 0):
        problems.append("pipeline.lambda: must be positive for sinkhorn pipelines")
    if cfg["rejuvenation"]["beta"] < 0:
        problems.append("rejuvenation.beta: must be nonnegative")
    if cfg["observations"]["r_value"] <= 0:
        problems.append("observations.r_value: must be positive")
    if int(cfg["ensemble"]["size"]) < 2:
        problems.append("ensemble.size: must be at least 2")
    n_cycles = int(cfg["run"]["n_cycles"])
    burn_in = cfg["run"]["burn_in"]
    if burn_in is None:
        burn_in = int(round(0.1 * n_cycles))
        cfg["run"]["burn_in"] = burn_in
    if not 0 <= int(burn_in) < n_cycles:
        problems.append("run.burn_in: must satisfy 0 <= burn_in < n_cycles")
    loc = cfg["localization"]
    if loc is not None:
        if not isinstance(loc, dict) or "radius" not in loc:
            problems.append("localization.radius: required when localization is set")
        elif float(loc["radius"]) <= 0:
            problems.append("localization.radius: must be positive")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    # full model/experiment validation (dt ratio etc.) happens on construction;
    # reflect the resolved model defaults back into the effective config
    exp = build_experiment(cfg)
    cfg["model"]["dt_obs"] = exp.model.dt_obs
    cfg["model"]["params"] = dict(exp.model.params)
    return cfg


def build_experiment(cfg: dict, seed_offset: int = 0) -> ExperimentConfig:
    """Construct the experiment object from a normalized config mapping."""
    model_cfg = cfg["model"]
    try:
        spec = ModelSpec(name=model_cfg["name"], params=dict(model_cfg["params"] or {}),
                         dt_internal=float(model_cfg["dt_internal"]),
                         dt_obs=None if model_cfg["dt_obs"] is None else float(model_cfg["dt_obs"]))
        seeds = SeedSet(**{k: int(v) for k, v in cfg["seeds"].items()}).offset(seed_offset)
        loc = cfg["localization"]
        localization = None if loc is None else LocalizationConfig(
            radius=float(loc["radius"]), taper=loc.get("taper", "gaspari_cohn"))
        pipe = cfg["pipeline"]
        return ExperimentConfig(
            model=spec,
            m=int(cfg["ensemble"]["size"]),
            pipeline=str(pipe["id"]),
            alpha=None if pipe["alpha"] is None else float(pipe["alpha"]),
            inner=None if pipe["id"] != "hybrid" else str(pipe["inner"]),
            lam=None if pipe["lambda"] is None else float(pipe["lambda"]),
            beta=float(cfg["rejuvenation"]["beta"]),
            n_cycles=int(cfg["run"]["n_cycles"]),
            burn_in=int(cfg["run"]["burn_in"]) if cfg["run"]["burn_in"] is not None else None,
            seeds=seeds,
            localization=localization,
            obs_kind=str(cfg["observations"]["kind"]),
            obs_parity=str(cfg["observations"]["parity"]),
            r_value=float(cfg["observations"]["r_value"]),
            hybrid_order=str(pipe["order"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _set_path(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"sweep axis {dotted!r} does not address a config key")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"sweep axis {dotted!r} does not address a config key")
    node[parts[-1]] = value


def expand_sweep(cfg: dict) -> list[dict]:
    """Cartesian product of the sweep axes, lexicographic by axis name.

    Each cell is a full normalized config; repetitions append seed offsets.
    Returns a single cell when no sweep section is present.
    """
    sweep = cfg.get("sweep")
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    if sweep is None:
        cell = json.loads(json.dumps(base))
        cell["_seed_offset"] = 0
        return [cell]
    axes = sweep.get("axes") or {}
    reps = int(sweep.get("repetitions", 1))
    cap = int(sweep.get("cap", 10_000))
    names = sorted(axes)
    value_lists = [axes[name] for name in names]
    total = reps
    for values in value_lists:
        total *= max(len(values), 1)
    if total > cap:
        raise ConfigError(f"sweep size {total} exceeds cap {cap}")
    cells = []
    for combo in itertools.product(*value_lists):
        for rep in range(reps):
            cell = json.loads(json.dumps(base))
            for name, value in zip(names, combo):
                _set_path(cell, name, value)
            cell["_seed_offset"] = rep
            cells.append(cell)
    return cells


def _run_cell(cell: dict) -> dict:
    offset = cell.pop("_seed_offset", 0)
    row = dict.fromkeys(CSV_COLUMNS, "")
    try:
        normalized = normalize_config(cell)
        exp = build_experiment(normalized, seed_offset=offset)
        hashed = json.loads(json.dumps(normalized))
        hashed["seeds"] = {"truth": exp.seeds.truth, "obs_noise": exp.seeds.obs_noise,
                           "init_ensemble": exp.seeds.init_ensemble,
                           "rejuvenation": exp.seeds.rejuvenation,
                           "random_rotations": exp.seeds.random_rotations}
        row.update({
            "config_hash": config_hash(hashed),
            "model": exp.model.name,
            "pipeline": exp.pipeline if exp.pipeline != "hybrid" else f"hybrid:{exp.inner}",
            "M": exp.m,
            "alpha": "" if exp.alpha is None else exp.alpha,
            "lambda": "" if exp.lam is None else exp.lam,
            "beta": exp.beta,
            "K": exp.n_cycles,
            "burn_in": exp.burn_in,
            "seed_truth": exp.seeds.truth,
            "seed_obs": exp.seeds.obs_noise,
            "seed_init": exp.seeds.init_ensemble,
            "seed_rejuv": exp.seeds.rejuvenation,
            "seed_rot": exp.seeds.random_rotations,
        })
        report = run_experiment(exp)
        row.update({"rmse": repr(report.rmse_time_avg),
                    "crps": repr(report.crps_time_avg),
                    "wall_time_s": f"{report.wall_time:.3f}"})
    except Exception as exc:  # recorded per cell; the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _stream_rows(out_path: Path, row_iter) -> list[dict]:
    """Append rows as they complete so partial results survive a crash."""
    exists = out_path.exists() and out_path.stat().st_size > 0
    rows = []
    with out_path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if not exists:
            writer.writeheader()
            fh.flush()
        for row in row_iter:
            writer.writerow(row)
            fh.flush()
            rows.append(row)
    return rows


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    with p.open() as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError("config file is empty")
    return raw


def cmd_validate(args) -> int:
    try:
        raw = _load_config(args.config)
        normalized = normalize_config(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(yaml.safe_dump(normalized, sort_keys=True), end="")
    return 0


def cmd_run(args) -> int:
    try:
        raw = _load_config(args.config)
        base = _merge_defaults(raw)
        cells = expand_sweep(base)
        # validate every cell up front so schema errors exit before any run
        for cell in cells:
            normalize_config({k: v for k, v in cell.items() if k != "_seed_offset"})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed_offset:
        for cell in cells:
            cell["_seed_offset"] += args.seed_offset
    out_path = Path(args.out)
    if args.workers > 1 and len(cells) > 1:
        # executor.map yields in submission order, so row order stays
        # deterministic regardless of completion order
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = _stream_rows(out_path, pool.map(_run_cell, cells))
    else:
        rows = _stream_rows(out_path, map(_run_cell, cells))
    failures = [row for row in rows if row["error"]]
    if failures:
        print(json.dumps({"failed_cells": [
            {"config_hash": row["config_hash"], "error": row["error"]}
            for row in failures]}), file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="letf", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment or sweep in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="results.csv", help="CSV output path (appended)")
    p_run.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    p_run.add_argument("--seed-offset", type=int, default=0,
                       help="offset added to every seed (for extra repetitions)")
    p_run.set_defaults(func=cmd_run)
    p_val = sub.add_parser("validate", help="check a config and print the effective values")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
