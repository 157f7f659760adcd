"""Result-table loading and filtering for the plotting scripts.

The scripts are pure readers of the batch runner's CSV output; the column
set below is the contract and is checked verbatim.  Rows whose ``error``
column is nonempty are excluded from plots and surfaced in a caption note.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = ["config_hash", "model", "pipeline", "M", "alpha", "lambda", "beta",
               "K", "burn_in", "seed_truth", "seed_obs", "seed_init", "seed_rejuv",
               "seed_rot", "rmse", "crps", "wall_time_s", "error"]

_NUMERIC = {"M": int, "alpha": float, "lambda": float, "beta": float, "K": int,
            "burn_in": int, "rmse": float, "crps": float, "wall_time_s": float}


@dataclass
class ResultTable:
    rows: list[dict] = field(default_factory=list)
    n_errors: int = 0

    @classmethod
    def load(cls, path: str | Path) -> "ResultTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_COLUMNS:
                raise ValueError(
                    f"unexpected CSV columns {reader.fieldnames}; "
                    f"expected {CSV_COLUMNS}")
            good, bad = [], 0
            for raw in reader:
                if raw["error"]:
                    bad += 1
                    continue
                row = dict(raw)
                for key, cast in _NUMERIC.items():
                    row[key] = cast(raw[key]) if raw[key] != "" else None
                good.append(row)
        return cls(rows=good, n_errors=bad)

    def filter(self, expr: str | None) -> "ResultTable":
        """Restrict rows by 'key=value1|value2;key2=value' expressions.

        Values are compared as strings against the raw cell content, so
        ``pipeline=esrf|etpf_exact;M=20`` works as expected.
        """
        if not expr:
            return self
        clauses = []
        for part in expr.split(";"):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"bad filter clause {part!r}; expected key=value")
            key, values = part.split("=", 1)
            key = key.strip()
            if key not in CSV_COLUMNS:
                raise ValueError(f"unknown filter column {key!r}")
            clauses.append((key, {v.strip() for v in values.split("|")}))
        rows = [row for row in self.rows
                if all(str(row[key]) in vals or _num_match(row[key], vals)
                       for key, vals in clauses)]
        return ResultTable(rows=rows, n_errors=self.n_errors)


def _num_match(cell, vals) -> bool:
    try:
        x = float(cell)
    except (TypeError, ValueError):
        return False
    for v in vals:
        try:
            if float(v) == x:
                return True
        except ValueError:
            continue
    return False
