"""Percentage cost-increase metrics and the sweep CSV schema."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

from .exceptions import InvalidArgumentError

CSV_HEADER = ("param", "policy", "seed", "avg_cost_rate", "occupancy",
              "pct_vs_optimal", "pct_mf_vs_mb", "stderr")


def _check_measured(value, name):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidArgumentError(f"{name} must be a finite cost > 0, got {value!r}")


def pct_increase_vs_optimal(measured, optimal):
    """``100 (C - C*) / C``: the denominator is the measured cost, not the optimum."""
    _check_measured(measured, "measured cost")
    return 100.0 * (measured - optimal) / measured


def pct_increase_mf_vs_mb(model_free, model_based):
    """``100 (C_mf - C_mb) / C_mb``. Positive values favour the model-based cache."""
    _check_measured(model_based, "model-based cost")
    return 100.0 * (model_free - model_based) / model_based


def pct_increase_mf_vs_optimal(model_free, optimal):
    """``100 (C_mf - C*) / C_mf``, the learner's gap to the optimum, normalised like the first metric."""
    _check_measured(model_free, "model-free cost")
    return 100.0 * (model_free - optimal) / model_free


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    policy: str
    measured: float
    reference: float
    pct_increase: float
    n_runs: int = 1
    stderr: float = 0.0

    @classmethod
    def vs_optimal(cls, label, policy, measured, optimal, n_runs=1, stderr=0.0):
        return cls(label, policy, measured, optimal,
                   pct_increase_vs_optimal(measured, optimal), n_runs, stderr)

    @classmethod
    def mf_vs_mb(cls, label, measured_mf, measured_mb, n_runs=1, stderr=0.0):
        return cls(label, "qlearning", measured_mf, measured_mb,
                   pct_increase_mf_vs_mb(measured_mf, measured_mb), n_runs, stderr)

    def to_dict(self):
        return asdict(self)


def _cell(value):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sort_key(row):
    param = row.get("param")
    try:
        pkey = (0, float(param), "")
    except (TypeError, ValueError):
        pkey = (1, 0.0, str(param))
    seed = row.get("seed")
    skey = (1, 0) if seed in (None, "") else (0, int(seed))
    return pkey, str(row.get("policy", "")), skey


def rows_to_csv(rows):
    """Render rows (dicts keyed by :data:`CSV_HEADER`) sorted by (param, policy, seed)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in sorted(rows, key=_sort_key):
        unknown = set(row) - set(CSV_HEADER)
        if unknown:
            raise InvalidArgumentError(f"unknown CSV columns: {sorted(unknown)}")
        writer.writerow([_cell(row.get(col)) for col in CSV_HEADER])
    return buf.getvalue()


def write_csv(rows, path):
    text = rows_to_csv(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text
