"""Deterministic report files: CSV with fixed float formatting and JSON.

Floats are always written with 17 significant digits, enough to round-trip
an IEEE double, so rerunning an identical configuration reproduces the
output byte for byte.
"""

from __future__ import annotations

import json
import numbers
import os

__all__ = [
    "SWEEP_COLUMNS",
    "format_value",
    "write_csv",
    "write_json",
    "sweep_rows",
]

# fixed external schema of the sweep tables; order matters
SWEEP_COLUMNS = (
    "epsilon",
    "m_E",
    "K0",
    "norm_u",
    "norm_u_sq",
    "residual",
    "sup_dev_sq",
    "dissipation_dev",
    "ratio_17",
    "ratio_18",
    "cond_Jstar",
    "sigma_min_Jstar",
)


def format_value(value):
    """One CSV cell: integers verbatim, floats at 17 significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return "%.17g" % float(value)
    return str(value)


def _prepare(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(path, header, rows):
    """Write rows of cells under a header line; returns the path."""
    _prepare(path)
    lines = [",".join(header)]
    lines.extend(",".join(format_value(cell) for cell in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_json(path, payload):
    """Write a JSON document with sorted keys; returns the path."""
    _prepare(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sweep_rows(rows):
    """Map sweep result rows onto the fixed SWEEP_COLUMNS order."""
    out = []
    for r in rows:
        out.append(
            (
                r.epsilon,
                r.m_E,
                int(r.head_size),
                r.norm_u,
                r.norm_u_sq,
                r.residual,
                r.sup_dev_sq,
                r.dissipation_dev,
                r.deviation_ratio,
                r.control_ratio,
                r.condition_number,
                r.sigma_min,
            )
        )
    return out
