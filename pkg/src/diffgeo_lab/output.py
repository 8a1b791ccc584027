"""Deterministic CSV/JSON artifact writers.

Floats are printed with 17 significant digits and LF line endings so that
identical analyses produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np


def fmt(x) -> str:
    """17-significant-digit float formatting; -0.0 normalized."""
    x = float(x)
    if x == 0.0:
        x = 0.0
    return f"{x:.17g}"


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for c in row:
            if c is None:
                cells.append("")
            elif isinstance(c, str):
                cells.append(c)
            elif isinstance(c, (int, np.integer)):
                cells.append(str(int(c)))
            else:
                cells.append(fmt(c))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def trajectory_rows(traj):
    """Rows for the trajectory CSV schema: t, theta, v, winding[, dtheta, dv]
    [, phi11, phi12, phi21, phi22]."""
    header = ["t", "theta", "v", "winding"]
    has_tangent = traj.dtheta is not None
    has_fund = traj.fundamental is not None
    if has_tangent:
        header += ["dtheta", "dv"]
    if has_fund:
        header += ["phi11", "phi12", "phi21", "phi22"]
    rows = []
    for i in range(len(traj.times)):
        row = [traj.times[i], traj.theta[i], traj.v[i], int(traj.winding[i])]
        if has_tangent:
            row += [traj.dtheta[i], traj.dv[i]]
        if has_fund:
            F = traj.fundamental[i]
            row += [F[0, 0], F[0, 1], F[1, 0], F[1, 1]]
        rows.append(row)
    return header, rows


def write_trajectory(path: str, traj) -> None:
    header, rows = trajectory_rows(traj)
    write_csv(path, header, rows)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
