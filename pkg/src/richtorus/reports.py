"""Bit-stable CSV and JSON emitters.

Floats are written with 17 significant digits in a fixed field order, so the
same results always produce the same bytes and re-parsing loses nothing.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import write_grids_csv
from .spectral import spectrum


def fmt(value):
    """Canonical text of a scalar cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def csv_text(header, rows):
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_value(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        text = f"{v:.17g}"
        # keep floats recognisable as floats after re-parse
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _json_value(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def json_text(obj, indent=2):
    return _json_value(obj, indent, 0) + "\n"


def emit_report(results, fmt_name, path, header=None):
    """Write ``results`` as csv (rows + header) or json; returns the path."""
    path = Path(path)
    if fmt_name == "csv":
        if header is None:
            raise ValueError("csv output needs a header")
        text = csv_text(header, results)
    elif fmt_name == "json":
        text = json_text(results)
    else:
        raise ValueError(f"unknown format {fmt_name!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))
    return path


# Schemas ---------------------------------------------------------------------

def spectrum_header(n):
    return ["x"] + [f"lambda{i + 1}" for i in range(n)] + [f"phi{i + 1}" for i in range(n)] + ["class"]


def spectrum_rows(values, x):
    """One row per cell.  Complex eigenvalues are written by their real part."""
    rows = []
    for xj, u in zip(x, np.atleast_2d(values)):
        s = spectrum(u)
        rows.append([xj, *np.real(s.eigenvalues), *s.angles, s.classification])
    return rows


CLAW_HEADER = ["t", "x", "i", "c_i", "f_i", "flux_i", "residual_i"]


def claw_rows(t, x, graphs, residual):
    rows = []
    for j, xj in enumerate(x):
        for i, c in enumerate(graphs.c):
            rows.append([t, xj, i + 1, c, graphs.f[j, i], graphs.flux[j, i], residual[j, i]])
    return rows


def series_record(point, claws):
    return {
        "n": int(np.size(point)),
        "point": [float(v) for v in point],
        "K": claws.K,
        "G": [float(v) for v in claws.G],
        "flux": [float(v) for v in claws.flux],
    }


DIAGNOSTICS_HEADER = ["step", "t", "dt", "max_lambda", "min_gap", "max_grad", "class_counts"]


def diagnostics_rows(diagnostics):
    rows = []
    for d in diagnostics:
        census = ";".join(f"{k}={v}" for k, v in d["class_counts"].items())
        rows.append([d["step"], d["t"], d["dt"], d["max_lambda"], d["min_gap"], d["max_grad"], census])
    return rows


TRAJECTORY_HEADER = ["tau", "t", "x", "p1", "p2", "H", "F"]


def trajectory_rows(traj):
    return [list(r) for r in zip(traj.tau, traj.t, traj.x, traj.p1, traj.p2, traj.H, traj.F)]


TRACE_HEADER = ["t", "x", "r"]


def snapshots_text(history):
    return write_grids_csv(history.snapshots)
