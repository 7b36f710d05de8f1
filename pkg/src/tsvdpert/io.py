"""Matrix CSV files and JSON reports."""

import csv
import json
import sys

import numpy as np

from ._validation import check_matrix


def read_matrix(path):
    """Read a headerless comma-separated matrix."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        return check_matrix(np.empty((0, 0)), str(path))
    try:
        data = [[float(c) for c in row] for row in rows]
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if len({len(r) for r in data}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    return check_matrix(data, str(path))


def format_matrix(A):
    # 17 significant digits round-trips every double
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return "".join(",".join(f"{x:.17g}" for x in row) + "\n" for row in A)


def write_matrix(path, A):
    text = format_matrix(A)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def to_jsonable(obj):
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x) or np.isinf(x):
            return None
        return x
    return obj


def dumps_report(report):
    return json.dumps(to_jsonable(report), indent=2, sort_keys=False) + "\n"
