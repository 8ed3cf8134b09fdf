"""File formats: field/matrix/trajectory CSV, JSON results, staged output dirs."""
from __future__ import annotations

import contextlib
import csv
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .field import Field, Grid1D

SCHEMA_VERSION = 1


def fmt(v: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(v), ".17g")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def write_json(path, obj: dict) -> None:
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    Path(path).write_text(dumps(obj))


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_field_csv(path, field: Field) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "value"])
        for q, v in zip(field.grid.nodes, field.values):
            w.writerow([fmt(q), fmt(v)])


def read_field_csv(path, grid: Grid1D | None = None) -> Field:
    """Load a ``q,value`` CSV.  Without ``grid`` the grid is inferred from q."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["q", "value"]:
        raise ValueError(f"{path}: expected header 'q,value'")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: malformed field rows")
    if grid is None:
        q = data[:, 0]
        if q.size < 2:
            raise ValueError(f"{path}: a field needs at least 2 rows")
        delta = (q[-1] - q[0]) / (q.size - 1)
        grid = Grid1D(q.size, delta, q[0])
    elif data.shape[0] != grid.n:
        raise ValueError(f"{path}: {data.shape[0]} rows for a grid of {grid.n} nodes")
    return Field(grid, data[:, 1])


def field_to_json(field: Field) -> dict:
    return {"grid": field.grid.to_dict(), "values": field.values.tolist()}


def read_field_json(path, grid: Grid1D | None = None) -> Field:
    """Accepts a bare JSON array (needs ``grid``) or an object with ``values``."""
    obj = read_json(path)
    if isinstance(obj, list):
        values = obj
    else:
        values = obj["values"]
        if grid is None and "grid" in obj:
            grid = Grid1D.from_dict(obj["grid"])
    if grid is None:
        raise ValueError(f"{path}: bare JSON array needs an explicit grid")
    return Field(grid, values)


def read_field(path, grid: Grid1D | None = None) -> Field:
    if str(path).endswith(".json"):
        return read_field_json(path, grid)
    return read_field_csv(path, grid)


def write_matrix_csv(path, matrix) -> None:
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    """Row-major square matrix, no header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        m = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{path}: matrix must be square, got rows of lengths {sorted({len(r) for r in rows})}")
    return m


def write_trajectory_csv(path, traj) -> None:
    q = traj.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "node", "q", "value"])
        for t, row in enumerate(traj.values):
            for i, v in enumerate(row):
                w.writerow([t, i, fmt(q[i]), fmt(v)])


def write_series_csv(path, header, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, v in enumerate(values):
            w.writerow([i, fmt(v)])


def read_clusters_csv(path):
    """``cluster_id,x1,...,xd`` -> (points (N, d), ids (N,))."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "cluster_id" or len(header) < 2:
        raise ValueError(f"{path}: expected header 'cluster_id,x1,...,xd'")
    d = len(header) - 1
    ids, pts = [], []
    for r in rows[1:]:
        if len(r) != d + 1:
            raise ValueError(f"{path}: row {r} does not have {d} coordinates")
        ids.append(r[0].strip())
        pts.append([float(c) for c in r[1:]])
    return np.array(pts, dtype=float).reshape(-1, d), np.array(ids)


def write_quadrature_json(path, W_samples, b_samples, offsets=None, weights=None) -> None:
    W = np.asarray(W_samples, dtype=float)
    b = np.asarray(b_samples, dtype=float)
    obj = {"W": {"shape": list(W.shape), "data": W.ravel().tolist()}, "b": {"shape": list(b.shape), "data": b.ravel().tolist()}}
    if offsets is not None:
        obj["rule"] = {"offsets": list(map(float, offsets)), "weights": list(map(float, weights))}
    write_json(path, obj)


def read_quadrature_json(path):
    """Returns (W_samples, b_samples, rule_dict_or_None)."""
    obj = read_json(path)
    out = []
    for key in ("W", "b"):
        block = obj[key]
        shape = tuple(int(s) for s in block["shape"])
        data = np.asarray(block["data"], dtype=float)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"{path}: {key} has {data.size} values for shape {shape}")
        out.append(data.reshape(shape))
    return out[0], out[1], obj.get("rule")


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a scratch directory whose files land in ``out_dir`` only on success."""
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if not out.exists():
        os.rename(tmp, out)
        return
    for src in sorted(tmp.rglob("*")):
        dst = out / src.relative_to(tmp)
        if src.is_dir():
            dst.mkdir(exist_ok=True)
        else:
            os.replace(src, dst)
    shutil.rmtree(tmp, ignore_errors=True)
