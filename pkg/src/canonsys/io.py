"""CSV and JSON output with stable, byte-reproducible formatting.

Complex columns are split into ``<name>_re`` and ``<name>_im``.  Floats are
written with ``repr`` so a round trip is exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping

import numpy as np

SCHEMA_VERSION = "1.0"


def _expand(columns: Mapping[str, np.ndarray]):
    names, cols = [], []
    for name, col in columns.items():
        col = np.asarray(col)
        if np.iscomplexobj(col):
            names += [f"{name}_re", f"{name}_im"]
            cols += [col.real, col.imag]
        else:
            names.append(name)
            cols.append(col)
    n = {c.shape[0] for c in cols}
    if len(n) != 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    return names, cols


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    names, cols = _expand(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns as float arrays; ``x_re``/``x_im`` pairs are merged back into complex ``x``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names, data = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    out: dict[str, np.ndarray] = {}
    for k, name in enumerate(names):
        if name.endswith("_im") and name[:-3] + "_re" in out:
            base = name[:-3]
            out[base] = out.pop(base + "_re") + 1j * data[:, k]
        else:
            out[name] = data[:, k]
    return out


def to_jsonable(obj):
    """numpy-aware conversion; complex numbers and arrays become {"re": ..., "im": ...}."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: Mapping) -> Path:
    path = Path(path)
    body = to_jsonable(payload)
    path.write_text(json.dumps(body, sort_keys=True, indent=2, allow_nan=True) + "\n")
    return path


def evolution_metadata(result) -> dict:
    """Header describing an EvolutionResult: scheme, grids and solver metadata."""
    meta = {k: v for k, v in result.meta.items() if np.ndim(v) == 0}
    head = dict(meta, t_max=result.time.t_max, n_steps=result.time.n_steps, dt=result.time.dt)
    if result.space is not None:
        head.update(x_max=result.space.x_max, n_x=result.space.n_points, h=result.space.h)
    return head


def write_field_csv(path, result) -> Path:
    """Space-time field in t-major order: columns t, x (or site), then components."""
    F = result.field
    if F is None:
        raise ValueError("result carries no stored field")
    nt, nx = F.shape[:2]
    t = np.repeat(result.time.t, nx)
    x = np.tile(result.space.x if result.space is not None else np.arange(1, nx + 1), nt)
    cols = {"t": t, "x": x}
    if F.ndim == 2:
        cols["u"] = F.reshape(-1).astype(complex)
    else:
        cols["v1"] = F[..., 0].reshape(-1)
        cols["v2"] = F[..., 1].reshape(-1)
    return write_csv(path, cols)
