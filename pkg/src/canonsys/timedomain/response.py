"""Discretized response operators and their comparison."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..core import BoundaryControl, GridError, ResponseMatrix, TimeGrid, smoothed_delta


def bump_centers(time: TimeGrid, width: float, n_basis: Optional[int] = None) -> np.ndarray:
    """Uniform centers keeping every bump strictly inside (0, T); spacing ~ width by default."""
    lo, hi = width + time.dt, time.t_max - width - time.dt
    if hi <= lo:
        raise GridError("time interval too short for the bump width")
    if n_basis is None:
        n_basis = max(1, int(np.floor((hi - lo) / width)) + 1)
    return np.linspace(lo, hi, n_basis)


def response_matrix(respond: Callable[[BoundaryControl], np.ndarray], time: TimeGrid,
                    width: Optional[float] = None, n_basis: Optional[int] = None,
                    centers=None, jobs: int = 1, causality_tol: float = 1e-8) -> ResponseMatrix:
    """Columns are ``respond(smoothed_delta(c_j, width))`` for uniform centers c_j.

    ``respond`` runs a forward solver and returns the observed trace on
    ``time``.  The default width is 6 dt.  A column that is nonzero before
    its bump starts means the solver broke causality; that raises.
    """
    width = 6 * time.dt if width is None else float(width)
    centers = bump_centers(time, width, n_basis) if centers is None else np.asarray(centers, float)
    controls = [smoothed_delta(c, width, time) for c in centers]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            cols = list(pool.map(respond, controls))
    else:
        cols = [respond(c) for c in controls]
    mat = np.column_stack([np.asarray(c, dtype=complex) for c in cols])
    if mat.shape[0] != time.n_points:
        raise GridError("response trace does not live on the control grid")
    basis = np.column_stack([c.values for c in controls])
    out = ResponseMatrix(time, mat, basis, centers, width, time.weights())
    viol = out.causality_violation()
    if viol > causality_tol:
        raise ArithmeticError(f"causality violated: |R| = {viol:.3e} before the control acts")
    return out


@dataclass(frozen=True)
class ResponseDiscrepancy:
    operator: float
    trace_l2: float
    trace_max: float


def _l2(v, w):
    return np.sqrt(np.sum(w[:, None] * np.abs(v) ** 2, axis=0))


def compare_responses(R1: Union[ResponseMatrix, np.ndarray], R2: Union[ResponseMatrix, np.ndarray],
                      relation="identity", control: Optional[np.ndarray] = None,
                      time: Optional[TimeGrid] = None) -> ResponseDiscrepancy:
    """Discrepancy of R2 against a R1 + b (identity), after the declared relation.

    ``relation`` is ``"identity"`` or ``("affine", a, b)``.  Works on two
    ResponseMatrix objects (the identity part is the basis) or on two
    single traces, in which case ``control`` supplies the samples the b-term
    acts on.  ``operator`` is the relative spectral-norm error, ``trace_l2``
    the worst relative column error in L2(0, T).
    """
    if relation == "identity":
        a, b = 1.0, 0.0
    else:
        kind, a, b = relation
        if kind != "affine":
            raise ValueError(f"unknown relation {relation!r}")
    if isinstance(R1, ResponseMatrix):
        if not isinstance(R2, ResponseMatrix) or R1.grid != R2.grid or R1.matrix.shape != R2.matrix.shape:
            raise GridError("response matrices live on different grids")
        M1, M2, ident, w = R1.matrix, R2.matrix, R1.basis, R1.grid.weights()
    else:
        M1 = np.asarray(R1, dtype=complex)[:, None]
        M2 = np.asarray(R2, dtype=complex)[:, None]
        if M1.shape != M2.shape:
            raise GridError("traces have different lengths")
        ident = np.zeros_like(M1) if control is None else np.asarray(control, dtype=complex)[:, None]
        if b != 0 and control is None:
            raise ValueError("affine relation on traces needs the control samples")
        w = time.weights() if time is not None else np.ones(M1.shape[0])
    D = M2 - (a * M1 + b * ident)
    ref = np.linalg.norm(M2, 2)
    op = float(np.linalg.norm(D, 2) / ref) if ref > 0 else float(np.linalg.norm(D, 2))
    num, den = _l2(D, w), _l2(M2, w)
    rel = np.where(den > 0, num / np.where(den > 0, den, 1), num)
    scale = np.abs(M2).max()
    return ResponseDiscrepancy(op, float(rel.max()), float(np.abs(D).max() / scale if scale > 0 else np.abs(D).max()))
