"""Residuals of sampled fields against the canonical equations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..core import J, HamiltonianField, SpaceGrid, TimeGrid


@dataclass(frozen=True)
class ResidualReport:
    l2: float
    max: float
    h: float
    dt: float
    n_used: int


def _central_t(C, dt):
    return (C[2:] - C[:-2]) / (2 * dt)


def _second_t(C, dt):
    return (C[2:] - 2 * C[1:-1] + C[:-2]) / dt**2


def canonical_residual(H: HamiltonianField, C: np.ndarray, time: TimeGrid, mode: str = "second-order",
                       sign: str = "forward", front: Optional[Callable] = None, margin: float = 2.0,
                       exclude_x: Optional[np.ndarray] = None) -> ResidualReport:
    """Discrete residual of ``C`` (shape (n_t+1, n_x, 2)) on the interior nodes.

    Modes:
      ``second-order``  H C_tt - J C_x
      ``first-order-i`` i H C_t - J C_x (forward) or i H C_t + J C_x (auxiliary)
      ``discrete``      H (C_t + C_{t-1}) - J C_x at integer time levels
      ``one-velocity``  det H C_tt - C_xx + det H * H^-1 J (H^-1)_x J C_x

    Derivatives are second-order central differences.  ``front`` maps x to
    an arrival time; nodes with |t - front(x)| <= margin * max(h, dt) are
    dropped, as are the columns flagged in ``exclude_x`` (breakpoints of a
    piecewise H, say).
    """
    space: SpaceGrid = H.grid
    h, dt = space.h, time.dt
    C = np.asarray(C)
    if C.shape[:2] != (time.n_points, space.n_points):
        raise ValueError(f"field shape {C.shape[:2]} does not match grids")
    Hv = H.values
    Cx = (C[:, 2:] - C[:, :-2]) / (2 * h)
    inner = (slice(1, -1), slice(1, -1))
    if mode == "second-order":
        R = np.einsum("xij,txj->txi", Hv[1:-1], _second_t(C, dt)[:, 1:-1]) - np.einsum("ij,txj->txi", J, Cx[1:-1])
    elif mode == "first-order-i":
        s = {"forward": 1.0, "auxiliary": -1.0}[sign]
        R = 1j * np.einsum("xij,txj->txi", Hv[1:-1], _central_t(C, dt)[:, 1:-1]) \
            - s * np.einsum("ij,txj->txi", J, Cx[1:-1])
    elif mode == "discrete":
        Ct = C[1:] + C[:-1]
        R = np.einsum("xij,txj->txi", Hv[1:-1], Ct[:, 1:-1]) - np.einsum("ij,txj->txi", J, Cx[1:])
        inner = (slice(1, None), slice(1, -1))
    elif mode == "one-velocity":
        det = H.det
        Hinv = np.linalg.inv(Hv)
        Hinv_x = np.gradient(Hinv, h, axis=0, edge_order=2)
        B = det[:, None, None] * (Hinv @ J @ Hinv_x @ J)
        Cxx = (C[:, 2:] - 2 * C[:, 1:-1] + C[:, :-2]) / h**2
        R = det[None, 1:-1, None] * _second_t(C, dt)[:, 1:-1] - Cxx[1:-1] \
            + np.einsum("xij,txj->txi", B[1:-1], Cx[1:-1])
    else:
        raise ValueError(f"unknown residual mode {mode!r}")

    t = time.t[inner[0]]
    x = space.x[inner[1]]
    mask = np.ones(R.shape[:2], dtype=bool)
    if front is not None:
        arrival = np.asarray(front(x), float)
        mask &= np.abs(t[:, None] - arrival[None, :]) > margin * max(h, dt)
    if exclude_x is not None:
        mask &= ~np.asarray(exclude_x, bool)[inner[1]][None, :]
    mag = np.linalg.norm(R, axis=-1)
    mag = np.where(mask, mag, 0.0)
    return ResidualReport(float(np.sqrt(np.sum(mag**2) * h * dt)), float(mag.max()), h, dt, int(mask.sum()))


def convergence_slopes(reports: Sequence[ResidualReport], attr: str = "l2") -> np.ndarray:
    """log2 of successive error ratios (grids assumed to halve each time)."""
    vals = np.array([getattr(r, attr) for r in reports])
    steps = np.array([r.h for r in reports])
    return np.log(vals[:-1] / vals[1:]) / np.log(steps[:-1] / steps[1:])
