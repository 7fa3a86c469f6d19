"""Characteristics-aligned solver for 2x2 first-order hyperbolic systems.

Solves, with zero initial data,

    i K(x) W_t + sigma (J W_x + P(x) W) = 0,    ell . W(0, t) = f(t),

for a symmetric positive K and real symmetric P; sigma = +1 is the forward
form, sigma = -1 the auxiliary one.  Both characteristic speeds equal
1/sqrt(det K), so in the travel-time coordinate s = tau(x) the system has
unit speeds.  The s-grid uses ds = dt: Riemann invariants are shifted by one
node per step and the coupling is integrated with the trapezoid rule along
each characteristic (second order, unconditionally stable, and exactly zero
ahead of the front).  The far end is kept inert by finite speed.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import J, CFLError, GridError, SpaceGrid, TimeGrid, BoundaryControl, cumulative_integral, lagrange_resample
from scipy import interpolate


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


class CharacteristicSolution:
    __slots__ = ("s_step", "x_nodes", "tau", "boundary", "final_nodes", "final", "field")


def solve_characteristic(K_at: Callable, P_at: Callable, sigma: int, ell, control: BoundaryControl,
                         space: SpaceGrid, time: TimeGrid, store_field: bool = True,
                         rule: str = "trapezoid", check_cfl: bool = True):
    """Run the scheme; returns a CharacteristicSolution with fields on ``space``.

    ``field`` has shape (n_t+1, n_x, 2) when ``store_field``; ``boundary``
    holds W(0, t) for every time level.
    """
    if control.grid != time:
        raise GridError("control and solver time grids differ")
    dt = time.dt
    Kx = np.asarray(K_at(space.x), dtype=float)
    detK = Kx[:, 0, 0] * Kx[:, 1, 1] - Kx[:, 0, 1] * Kx[:, 1, 0]
    if detK.min() <= 0:
        raise GridError("K must be positive definite on the grid")
    speed = 1.0 / np.sqrt(detK)
    if check_cfl and dt * speed.max() > space.h * (1 + 1e-9):
        raise CFLError(f"dt={dt:.4g} exceeds h/c_max={space.h / speed.max():.4g}")
    tau = cumulative_integral(np.sqrt(detK), space.h, rule)
    ks = int(np.floor(tau[-1] / dt + 1e-9))
    if ks < 3:
        raise GridError("spatial extent too short for the time step")
    s = dt * np.arange(ks + 1)
    x_of_s = interpolate.PchipInterpolator(tau, space.x)(s)
    x_of_s[0] = 0.0

    K = np.asarray(K_at(x_of_s), dtype=float)
    P = np.asarray(P_at(x_of_s), dtype=float)
    Kinv = _inv2(K)
    c = 1.0 / np.sqrt(K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] ** 2)
    M = sigma * 1j * (Kinv @ J) / c[:, None, None]
    N = sigma * 1j * (Kinv @ P)
    I2 = np.eye(2)
    rp = (I2 - M)[:, :, 0]
    rm = (I2 + M)[:, :, 0]
    rp = rp / rp[:, :1]
    rm = rm / rm[:, :1]
    R = np.stack([rp, rm], axis=-1)
    Rs = np.gradient(R, dt, axis=0, edge_order=2)
    Rinv = _inv2(R)
    G = Rinv @ (M @ Rs + N @ R)

    half = 0.5 * dt
    A = I2 - half * G  # implicit part at the new node
    Ainv = _inv2(A)
    ell = np.asarray(ell, dtype=complex)
    # boundary node: row of the incoming-from-interior invariant, plus ell.R0 w = f
    B0 = np.array([ell @ R[0], A[0, 1]])
    B0inv = np.linalg.inv(B0)

    nt = time.n_points
    w = np.zeros((ks + 1, 2), dtype=complex)
    boundary = np.zeros((nt, 2), dtype=complex)
    field = np.zeros((nt, space.n_points, 2), dtype=complex) if store_field else None
    fvals = control.values

    for n in range(1, nt):
        Gw = np.einsum("kij,kj->ki", G, w)
        rhs = np.zeros_like(w)
        rhs[1:, 0] = w[:-1, 0] + half * Gw[:-1, 0]
        rhs[:-1, 1] = w[1:, 1] + half * Gw[1:, 1]
        new = np.einsum("kij,kj->ki", Ainv, rhs)
        new[0] = B0inv @ np.array([fvals[n], rhs[0, 1]])
        # far end: no incoming wave
        new[-1, 1] = 0.0
        new[-1, 0] = rhs[-1, 0] / A[-1, 0, 0]
        w = new
        Wn = np.einsum("kij,kj->ki", R, w)
        boundary[n] = Wn[0]
        if store_field:
            field[n] = lagrange_resample(dt, Wn, tau)

    out = CharacteristicSolution()
    out.s_step = dt
    out.x_nodes = x_of_s
    out.tau = tau
    out.boundary = boundary
    out.final_nodes = np.einsum("kij,kj->ki", R, w)
    out.field = field
    out.final = lagrange_resample(dt, out.final_nodes, tau)
    return out
