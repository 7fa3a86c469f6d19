"""Paired runs: an original dynamical system against its canonical form.

Each function runs both sides on a grid of step ``h`` up to time ``T`` and
returns a :class:`PairResult` whose ``error`` is the relative L2(0, T)
discrepancy of the two boundary traces after the declared relation.
"""
from __future__ import annotations

import time as _clock
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..builders import build_H_from_density, build_H_from_dirac, build_H_from_potential
from ..core import BoundaryControl, SpaceGrid, TimeGrid, hamiltonian_from_function, sample_function, smooth_pulse
from .solvers import solve_canonical_i, solve_dirac, solve_wave_density, solve_wave_potential
from .transforms import canonical_boundary_trace, canonical_fields_from_wave

CFL = 0.9


@dataclass
class PairResult:
    name: str
    h: float
    dt: float
    t: np.ndarray
    reference: np.ndarray
    candidate: np.ndarray
    error: float
    seconds: float
    meta: dict = field(default_factory=dict)


def relative_l2(a, b, time: TimeGrid) -> float:
    w = time.weights()
    den = np.sqrt(np.sum(w * np.abs(b) ** 2))
    return float(np.sqrt(np.sum(w * np.abs(a - b) ** 2)) / den)


def grids_for(h: float, T: float, speed: float, pad_cells: int = 12):
    """Space grid long enough for the front to stay away from the far end, and dt = CFL h / speed."""
    space = SpaceGrid.from_step(speed * T + pad_cells * h, h)
    time = TimeGrid(T, int(np.ceil(T * speed / (CFL * h) - 1e-9)), CFL)
    return space, time


def default_control(time: TimeGrid) -> BoundaryControl:
    T = time.t_max
    return smooth_pulse(0.3 * T, 0.25 * T, time)


def _resolve_control(control, time):
    if control is None:
        return default_control(time)
    if isinstance(control, BoundaryControl):
        return control
    return BoundaryControl.from_function(control, time)


def wave_potential_pair(q, h: float, T: float, control=None, q_canonical=None) -> PairResult:
    """u_x(0, t) from the wave solver against c2(0, t) recovered from the canonical field.

    ``q_canonical`` (default ``q``) builds the Hamiltonian used for the
    transformation; passing a different potential gives a negative control.
    """
    t0 = _clock.perf_counter()
    space, time = grids_for(h, T, 1.0)
    f = _resolve_control(control, time)
    u = solve_wave_potential(q, f, space, time)
    H = build_H_from_potential(q if q_canonical is None else q_canonical, space)
    C = canonical_fields_from_wave(u, H)
    trace = canonical_boundary_trace(C, H, time.dt)
    return PairResult("wave-potential", space.h, time.dt, time.t, u.response, trace,
                      relative_l2(trace, u.response, time), _clock.perf_counter() - t0)


def wave_density_pair(rho, h: float, T: float, control=None) -> PairResult:
    """rho u_tt = u_xx against i H C_t = J C_x with H = diag(rho, 1).

    With C = (u_t, i u_x) the canonical control is g = f' and its response
    equals i u_x(0, t).
    """
    t0 = _clock.perf_counter()
    rv, _ = sample_function(rho, SpaceGrid.from_step(1.0, h), "density")
    speed = 1.0 / np.sqrt(rv.min())
    space, time = grids_for(h, T, speed)
    rho_vals, _ = sample_function(rho, space, "density")
    speed = 1.0 / np.sqrt(rho_vals.min())
    space, time = grids_for(h, T, speed, pad_cells=16)
    f = _resolve_control(control, time)
    u = solve_wave_density(rho, f, space, time, store_field=False)
    if f.func is not None:
        d = 1e-5
        fp = lambda t: (f.func(t + d) - f.func(t - d)) / (2 * d)  # noqa: E731
        g = BoundaryControl.from_function(fp, time, f.support)
    else:
        g = BoundaryControl(time, np.gradient(f.values, time.dt, edge_order=2), f.support)
    H = build_H_from_density(rho, space)
    Y = solve_canonical_i(H, g, space, time, sign="forward", store_field=False)
    ref = 1j * u.response
    return PairResult("wave-density", space.h, time.dt, time.t, ref, Y.response,
                      relative_l2(Y.response, ref, time), _clock.perf_counter() - t0)


def dirac_pair(p, q, h: float, T: float, control=None, route: str = "diagonal",
               sign: str = "auxiliary") -> PairResult:
    """Dirac response u_2(0, t) against the canonical system with the Gram Hamiltonian.

    Since the fundamental matrix is the identity at x = 0 both traces should
    coincide.  The canonical side that matches is i H C_t + J C_x = 0
    (``sign="auxiliary"`` in solver terms); ``sign="forward"`` is kept to
    show that the other sign does not.
    """
    t0 = _clock.perf_counter()
    space, time = grids_for(h, T, 1.0)
    H = build_H_from_dirac(p, q, space)
    speed = 1.0 / np.sqrt(H.det.min())
    if speed > 1.0 + 1e-12:
        space, time = grids_for(h, T, speed)
        H = build_H_from_dirac(p, q, space)
    f = _resolve_control(control, time)
    u = solve_dirac(p, q, f, space, time, store_field=False)
    Y = solve_canonical_i(H, f, space, time, sign=sign, route=route, store_field=False)
    return PairResult("dirac", space.h, time.dt, time.t, u.response, Y.response,
                      relative_l2(Y.response, u.response, time), _clock.perf_counter() - t0,
                      dict(sign=sign, route=route))


def _max_speed(H_func: Callable, T: float) -> float:
    """Largest 1/sqrt(det H) over the region a signal can reach by time T."""
    speed, reach = 1.0, T
    for _ in range(20):
        Hs = np.asarray(H_func(np.linspace(0.0, reach, 2001)))
        det = Hs[:, 0, 0] * Hs[:, 1, 1] - Hs[:, 0, 1] ** 2
        if det.min() <= 0:
            raise ValueError("Hamiltonian is not strictly positive on the reachable region")
        speed = float(1.0 / np.sqrt(det.min()))
        if speed * T <= reach:
            break
        reach = 1.1 * speed * T
    return speed


def rotation_pair(H_func: Callable, h: float, T: float, control=None, speed: Optional[float] = None) -> PairResult:
    """Canonical system in original variables against its rotated Dirac-type form.

    Both are driven by y1(0, t) = f.  The reference is the direct-route
    response Rf; the candidate is y~2(0, t) from the rotated run, compared
    with sin(phi0) f + cos(phi0) Rf.  ``meta["minus_sine_error"]``
    records the mismatch of the variant with -sin(phi0) f instead.
    """
    t0 = _clock.perf_counter()
    if speed is None:
        speed = _max_speed(H_func, T)
    space, time = grids_for(h, T, speed)
    H = hamiltonian_from_function(H_func, space)
    f = _resolve_control(control, time)
    direct = solve_canonical_i(H, f, space, time, sign="forward", route="direct", store_field=False)
    rot = solve_canonical_i(H, f, space, time, sign="forward", route="diagonal", store_field=False)
    phi0 = rot.meta["phi0"]
    fv = f.values
    derived = np.sin(phi0) * fv + np.cos(phi0) * direct.response
    minus_sine = -np.sin(phi0) * fv + np.cos(phi0) * direct.response
    y2 = rot.meta["rotated_response"]
    return PairResult("rotation", space.h, time.dt, time.t, derived, y2,
                      relative_l2(y2, derived, time), _clock.perf_counter() - t0,
                      dict(phi0=phi0, minus_sine_error=relative_l2(y2, minus_sine, time),
                           response_error=relative_l2(rot.response, direct.response, time)))


def convergence(run: Callable[[float], PairResult], steps: Sequence[float]):
    """Results on successive grids and the observed orders log2(e_k / e_{k+1})."""
    results = [run(h) for h in steps]
    errs = np.array([r.error for r in results])
    hs = np.array([r.h for r in results])
    slopes = np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])
    return results, slopes
