"""Forward solvers for the wave, Dirac, Dirac-type, canonical and Jacobi systems."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..builders import DiracReduction, JacobiSystem, diagonalize_H, dirac_potential, rotation
from ..core import (
    BoundaryControl,
    CFLError,
    GridError,
    HamiltonianError,
    HamiltonianField,
    SpaceGrid,
    TimeGrid,
    sample_function,
)
from .characteristic import solve_characteristic


@dataclass(frozen=True)
class EvolutionResult:
    """Space-time solution of one IBVP.

    ``field`` is ``(n_t+1, n_x)`` for scalar systems and ``(n_t+1, n_x, 2)``
    for vector ones (``None`` if not stored).  ``boundary`` is the state at
    x = 0 for every time level, ``response`` the observed trace.  For the
    Jacobi solvers the "space" index is the site n = 1..N.
    """

    space: Optional[SpaceGrid]
    time: TimeGrid
    field: Optional[np.ndarray]
    boundary: np.ndarray
    response: np.ndarray
    final: np.ndarray
    meta: dict = field(default_factory=dict)


def _require_finite_speed(space: SpaceGrid, time: TimeGrid, max_speed: float, what: str):
    if space.x_max < max_speed * time.t_max + 10 * space.h - 1e-12:
        raise GridError(f"{what}: x_max={space.x_max:.4g} too short for T={time.t_max:.4g} "
                        f"(needs >= {max_speed * time.t_max + 10 * space.h:.4g})")


# --------------------------------------------------------------------------
# scalar wave equations (leapfrog)


def _leapfrog(coef_lap, coef_q, f: BoundaryControl, space: SpaceGrid, time: TimeGrid, store_field: bool):
    n, nt = space.n_points, time.n_points
    dtype = complex if np.iscomplexobj(f.values) and np.abs(f.values.imag).max() > 0 else float
    fv = f.values if dtype is complex else f.values.real
    prev = np.zeros(n, dtype=dtype)
    cur = np.zeros(n, dtype=dtype)
    cur[0] = fv[1]
    field = np.zeros((nt, n), dtype=dtype) if store_field else None
    if store_field:
        field[1] = cur
    resp = np.zeros(nt, dtype=dtype)
    h = space.h

    def dx0(u):
        return (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)

    resp[1] = dx0(cur)
    for k in range(2, nt):
        nxt = np.empty_like(cur)
        lap = cur[2:] - 2 * cur[1:-1] + cur[:-2]
        nxt[1:-1] = 2 * cur[1:-1] - prev[1:-1] + coef_lap * lap - coef_q * cur[1:-1]
        nxt[0] = fv[k]
        nxt[-1] = 0.0
        prev, cur = cur, nxt
        resp[k] = dx0(cur)
        if store_field:
            field[k] = cur
    return field, resp, cur


def solve_wave_potential(q, f: BoundaryControl, space: SpaceGrid, time: TimeGrid,
                         store_field: bool = True) -> EvolutionResult:
    """Leapfrog for u_tt - u_xx + q u = 0 with u(0, t) = f; response u_x(0, t)."""
    if f.grid != time:
        raise GridError("control and time grid differ")
    if time.dt > space.h * (1 + 1e-12):
        raise CFLError(f"dt={time.dt:.4g} > h={space.h:.4g}")
    _require_finite_speed(space, time, 1.0, "wave equation")
    qv, _ = sample_function(q, space, "potential")
    r2 = (time.dt / space.h) ** 2
    fld, resp, last = _leapfrog(r2, time.dt ** 2 * qv[1:-1], f, space, time, store_field)
    return EvolutionResult(space, time, fld, f.values.copy(), resp, last,
                           dict(scheme="leapfrog", system="wave-potential", cfl=time.dt / space.h))


def solve_wave_density(rho, f: BoundaryControl, space: SpaceGrid, time: TimeGrid,
                       store_field: bool = True) -> EvolutionResult:
    """Leapfrog for rho u_tt = u_xx with u(0, t) = f; response u_x(0, t)."""
    if f.grid != time:
        raise GridError("control and time grid differ")
    rv, _ = sample_function(rho, space, "density")
    if rv.min() <= 0:
        raise HamiltonianError("density must be positive")
    if time.dt > space.h * np.sqrt(rv.min()) * (1 + 1e-12):
        raise CFLError(f"dt={time.dt:.4g} > h*sqrt(min rho)={space.h * np.sqrt(rv.min()):.4g}")
    _require_finite_speed(space, time, 1.0 / np.sqrt(rv.min()), "wave equation with density")
    coef = (time.dt / space.h) ** 2 / rv[1:-1]
    fld, resp, last = _leapfrog(coef, 0.0, f, space, time, store_field)
    return EvolutionResult(space, time, fld, f.values.copy(), resp, last,
                           dict(scheme="leapfrog", system="wave-density",
                                cfl=time.dt / (space.h * np.sqrt(rv.min()))))


# --------------------------------------------------------------------------
# first-order systems (characteristics-aligned scheme)


def _wrap(sol, space, time, component, meta) -> EvolutionResult:
    return EvolutionResult(space, time, sol.field, sol.boundary, sol.boundary[:, component].copy(),
                           sol.final, meta)


def _scalar_matrix(ev):
    def at(x):
        v = np.asarray(ev(np.asarray(x, float)))
        out = np.zeros(v.shape + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = v
        return out
    return at


def solve_dirac(p, q, f: BoundaryControl, space: SpaceGrid, time: TimeGrid,
                store_field: bool = True) -> EvolutionResult:
    """i u_t + J u_x + V u = 0, u_1(0, t) = f; response u_2(0, t)."""
    if time.dt > space.h * (1 + 1e-12):
        raise CFLError(f"dt={time.dt:.4g} > h={space.h:.4g}")
    _require_finite_speed(space, time, 1.0, "Dirac system")
    _, V = dirac_potential(p, q, space)
    eye = lambda x: np.broadcast_to(np.eye(2), np.shape(x) + (2, 2))  # noqa: E731
    sol = solve_characteristic(eye, V, +1, [1.0, 0.0], f, space, time, store_field)
    return _wrap(sol, space, time, 1, dict(scheme="characteristic-trapezoid", system="dirac"))


_SIGN = {"forward": +1, "auxiliary": -1}


def solve_dirac_type(red: DiracReduction, f: BoundaryControl, space: SpaceGrid, time: TimeGrid,
                     sign: str = "forward", store_field: bool = True, ell=(1.0, 0.0)) -> EvolutionResult:
    """Forward:  i D V_t + J V_x + psi V = 0;  auxiliary:  i D U_t - J U_x - psi U = 0.

    First component prescribed at x = 0 (or ``ell . V(0, t)`` in general);
    response is the second component at x = 0.
    """
    if space != red.grid:
        raise GridError("reduction and solver space grids differ")
    sigma = _SIGN[sign]
    cmax = 1.0 / np.sqrt((red.d1 * red.d2).min())
    _require_finite_speed(space, time, cmax, "Dirac-type system")
    sp = red._splines

    def D_at(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape + (2, 2))
        out[..., 0, 0], out[..., 1, 1] = sp[0](x), sp[1](x)
        return out

    sol = solve_characteristic(D_at, _scalar_matrix(sp[2]), sigma, ell, f, space, time, store_field)
    return _wrap(sol, space, time, 1, dict(scheme="characteristic-trapezoid", system=f"dirac-type/{sign}",
                                           cfl=time.dt * cmax / space.h))


def solve_canonical_i(H: HamiltonianField, f: BoundaryControl, space: Optional[SpaceGrid] = None,
                      time: Optional[TimeGrid] = None, sign: str = "forward", route: str = "diagonal",
                      store_field: bool = True) -> EvolutionResult:
    """Canonical system with first-order time dynamics and y1(0, t) = f.

    ``sign="forward"``:  i H Y_t - J Y_x = 0;  ``sign="auxiliary"``:
    i H Z_t + J Z_x = 0.  Response is the second component at x = 0.

    ``route="diagonal"`` rotates to the Dirac-type system (H = U D U^T); the
    condition y1(0) = f becomes cos(phi0) y~1 + sin(phi0) y~2 = f, which only
    fixes the incoming characteristic.  The rotated boundary traces are kept
    in ``meta`` (``g`` = y~1(0, t), ``rotated_response`` = y~2(0, t)).
    ``route="direct"`` integrates the system in the original variables and
    serves as an independent check.
    """
    if time is None:
        raise ValueError("time grid required")
    space = H.grid if space is None else space
    if space != H.grid:
        raise GridError("Hamiltonian and solver grids differ")
    if not H.strictly_positive:
        raise HamiltonianError("first-order canonical solver needs a strictly positive H")
    sigma = _SIGN[sign]
    cmax = 1.0 / np.sqrt(H.det.min())
    _require_finite_speed(space, time, cmax, "canonical system")
    meta = dict(scheme="characteristic-trapezoid", system=f"canonical/{sign}", route=route,
                hamiltonian=H.fingerprint(), cfl=time.dt * cmax / space.h)
    if route == "direct":
        zero = lambda x: np.zeros(np.shape(x) + (2, 2))  # noqa: E731
        sol = solve_characteristic(H.at, zero, -sigma, [1.0, 0.0], f, space, time, store_field)
        return _wrap(sol, space, time, 1, meta)
    if route != "diagonal":
        raise ValueError(f"unknown route {route!r}")
    red = diagonalize_H(H)
    phi0 = red.phi[0]
    # canonical forward <-> Dirac-type auxiliary and vice versa
    dt_sign = "auxiliary" if sign == "forward" else "forward"
    res = solve_dirac_type(red, f, space, time, dt_sign, store_field, ell=(np.cos(phi0), np.sin(phi0)))
    U = red.U()
    fld = None if res.field is None else np.einsum("xij,txj->txi", U, res.field)
    bnd = res.boundary @ U[0].T
    final = np.einsum("xij,xj->xi", U, res.final)
    meta.update(phi0=float(phi0), g=res.boundary[:, 0].copy(), rotated_response=res.boundary[:, 1].copy())
    return EvolutionResult(space, time, fld, bnd, bnd[:, 1].copy(), final, meta)


# --------------------------------------------------------------------------
# Jacobi dynamics


def jacobi_coefficients(J_):
    """(q, rho) from a JacobiSystem or a ``(q, rho)`` pair."""
    if isinstance(J_, JacobiSystem):
        return np.asarray(J_.q), np.asarray(J_.rho)
    q, rho = J_
    return np.asarray(q, dtype=float), np.asarray(rho, dtype=float)


def _interior_operator(q, rho, N):
    """Sites 2..N of the truncated matrix (Dirichlet v_{N+1} = 0) and coupling to v_1."""
    if N < 2 or q.size < N or rho.size < N - 1:
        raise ValueError(f"Jacobi data too short for truncation N={N}")
    qi = q[1:N]
    ri = rho[1:N - 1]
    A = np.diag(qi) + np.diag(ri, 1) + np.diag(ri, -1)
    b = np.zeros(N - 1)
    b[0] = rho[0]
    return A, b


def solve_jacobi_continuous(J_, h: BoundaryControl, N: int, substeps: Optional[int] = None,
                            tail_threshold: float = 1e-6) -> EvolutionResult:
    """RK4 for i v_t = A v on sites 2..N with v_1 = h(t), v_{N+1} = 0.

    The integration step is ``dt / substeps``; by default it is chosen so
    that step * ||A|| <= 0.05; steps with step * ||A|| > 0.5 are refused.
    Response is v_2(t); ``meta["tail"]`` holds max |v_N| as a truncation
    diagnostic and a warning is issued when it exceeds ``tail_threshold``.
    """
    q, rho = jacobi_coefficients(J_)
    A, b = _interior_operator(q, rho, N)
    time = h.grid
    norm = np.abs(np.linalg.eigvalsh(A)).max() + abs(b[0])
    if substeps is None:
        substeps = max(1, int(np.ceil(time.dt * norm / 0.05)))
    tau = time.dt / substeps
    if tau * norm > 0.5:
        raise CFLError(f"RK4 step {tau:.3g} too large for ||A||={norm:.3g}")
    L = -1j * A
    c = -1j * b

    def rhs(v, hv):
        return L @ v + c * hv

    nt = time.n_points
    v = np.zeros(N - 1, dtype=complex)
    out = np.zeros((nt, N), dtype=complex)
    out[:, 0] = h.values
    for k in range(nt - 1):
        t0 = time.t[k]
        for m in range(substeps):
            ta = t0 + m * tau
            h0, hm, h1 = h.at(np.array([ta, ta + tau / 2, ta + tau]))
            k1 = rhs(v, h0)
            k2 = rhs(v + 0.5 * tau * k1, hm)
            k3 = rhs(v + 0.5 * tau * k2, hm)
            k4 = rhs(v + tau * k3, h1)
            v = v + (tau / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1, 1:] = v
    tail = float(np.abs(out[:, -1]).max())
    if tail > tail_threshold:
        warnings.warn(f"Jacobi truncation tail |v_N| = {tail:.3e} exceeds {tail_threshold:.1e}", stacklevel=2)
    return EvolutionResult(None, time, out, out[:, 0].copy(), out[:, 1].copy(), out[-1].copy(),
                           dict(scheme="rk4", system="jacobi-continuous", substeps=substeps, tail=tail,
                                q=q[:N].copy(), rho=rho[:N - 1].copy()))


def solve_jacobi_discrete(J_, h, N: int, T: Optional[int] = None, discrete_dt: str = "sum") -> EvolutionResult:
    """Discrete-time Jacobi dynamics with v_{1,t} = h_t.

    ``h`` is indexed by t = 0..T (its first two entries are overridden by
    the zero initial data of the interior; v_{1,t} itself is h_t).  For each
    t >= 2 the interior sites 2..N solve
        v_{n,t} + v_{n,t-1} = (A v_{.,t})_n      (``discrete_dt="sum"``)
        v_{n,t} - v_{n,t-1} = (A v_{.,t})_n      (``discrete_dt="difference"``)
    with v_{N+1,t} = 0.  Response (R h)_t = v_{2,t}.
    """
    q, rho = jacobi_coefficients(J_)
    h = np.asarray(h.values if isinstance(h, BoundaryControl) else h, dtype=complex)
    T = h.size - 1 if T is None else T
    if T < 2 or h.size < T + 1:
        raise ValueError("need T >= 2 and h_t for t = 0..T")
    A, b = _interior_operator(q, rho, N)
    s = {"sum": 1.0, "difference": -1.0}[discrete_dt]
    M = np.eye(N - 1) - A
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError("singular tridiagonal system (I - A) at t=2")
    Minv = np.linalg.inv(M)
    v = np.zeros((T + 1, N), dtype=complex)
    v[:, 0] = h[:T + 1]
    for t in range(2, T + 1):
        v[t, 1:] = Minv @ (b * h[t] - s * v[t - 1, 1:])
    grid = TimeGrid(float(T), T)
    return EvolutionResult(None, grid, v, v[:, 0].copy(), v[:, 1].copy(), v[-1].copy(),
                           dict(scheme="implicit-tridiagonal", system="jacobi-discrete", discrete_dt=discrete_dt,
                                q=q[:N].copy(), rho=rho[:N - 1].copy()))
