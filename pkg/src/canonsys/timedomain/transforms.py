"""Field transformations between the original and the canonical pictures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..builders import JacobiSystem, _perp, build_H_from_potential
from ..core import GridError, HamiltonianField, derivative4
from .solvers import EvolutionResult, jacobi_coefficients


def canonical_fields_from_wave(u: EvolutionResult, H) -> np.ndarray:
    """(c1, c2) with u = c1 y1 + c2 y2 and the gauge c1_x y1 + c2_x y2 = 0.

    ``H`` is either the potential q (anything ``build_H_from_potential``
    accepts) or a Hamiltonian already built from it on the solver's grid.
    Inverting the unit-determinant fundamental matrix gives
    c1 = y2' u - y2 u_x,  c2 = -y1' u + y1 u_x.
    """
    if u.field is None or u.field.ndim != 2:
        raise ValueError("need the stored scalar wave field")
    if not isinstance(H, HamiltonianField):
        H = build_H_from_potential(H, u.space)
    if H.grid != u.space or "y1" not in H.meta:
        raise GridError("H must be the potential Hamiltonian on the solver grid")
    m = H.meta
    ux = derivative4(u.field, u.space.h, axis=1)
    c1 = m["y2p"] * u.field - m["y2"] * ux
    c2 = -m["y1p"] * u.field + m["y1"] * ux
    return np.stack([c1, c2], axis=-1)


def second_time_derivative(F: np.ndarray, dt: float) -> np.ndarray:
    """Second differences along axis 0; four-point one-sided stencils at the ends."""
    out = np.empty_like(F)
    out[1:-1] = (F[2:] - 2 * F[1:-1] + F[:-2]) / dt**2
    out[0] = (2 * F[0] - 5 * F[1] + 4 * F[2] - F[3]) / dt**2
    out[-1] = (2 * F[-1] - 5 * F[-2] + 4 * F[-3] - F[-4]) / dt**2
    return out


def canonical_boundary_trace(C: np.ndarray, H: HamiltonianField, dt: float) -> np.ndarray:
    """c2(0, t) recovered from the canonical equation H C_tt = J C_x.

    Its first row reads c2_x = (H C_tt)_1; integrating from x = 0 to the far
    end, where the field vanishes by finite speed, gives
    c2(0, t) = -int_0^{x_max} (H C_tt)_1 dx.  This uses only the canonical
    field, not the wave solver's boundary derivative.
    """
    Ctt = second_time_derivative(C, dt)
    row = np.einsum("xj,txj->tx", H.values[:, 0, :], Ctt)
    w = H.grid.weights()
    return -row @ w


@dataclass(frozen=True)
class JacobiFields:
    """Piecewise field f = f_j e_j + xi_j(x) e_j^perp on the intervals 1..N-1.

    ``f``, ``g``, ``s`` have shape (n_t, N-1); xi_j(x) = s_j + g_j (b_j - x).
    """

    system: JacobiSystem
    f: np.ndarray
    g: np.ndarray
    s: np.ndarray
    u: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.f.shape[1]

    def xi(self, j: int, x) -> np.ndarray:
        """xi_j at points x of interval j (1-based), shape (n_t, len(x))."""
        b = self.system.breakpoints[j]
        x = np.atleast_1d(np.asarray(x, float))
        return self.s[:, j - 1, None] + self.g[:, j - 1, None] * (b - x)[None, :]

    def evaluate(self, j: int, x) -> np.ndarray:
        """f(x, t) on interval j; shape (n_t, len(x), 2)."""
        e = self.system.vectors[j - 1]
        ep = _perp(e)
        xi = self.xi(j, x)
        return self.f[:, j - 1, None, None] * e + xi[..., None] * ep

    def on_grid(self, x) -> np.ndarray:
        """f(x, t) at arbitrary points inside the first N-1 intervals; shape (n_t, len(x), 2)."""
        x = np.asarray(x, float)
        b = self.system.breakpoints
        idx = np.clip(np.searchsorted(b, x, side="right"), 1, self.n_intervals)
        out = np.zeros((self.f.shape[0], x.size, 2), dtype=complex)
        for j in np.unique(idx):
            m = idx == j
            out[:, m] = self.evaluate(int(j), x[m])
        return out

    def boundary(self) -> np.ndarray:
        """f(0, t)."""
        return self.evaluate(1, [0.0])[:, 0, :]

    def continuity_defect(self) -> float:
        """max |f(b_j^-) - f(b_j^+)| over the interior breakpoints."""
        b = self.system.breakpoints
        worst = 0.0
        for j in range(1, self.n_intervals):
            left = self.evaluate(j, [b[j]])[:, 0]
            right = self.evaluate(j + 1, [b[j]])[:, 0]
            worst = max(worst, float(np.abs(left - right).max()))
        return worst


def jacobi_dynamics_u(J_, v: EvolutionResult, dynamics: str, h_derivative=None) -> np.ndarray:
    """u = i dv/dt (continuous) or u = v_t + v_{t-1} (discrete), for all sites.

    For the continuous dynamics the interior sites use the equation of
    motion i v_t = A v exactly; site 1 needs the control derivative
    (``h_derivative`` samples; otherwise a second-order difference).
    """
    q, rho = jacobi_coefficients(J_)
    V = v.field
    N = V.shape[1]
    meta_kind = v.meta.get("system", "")
    if dynamics == "continuous":
        if meta_kind and meta_kind != "jacobi-continuous":
            raise ValueError("continuous dynamics requested for a discrete solution")
        A = np.diag(q[:N]) + np.diag(rho[:N - 1], 1) + np.diag(rho[:N - 1], -1)
        u = V @ A.T
        hd = np.gradient(V[:, 0], v.time.dt, edge_order=2) if h_derivative is None else h_derivative
        u[:, 0] = 1j * np.asarray(hd)
        return u
    if dynamics == "discrete":
        if meta_kind and meta_kind != "jacobi-discrete":
            raise ValueError("discrete dynamics requested for a continuous solution")
        sgn = 1.0 if v.meta.get("discrete_dt", "sum") == "sum" else -1.0
        u = np.zeros_like(V)
        u[1:] = V[1:] + sgn * V[:-1]
        return u
    raise ValueError(f"unknown dynamics {dynamics!r}")


def jacobi_fields_from_v(J_: JacobiSystem, v: EvolutionResult, dynamics: str,
                         h_derivative=None) -> JacobiFields:
    """Assemble the canonical field from a Jacobi trajectory.

    f_j = v_j / sqrt(l_j), g_j = u_j / sqrt(l_j).  s_j = xi_j(b_j) follows
    from the e_{j+1}-component of continuity at b_j:
        s_j = (f_{j+1} - f_j (e_j, e_{j+1})) / (e_{j+1}, e_j^perp).
    """
    sys = J_
    V = v.field
    N = V.shape[1]
    if sys.n < N:
        raise ValueError("Jacobi system shorter than the solution")
    l = sys.lengths[:N]
    e = sys.vectors[:N]
    u = jacobi_dynamics_u(sys, v, dynamics, h_derivative)
    f = V / np.sqrt(l)
    g = u / np.sqrt(l)
    dot = np.einsum("ij,ij->i", e[:-1], e[1:])
    cross = np.einsum("ij,ij->i", e[1:], _perp(e[:-1]))
    s = (f[:, 1:] - f[:, :-1] * dot) / cross
    return JacobiFields(sys, f[:, :-1], g[:, :-1], s, u)


def jacobi_response_stated(J_: JacobiSystem, v2, h) -> np.ndarray:
    """The displayed relation  -rho_1 v_2 sqrt(l_1) - h (1/sqrt(l_1) - i sqrt(l_1))."""
    l1 = J_.lengths[0]
    return -J_.rho[0] * np.asarray(v2) * np.sqrt(l1) - np.asarray(h) * (1 / np.sqrt(l1) - 1j * np.sqrt(l1))


def jacobi_response_derived(J_: JacobiSystem, v2, h, u1) -> np.ndarray:
    """xi_1(0, t) = sqrt(l_1) (u_1 - q_1 h - rho_1 v_2), the value implied by the continuity algebra.

    ``u1`` is the dynamics image of the control (i h' or h_t + h_{t-1});
    with e_1 = (1, 0) the second component of f(0, t) is -xi_1(0, t).
    """
    l1 = J_.lengths[0]
    return np.sqrt(l1) * (np.asarray(u1) - J_.q[0] * np.asarray(h) - J_.rho[0] * np.asarray(v2))
