"""Constructors of canonical-system Hamiltonians from the classical systems.

Each source system (wave equation with a potential or a density, Dirac
system, Jacobi partition) yields a HamiltonianField.  Smooth strictly
positive fields can be rotated to Dirac-type form with ``diagonalize_H``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import interpolate

from .core import (
    J,
    GridError,
    HamiltonianError,
    HamiltonianField,
    IntegrationOverflow,
    SpaceGrid,
    cumulative_integral,
    rk4_linear,
    sample_function,
    _frozen,
)


class DegeneratePartitionError(ValueError):
    """Adjacent unit vectors of a Jacobi partition are (nearly) parallel."""


# --------------------------------------------------------------------------
# Hamiltonians of the source systems


def _half_points(grid: SpaceGrid) -> np.ndarray:
    return grid.x[:-1] + 0.5 * grid.h


def build_H_from_potential(q, grid: SpaceGrid) -> HamiltonianField:
    """Rank-one Hamiltonian [[y1^2, y1 y2], [y1 y2, y2^2]] of -y'' + q y = 0.

    ``y1`` and ``y2`` solve the Cauchy problems with (y, y')(0) equal to
    (1, 0) and (0, 1).  They are kept in ``meta`` together with their
    derivatives and the Wronskian ``y1 y2' - y1' y2``, which the wave-to-
    canonical field transformation reuses.
    """
    qv, qf = sample_function(q, grid, "potential")
    qh = qf(_half_points(grid))

    def system(qs):
        a = np.zeros(qs.shape + (2, 2))
        a[..., 0, 1] = 1.0
        a[..., 1, 0] = qs
        return a

    y0 = np.eye(2)  # columns: (y1, y1'), (y2, y2')
    try:
        sol = rk4_linear(system(qv), system(qh), y0, grid.h)
    except IntegrationOverflow as exc:
        raise IntegrationOverflow(exc.x, "potential Cauchy problem overflowed") from None
    y1, y1p = sol[:, 0, 0], sol[:, 1, 0]
    y2, y2p = sol[:, 0, 1], sol[:, 1, 1]
    H = np.empty((grid.n_points, 2, 2))
    H[:, 0, 0] = y1 * y1
    H[:, 0, 1] = H[:, 1, 0] = y1 * y2
    H[:, 1, 1] = y2 * y2
    meta = dict(source="potential", y1=_frozen(y1), y1p=_frozen(y1p), y2=_frozen(y2),
                y2p=_frozen(y2p), wronskian=_frozen(y1 * y2p - y1p * y2), q=_frozen(qv))
    return HamiltonianField(grid, H, rank_one=True, meta=meta)


def build_H_from_density(rho, grid: SpaceGrid) -> HamiltonianField:
    """H = diag(rho, 1) for the wave equation rho u_tt = u_xx."""
    rv, rf = sample_function(rho, grid, "density")
    if rv.min() <= 0:
        k = int(np.argmin(rv))
        raise HamiltonianError(f"density must be positive (rho={rv[k]:.3g} at x={grid.x[k]:.6g})")
    H = np.zeros((grid.n_points, 2, 2))
    H[:, 0, 0] = rv
    H[:, 1, 1] = 1.0

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2, 2))
        out[..., 0, 0] = rf(x)
        out[..., 1, 1] = 1.0
        return out

    return HamiltonianField(grid, H, positive_delta=float(min(rv.min(), 1.0)), func=func,
                            meta=dict(source="density", rho=_frozen(rv)))


def dirac_potential(p, q, grid: SpaceGrid):
    """Samples and evaluator of V = [[p, q], [q, -p]]."""
    pv, pf = sample_function(p, grid, "p")
    qv, qf = sample_function(q, grid, "q")

    def V(x):
        x = np.asarray(x, dtype=float)
        a, b = pf(x), qf(x)
        out = np.empty(x.shape + (2, 2))
        out[..., 0, 0], out[..., 0, 1] = a, b
        out[..., 1, 0], out[..., 1, 1] = b, -a
        return out

    return V(grid.x), V


def build_H_from_dirac(p, q, grid: SpaceGrid) -> HamiltonianField:
    """Gram-matrix Hamiltonian of the Dirac fundamental solutions.

    Solves J Y' + V Y = 0, i.e. Y' = J V Y, for the columns Y^1(0) = (1, 0),
    Y^2(0) = (0, 1) and returns H = A^T A with A = [Y^1 Y^2].  The
    fundamental matrix is kept in ``meta["A"]``.
    """
    Vn, Vf = dirac_potential(p, q, grid)
    try:
        A = rk4_linear(J @ Vn, J @ Vf(_half_points(grid)), np.eye(2), grid.h)
    except IntegrationOverflow as exc:
        raise IntegrationOverflow(exc.x, "Dirac Cauchy problem overflowed") from None
    H = np.swapaxes(A, 1, 2) @ A
    delta = float(np.linalg.eigvalsh(H)[:, 0].min())
    return HamiltonianField(grid, H, positive_delta=delta,
                            meta=dict(source="dirac", A=_frozen(A), V=_frozen(Vn)))


# --------------------------------------------------------------------------
# Jacobi partitions


def _perp(e):
    # e^perp = J e
    return np.stack([e[..., 1], -e[..., 0]], axis=-1)


@dataclass(frozen=True)
class JacobiSystem:
    """Partition lengths ``l_j`` with unit vectors ``e_j`` and the derived Jacobi matrix.

    ``q[0]`` follows the convention q_1 = (e_1, e_2) / (l_1 (e_1^perp, e_2)),
    the interior formula without its (e_1, e_0) term; pass ``q1`` to
    override it.
    """

    lengths: np.ndarray
    vectors: np.ndarray
    q1: Optional[float] = None

    def __post_init__(self):
        l = np.asarray(self.lengths, dtype=float)
        e = np.asarray(self.vectors, dtype=float)
        if l.ndim != 1 or l.size < 2 or e.shape != (l.size, 2):
            raise ValueError("need N >= 2 lengths and N unit vectors")
        if np.any(l <= 0):
            raise ValueError("partition lengths must be positive")
        if np.abs(np.linalg.norm(e, axis=1) - 1).max() > 1e-12:
            raise ValueError("partition vectors must have unit length")
        cross = np.einsum("ij,ij->i", e[1:], _perp(e[:-1]))
        bad = np.flatnonzero(np.abs(cross) < 1e-8)
        if bad.size:
            j = int(bad[0]) + 1
            raise DegeneratePartitionError(f"e_{j} and e_{j + 1} are parallel")
        object.__setattr__(self, "lengths", _frozen(l))
        object.__setattr__(self, "vectors", _frozen(e))

    @classmethod
    def from_angles(cls, lengths, angles, q1=None) -> "JacobiSystem":
        """Unit vectors (cos a, sin a); multiples of pi/2 map to exact axis vectors."""
        a = np.asarray(angles, dtype=float)
        e = np.stack([np.cos(a), np.sin(a)], axis=1)
        k = a / (np.pi / 2)
        exact = np.abs(k - np.round(k)) < 1e-12
        axes = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        e[exact] = axes[np.round(k[exact]).astype(int) % 4]
        return cls(lengths, e, q1)

    @classmethod
    def from_json(cls, path) -> "JacobiSystem":
        """Read ``{"lengths": [...], "angles": [...], "q1": optional}``."""
        with open(path) as fh:
            d = json.load(fh)
        return cls.from_angles(d["lengths"], d["angles"], d.get("q1"))

    @property
    def n(self) -> int:
        return self.lengths.size

    @property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @cached_property
    def rho(self) -> np.ndarray:
        """Off-diagonal entries rho_1..rho_{N-1}."""
        e, l = self.vectors, self.lengths
        cross = np.einsum("ij,ij->i", e[1:], _perp(e[:-1]))  # (e_{j+1}, e_j^perp)
        return _frozen(-1.0 / (cross * np.sqrt(l[:-1] * l[1:])))

    @cached_property
    def q(self) -> np.ndarray:
        """Diagonal entries q_1..q_N (q_N only uses its left neighbour)."""
        e, l = self.vectors, self.lengths
        ep = _perp(e)
        n = self.n
        right = np.zeros(n)  # (e_j, e_{j+1}) / (e_j^perp, e_{j+1})
        left = np.zeros(n)  # (e_j, e_{j-1}) / (e_j^perp, e_{j-1})
        right[:-1] = np.einsum("ij,ij->i", e[:-1], e[1:]) / np.einsum("ij,ij->i", ep[:-1], e[1:])
        left[1:] = np.einsum("ij,ij->i", e[1:], e[:-1]) / np.einsum("ij,ij->i", ep[1:], e[:-1])
        q = (right - left) / l
        if self.q1 is not None:
            q[0] = self.q1
        return _frozen(q)

    @property
    def matrix(self) -> np.ndarray:
        """Truncated N x N symmetric tridiagonal Jacobi matrix."""
        return np.diag(self.q) + np.diag(self.rho, 1) + np.diag(self.rho, -1)


def build_jacobi_from_partition(lengths, angles=None, vectors=None, q1=None) -> JacobiSystem:
    if (angles is None) == (vectors is None):
        raise ValueError("give exactly one of angles or vectors")
    if angles is not None:
        return JacobiSystem.from_angles(lengths, angles, q1)
    return JacobiSystem(lengths, vectors, q1)


def build_H_jacobi(sys: JacobiSystem, grid: Optional[SpaceGrid] = None) -> HamiltonianField:
    """Piecewise-constant rank-one H = e_j e_j^T on each interval."""
    b = sys.breakpoints
    if grid is None:
        grid = SpaceGrid(float(b[-1]), max(3, 20 * sys.n + 1))
    blocks = np.einsum("ji,jk->jik", sys.vectors, sys.vectors)
    idx = np.clip(np.searchsorted(b, grid.x, side="right") - 1, 0, sys.n - 1)
    return HamiltonianField(grid, blocks[idx], representation="piecewise", rank_one=True,
                            partition=_frozen(b), blocks=_frozen(blocks),
                            meta=dict(source="jacobi"))


# --------------------------------------------------------------------------
# Diagonalization, eikonal, trace normalization


def rotation(phi) -> np.ndarray:
    """U(phi) = [[cos, sin], [-sin, cos]], shape ``phi.shape + (2, 2)``."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


@dataclass(frozen=True)
class DiracReduction:
    """D = diag(d1, d2) and potential psi of the rotated (Dirac-type) system.

    With U(phi) as in ``rotation`` and U^T H U = D, the substitution Y = U Y~
    turns i H Y_t - J Y_x = 0 into i D Y~_t - J Y~_x - psi Y~ = 0 and
    i H Z_t + J Z_x = 0 into i D Z~_t + J Z~_x + psi Z~ = 0, where
    psi = -phi'.  Reductions may also be built directly from (d1, d2, psi).
    """

    grid: SpaceGrid
    d1: np.ndarray
    d2: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    H: Optional[HamiltonianField] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("d1", "d2", "psi", "phi"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (self.grid.n_points,):
                raise GridError(f"{name} does not match the grid")
            object.__setattr__(self, name, _frozen(v))
        if min(self.d1.min(), self.d2.min()) <= 0:
            raise HamiltonianError("Dirac-type reduction needs d1, d2 > 0")

    @classmethod
    def from_coefficients(cls, d1, d2, psi, grid: SpaceGrid) -> "DiracReduction":
        d1v, _ = sample_function(d1, grid, "d1")
        d2v, _ = sample_function(d2, grid, "d2")
        pv, _ = sample_function(psi, grid, "psi")
        return cls(grid, d1v, d2v, pv, np.zeros(grid.n_points))

    @property
    def delta(self) -> float:
        return float(min(self.d1.min(), self.d2.min()))

    @property
    def D(self) -> np.ndarray:
        out = np.zeros((self.grid.n_points, 2, 2))
        out[:, 0, 0], out[:, 1, 1] = self.d1, self.d2
        return out

    @cached_property
    def _splines(self):
        x = self.grid.x
        return [interpolate.CubicSpline(x, v) for v in (self.d1, self.d2, self.psi)]

    def coefficients_at(self, x):
        """(d1, d2, psi) evaluated between grid points by cubic splines."""
        return tuple(s(np.asarray(x, float)) for s in self._splines)

    def U(self) -> np.ndarray:
        return rotation(self.phi)

    def reconstruct(self) -> np.ndarray:
        U = self.U()
        return U @ self.D @ np.swapaxes(U, 1, 2)


def _eig2(H):
    a, b, c = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return mean + rad, mean - rad, rad


def diagonalize_H(H: HamiltonianField, delta: Optional[float] = None,
                  degenerate_tol: float = 1e-9) -> DiracReduction:
    """Rotate a strictly positive H to diag(d1, d2) with d1 >= d2 and a continuous angle.

    With d1 >= d2 the angle is fixed modulo pi; it is unwrapped by multiples
    of pi along x.  At samples where the eigenvalues coincide (within
    ``degenerate_tol`` relative) the angle is undefined and is filled in by
    interpolation from the neighbouring samples; if H is scalar everywhere
    the angle is zero.
    """
    v = H.values
    d1, d2, rad = _eig2(v)
    bound = H.positive_delta if delta is None else delta
    if bound is None or d2.min() < bound * (1 - 1e-12) or d2.min() <= 0:
        k = int(np.argmin(d2))
        raise HamiltonianError(f"H is not strictly positive (eigenvalue {d2[k]:.3e} at x={H.grid.x[k]:.6g})")
    # eigenvector of d1 is (cos phi, -sin phi): phi = -atan2 of it
    phi = 0.5 * np.arctan2(-2 * v[:, 0, 1], v[:, 0, 0] - v[:, 1, 1])
    ok = rad > degenerate_tol * np.maximum(1.0, d1)
    if not ok.any():
        phi = np.zeros_like(phi)
    else:
        idx = np.flatnonzero(ok)
        good = phi[idx]
        jumps = np.diff(good)
        good = good - np.pi * np.concatenate([[0], np.cumsum(np.round(jumps / np.pi))])
        if np.any(np.abs(np.diff(good)) > np.pi / 4):
            k = int(idx[np.argmax(np.abs(np.diff(good)))])
            raise GridError(f"rotation angle jumps near x={H.grid.x[k]:.6g}: the eigenvalues cross "
                            "or the grid does not resolve the rotation")
        if idx.size == phi.size:
            phi = good
        elif idx.size >= 4:
            spl = interpolate.CubicSpline(H.grid.x[idx], good)
            phi = spl(H.grid.x)
        else:
            phi = np.interp(H.grid.x, H.grid.x[idx], good)
        if -np.pi / 2 >= phi[0] or phi[0] > np.pi / 2:
            phi = phi - np.pi * np.floor(phi[0] / np.pi + 0.5)
    psi = -np.gradient(phi, H.grid.h, edge_order=2)
    return DiracReduction(H.grid, d1, d2, psi, phi, H)


@dataclass(frozen=True)
class Eikonal:
    """Travel time tau(x) = int_0^x sqrt(det H) with its monotone inverse."""

    grid: SpaceGrid
    tau: np.ndarray

    @cached_property
    def _inverse(self):
        tau = self.tau
        keep = np.concatenate([[True], np.diff(tau) > 1e-14 * max(1.0, tau[-1])])
        if keep.sum() < 2:
            return None
        return interpolate.PchipInterpolator(tau[keep], self.grid.x[keep], extrapolate=False)

    def x_of(self, t):
        """Inverse map x(t); NaN outside [0, tau(x_max)] or if tau never increases."""
        inv = self._inverse
        if inv is None:
            return np.full(np.shape(t), np.nan)
        return inv(np.asarray(t, dtype=float))

    def at(self, x):
        return np.interp(x, self.grid.x, self.tau)


def eikonal(H: HamiltonianField, rule: str = "trapezoid") -> Eikonal:
    det = np.clip(H.det, 0.0, None)
    return Eikonal(H.grid, _frozen(cumulative_integral(np.sqrt(det), H.grid.h, rule)))


def eikonal_from_reduction(red: DiracReduction, rule: str = "trapezoid") -> Eikonal:
    return Eikonal(red.grid, _frozen(cumulative_integral(np.sqrt(red.d1 * red.d2), red.grid.h, rule)))


@dataclass(frozen=True)
class CoordinateMap:
    """Monotone change of variable x -> x~ sampled on the original grid."""

    x: np.ndarray
    x_new: np.ndarray

    def forward(self, x):
        return np.interp(x, self.x, self.x_new)

    def backward(self, x_new):
        return interpolate.PchipInterpolator(self.x_new, self.x)(x_new)


def normalize_trace(H: HamiltonianField, rule: str = "simpson",
                    delta: float = 1e-12) -> tuple[HamiltonianField, CoordinateMap]:
    """Rescale to unit trace in the new coordinate x~ = int_0^x tr H.

    The returned field lives on a uniform grid in x~ with as many points as
    the input; values are pulled back through the monotone inverse map.
    """
    tr = H.trace
    if tr.min() < delta:
        k = int(np.argmin(tr))
        raise HamiltonianError(f"trace vanishes at x={H.grid.x[k]:.6g}")
    xn = cumulative_integral(tr, H.grid.h, rule)
    cmap = CoordinateMap(_frozen(H.grid.x), _frozen(xn))
    new_grid = SpaceGrid(float(xn[-1]), H.grid.n_points)
    x_back = np.clip(cmap.backward(new_grid.x), 0.0, H.grid.x_max)
    x_back[0], x_back[-1] = 0.0, H.grid.x_max

    def func(xt):
        xb = np.clip(cmap.backward(np.asarray(xt, float)), 0.0, H.grid.x_max)
        m = H.at(xb)
        return m / np.trace(m, axis1=-2, axis2=-1)[..., None, None]

    vals = func(new_grid.x)
    if H.representation == "piecewise":
        vals = H.values / tr[:, None, None]
        new_grid = H.grid if np.allclose(tr, 1.0) else new_grid
    pos = None
    if H.positive_delta is not None:
        pos = float(np.linalg.eigvalsh(vals)[:, 0].min())
        pos = pos if pos > 0 else None
    return HamiltonianField(new_grid, vals, rank_one=H.rank_one, positive_delta=pos,
                            func=None if H.representation == "piecewise" else func,
                            meta=dict(source="normalized", parent=H.meta.get("source"))), cmap


# --------------------------------------------------------------------------
# Leading amplitude of the wavefront


def solve_amplitude_A(red: DiracReduction, a0=(1.0, 0.0)) -> np.ndarray:
    """RK4 solution (a1, a2) of the amplitude system along x.

    The pair of relations  i sqrt(d1) a1' = sqrt(d2) a2'  and
    sqrt(d2) (psi a1 + a2') = i sqrt(d1) (psi a2 - a1')  is solved for the
    derivatives:  a1' = (psi / 2)(a2 + i sqrt(d2/d1) a1),
    a2' = i sqrt(d1/d2) a1'.
    """
    grid = red.grid
    if red.delta <= 0:
        raise HamiltonianError("amplitude system is singular where d1 or d2 vanish")

    def system(d1, d2, psi):
        mu = np.sqrt(d1 / d2)
        nu = 1.0 / mu
        a = np.zeros(np.shape(d1) + (2, 2), dtype=complex)
        a[..., 0, 0] = 0.5j * psi * nu
        a[..., 0, 1] = 0.5 * psi
        a[..., 1, :] = 1j * mu[..., None] * a[..., 0, :]
        return a

    an = system(red.d1, red.d2, red.psi)
    ah = system(*red.coefficients_at(_half_points(grid)))
    return rk4_linear(an, ah, np.asarray(a0, dtype=complex), grid.h)


def transport_amplitude(red: DiracReduction) -> np.ndarray:
    """Leading front amplitude of the forward Dirac-type system from geometric-optics transport.

    Writing V ~ A(x) f(t - tau(x)) + ..., the f'-terms force A = alpha r
    with r = (1, i mu), mu = sqrt(d1/d2).  Pairing the f-terms with the
    left null vector (1, -i mu) gives
        2 mu alpha' + mu' alpha - i psi (1 + mu^2) alpha = 0,
    so |A| is proportional to sqrt(mu + 1/mu).  Normalized to A(0)_1 = 1.
    """
    grid = red.grid
    mu = np.sqrt(red.d1 / red.d2)
    phase = cumulative_integral(red.psi * (1 + mu**2) / (2 * mu), grid.h, "simpson")
    alpha = np.sqrt(mu[0] / mu) * np.exp(1j * phase)
    return np.stack([alpha, 1j * mu * alpha], axis=-1)
