"""Transfer matrices, de Branges functions and reproducing kernels.

The spectral canonical system is -J Y' = lambda H Y, i.e. Y' = lambda J H Y,
with Y(0) = C.  For C = (1, 0) the function E_x(lambda) = Y1 + i Y2 is of
Hermite-Biehler class whenever H is nonnegative and not trivial.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .builders import DiracReduction
from .core import J, GridError, HamiltonianField, IntegrationOverflow, SpaceGrid, rk4_linear

_CHUNK = 256


def _as_lambda(lam):
    lam = np.asarray(lam, dtype=complex)
    return lam.reshape(-1), lam.shape


def _truncate(H: HamiltonianField, x: float):
    """Grid nodes up to ``x`` (which must be a node, up to rounding)."""
    grid = H.grid
    k = x / grid.h
    n = int(round(k))
    if abs(k - n) > 1e-8 or n < 1 or n > grid.n_points - 1:
        raise GridError(f"x={x} is not a grid node inside [h, {grid.x_max}]")
    return n


def _piecewise_transfer(H: HamiltonianField, x: float, lam: np.ndarray) -> np.ndarray:
    """Exact product of block exponentials exp(lambda l J H_k); shape (n_lam, 2, 2)."""
    edges = np.asarray(H.partition, float)
    out = np.broadcast_to(np.eye(2, dtype=complex), (lam.size, 2, 2)).copy()
    for k, B in enumerate(H.blocks):
        lo = edges[k]
        if lo >= x:
            break
        hi = edges[k + 1] if k + 1 < edges.size else np.inf
        ell = min(hi, x) - lo
        JB = J @ B
        if np.abs(JB @ JB).max() < 1e-14:
            # J e e^T is nilpotent for unit e
            step = np.eye(2) + (lam * ell)[:, None, None] * JB
        else:
            step = np.stack([linalg.expm(l * ell * JB) for l in lam])
        out = step @ out
    return out


def transfer_matrix(H: HamiltonianField, x: float, lam) -> np.ndarray:
    """Fundamental matrix Theta(x, lambda) with Theta(0) = I; shape lam.shape + (2, 2).

    Piecewise-constant Hamiltonians are handled exactly; sampled ones by
    RK4 with the grid step (H at midpoints from its evaluator).
    """
    lam_flat, shape = _as_lambda(lam)
    if H.representation == "piecewise":
        return _piecewise_transfer(H, x, lam_flat).reshape(shape + (2, 2))
    n = _truncate(H, x)
    g = H.grid
    JH = J @ H.values[: n + 1]
    JHm = J @ H.at(g.x[:n] + 0.5 * g.h)
    out = np.empty((lam_flat.size, 2, 2), dtype=complex)
    for s in range(0, lam_flat.size, _CHUNK):
        lc = lam_flat[s:s + _CHUNK]
        a = lc[None, :, None, None] * JH[:, None]
        am = lc[None, :, None, None] * JHm[:, None]
        y0 = np.broadcast_to(np.eye(2, dtype=complex), (lc.size, 2, 2))
        out[s:s + _CHUNK] = rk4_linear(a, am, y0, g.h, store=False)
    return out.reshape(shape + (2, 2))


def solve_transfer(H: HamiltonianField, x: float, lam, C0=(1.0, 0.0)) -> np.ndarray:
    """Y(x, lambda) for -J Y' = lambda H Y, Y(0) = C0; shape lam.shape + (2,)."""
    C0 = np.asarray(C0, dtype=complex)
    if not np.any(C0):
        raise ValueError("initial vector must be nonzero")
    return transfer_matrix(H, x, lam) @ C0


def transfer_det_defect(H: HamiltonianField, x: float, lam) -> float:
    """max |det Theta - 1|; the exact value is 0 because tr(J H) = 0."""
    return float(np.abs(np.linalg.det(transfer_matrix(H, x, lam)) - 1).max())


def debranges_E(H: HamiltonianField, x: float, lam, C0=(1.0, 0.0)) -> np.ndarray:
    Y = solve_transfer(H, x, lam, C0)
    return Y[..., 0] + 1j * Y[..., 1]


@dataclass
class DeBrangesFunction:
    """lambda -> E_x(lambda), backed either by a Hamiltonian or by a closed form.

    ``normalize`` divides by E(0) (only relevant for C0 other than (1, 0)).
    Values are memoized per point.
    """

    H: Optional[HamiltonianField]
    x: Optional[float]
    C0: tuple = (1.0, 0.0)
    normalize: bool = False
    func: Optional[Callable] = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_hamiltonian(cls, H: HamiltonianField, x: Optional[float] = None, C0=(1.0, 0.0),
                         normalize: bool = False) -> "DeBrangesFunction":
        return cls(H, H.grid.x_max if x is None else float(x), tuple(C0), normalize)

    @classmethod
    def from_callable(cls, func: Callable) -> "DeBrangesFunction":
        return cls(None, None, func=func)

    def _raw(self, lam: np.ndarray) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(lam), dtype=complex)
        return debranges_E(self.H, self.x, lam, self.C0)

    def __call__(self, lam):
        lam_flat, shape = _as_lambda(lam)
        missing = np.array([z for z in dict.fromkeys(lam_flat.tolist()) if z not in self._cache], dtype=complex)
        if missing.size:
            vals = self._raw(missing)
            if self.normalize and self.func is None:
                vals = vals / self._raw(np.zeros(1))[0]
            self._cache.update(zip(missing.tolist(), vals.tolist()))
        out = np.array([self._cache[z] for z in lam_flat.tolist()], dtype=complex)
        return out.reshape(shape)


def standard_zgrid() -> np.ndarray:
    """{a + b i : a in -5..5, b in (0.1, 1, 10)}."""
    a = np.arange(-5, 6, dtype=float)
    b = np.array([0.1, 1.0, 10.0])
    return (a[None, :] + 1j * b[:, None]).ravel()


@dataclass(frozen=True)
class HBReport:
    points: np.ndarray
    margins: np.ndarray
    min_margin: float
    passed: bool


def hb_check(E: Callable, zgrid=None) -> HBReport:
    """Margins |E(z)| - |E(conj z)| on upper-half-plane points; passes iff all > 0."""
    z = standard_zgrid() if zgrid is None else np.asarray(zgrid, dtype=complex).ravel()
    if np.any(z.imag <= 0):
        raise ValueError("hb_check needs points with Im z > 0")
    m = np.abs(E(z)) - np.abs(E(np.conj(z)))
    return HBReport(z, m, float(m.min()), bool(np.all(m > 0)))


def _kernel_formula(Ez, Ezb, Exi, Exib, z, xi):
    return (np.conj(Ez) * Exi - Ezb * np.conj(Exib)) / (2j * (np.conj(z) - xi))


def reproducing_kernel(E: Callable, z: complex, xi: complex, eta: float = 1e-3) -> complex:
    """J_z(xi) = [conj(E(z)) E(xi) - E(conj z) conj(E(conj xi))] / (2 i (conj z - xi)).

    At xi = conj z the quotient is removable; near it (|conj z - xi| < 1e-6)
    the value is the average over xi = conj z + eta * {1, -1, i, -i}, which
    cancels the first three Taylor terms, refined by one Richardson step.
    """
    z, xi = complex(z), complex(xi)
    zb = z.conjugate()
    if abs(zb - xi) >= 1e-6:
        vals = E(np.array([z, zb, xi, xi.conjugate()]))
        return complex(_kernel_formula(vals[0], vals[1], vals[2], vals[3], z, xi))

    def ring(r):
        pts = zb + r * np.array([1, -1, 1j, -1j])
        Ez, Ezb = E(np.array([z, zb]))
        Ep = E(pts)
        Epb = E(np.conj(pts))
        return np.mean(_kernel_formula(Ez, Ezb, Ep, Epb, z, pts))

    return complex((16 * ring(eta / 2) - ring(eta)) / 15)


def kernel_diagonal(E: Callable, z: complex) -> float:
    """J_z(z) = (|E(z)|^2 - |E(conj z)|^2) / (4 Im z) for Im z != 0."""
    z = complex(z)
    if z.imag == 0:
        return float(reproducing_kernel(E, z, z).real)
    Ez, Ezb = E(np.array([z, z.conjugate()]))
    return float((abs(Ez) ** 2 - abs(Ezb) ** 2) / (4 * z.imag))


@dataclass(frozen=True)
class KernelSample:
    points: np.ndarray
    gram: np.ndarray
    min_eig: float
    psd: bool


def kernel_gram(E: Callable, points: Sequence[complex], floor: float = 1e-10) -> KernelSample:
    """G[i, j] = J_{z_j}(z_i) = [J_{z_j}, J_{z_i}]; diagonal from the closed form."""
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size == 0:
        raise ValueError("kernel_gram needs at least one point")
    n = pts.size
    G = np.empty((n, n), dtype=complex)
    for i in range(n):
        G[i, i] = kernel_diagonal(E, pts[i])
        for j in range(i + 1, n):
            G[i, j] = reproducing_kernel(E, pts[j], pts[i])
            G[j, i] = np.conj(G[i, j])
    lam = np.linalg.eigvalsh(G)
    scale = max(np.linalg.norm(G, 2), np.finfo(float).tiny)
    return KernelSample(pts, G, float(lam[0]), bool(lam[0] >= -floor * scale))


# --------------------------------------------------------------------------
# Dirac-type spectral problem


def _reduction(red) -> DiracReduction:
    if isinstance(red, DiracReduction):
        return red
    d1, d2, psi, grid = red
    return DiracReduction.from_coefficients(d1, d2, psi, grid)


@dataclass(frozen=True)
class ThetaSolution:
    x: np.ndarray
    theta: np.ndarray
    companion: np.ndarray
    wronskian_defect: float


def solve_theta_dirichlet(red, z, x_max: Optional[float] = None) -> ThetaSolution:
    """J theta' + psi theta = z D theta with theta(0) = (0, 1), by RK4 on the reduction grid.

    ``red`` is a DiracReduction or a tuple (d1, d2, psi, SpaceGrid).  ``z``
    may be an array; ``theta`` then has shape (n_x, *z.shape, 2).  The
    companion solution starts from (1, 0); det[companion, theta] stays 1.
    """
    red = _reduction(red)
    g = red.grid
    n = g.n_points - 1 if x_max is None else _truncate_grid(g, x_max)
    zf, shape = _as_lambda(z)
    xs = g.x[: n + 1]
    d1, d2, psi = (v[: n + 1] for v in (red.d1, red.d2, red.psi))
    d1m, d2m, psim = red.coefficients_at(xs[:-1] + 0.5 * g.h)

    def coef(a, b, p):
        # theta' = -J (z D - psi) theta
        M = np.zeros(a.shape + (zf.size, 2, 2), dtype=complex)
        M[..., 0, 0] = zf * a[:, None] - p[:, None]
        M[..., 1, 1] = zf * b[:, None] - p[:, None]
        return -J @ M

    A = coef(d1, d2, psi)
    Am = coef(d1m, d2m, psim)
    y0 = np.broadcast_to(np.eye(2, dtype=complex)[::-1].T.copy(), (zf.size, 2, 2)).copy()
    # columns: theta(0) = (0, 1), companion(0) = (1, 0)
    y0[:] = np.array([[0.0, 1.0], [1.0, 0.0]])
    try:
        Y = rk4_linear(A, Am, y0, g.h)
    except IntegrationOverflow as exc:
        raise IntegrationOverflow(exc.x, "theta(x, z) overflowed") from None
    theta = Y[..., :, 0]
    comp = Y[..., :, 1]
    det = comp[..., 0] * theta[..., 1] - comp[..., 1] * theta[..., 0]
    defect = float(np.abs(det - 1).max())
    return ThetaSolution(xs, theta.reshape((n + 1,) + shape + (2,)),
                         comp.reshape((n + 1,) + shape + (2,)), defect)


def _truncate_grid(g: SpaceGrid, x_max: float) -> int:
    k = x_max / g.h
    n = int(round(k))
    if abs(k - n) > 1e-8 or n < 1 or n > g.n_points - 1:
        raise GridError(f"x_max={x_max} is not a grid node")
    return n


def fourier_image(state: np.ndarray, red, lambda_grid) -> np.ndarray:
    """F(lambda) = int (f1 theta1 + f2 theta2)(x, lambda) dx, trapezoid on the reduction grid."""
    red = _reduction(red)
    state = np.asarray(state)
    g = red.grid
    if state.shape != (g.n_points, 2):
        raise GridError(f"state shape {state.shape} does not match the grid")
    lam = np.asarray(lambda_grid, dtype=complex).ravel()
    w = g.weights()
    out = np.empty(lam.size, dtype=complex)
    for s in range(0, lam.size, _CHUNK):
        th = solve_theta_dirichlet(red, lam[s:s + _CHUNK]).theta
        out[s:s + _CHUNK] = np.einsum("x,xi,xli->l", w, state, th)
    return out.reshape(np.shape(lambda_grid))


@dataclass(frozen=True)
class InnerProductEstimate:
    value: complex
    raw: complex
    tail: complex


def debranges_inner(F, G, E_values, lam) -> InnerProductEstimate:
    """(1/pi) int conj(F) G / |E|^2 d lambda on a real grid, with a tail correction.

    The raw value is the trapezoid sum over the grid.  Beyond each end the
    integrand is modelled as c / lambda^2, with c fitted on the outer 10% of
    the grid; ``value`` adds the two tails c / |lambda_end| to ``raw``.
    """
    lam = np.asarray(lam, dtype=float)
    F, G, E = (np.asarray(a, dtype=complex) for a in (F, G, E_values))
    if not (F.shape == G.shape == E.shape == lam.shape) or lam.ndim != 1:
        raise GridError("F, G, E and the lambda grid must share one 1-D shape")
    aE = np.abs(E)
    if aE.min() <= 1e-300:
        raise ZeroDivisionError("E vanishes on the lambda grid")
    integrand = np.conj(F) * G / aE**2 / np.pi
    raw = complex(np.trapezoid(integrand, lam))
    m = max(2, lam.size // 10)
    tail = 0j
    for sl, end in ((slice(-m, None), lam[-1]), (slice(None, m), lam[0])):
        if abs(end) > 0:
            c = np.mean(integrand[sl] * lam[sl] ** 2)
            tail += c / abs(end)
    return InnerProductEstimate(raw + tail, raw, tail)
