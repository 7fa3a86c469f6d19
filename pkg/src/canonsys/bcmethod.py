"""Boundary-control operators for the Dirac-type system i D V_t + J V_x + psi V = 0.

States at time T are compared in the energy pairing
(a, b) = int (d1 a1 conj(b1) + d2 a2 conj(b2)) dx, which is the pairing
conserved by both the forward and the auxiliary dynamics.  Controls are
expanded in smoothed deltas that are orthonormalized in discrete
L2(0, T), so in the free case C^T is twice the identity.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .builders import DiracReduction, eikonal_from_reduction
from .core import BoundaryControl, GridError, TimeGrid, lagrange_resample, smoothed_delta
from .frequency import fourier_image
from .timedomain.response import bump_centers
from .timedomain.solvers import EvolutionResult, solve_dirac_type

CFL = 0.9


def time_grid_for(red: DiracReduction, T: float, cfl: float = CFL) -> TimeGrid:
    cmax = 1.0 / np.sqrt((red.d1 * red.d2).min())
    return TimeGrid(T, int(np.ceil(T * cmax / (cfl * red.grid.h) - 1e-9)), cfl)


def energy_weights(red: DiracReduction) -> np.ndarray:
    """Per-node diagonal weights w_k d_i(x_k), shape (n_x, 2)."""
    w = red.grid.weights()
    return np.stack([w * red.d1, w * red.d2], axis=-1)


def energy_inner(red: DiracReduction, a: np.ndarray, b: np.ndarray) -> complex:
    """(a, b) with the energy weight, linear in ``a``, conjugate-linear in ``b``."""
    return complex(np.sum(energy_weights(red) * a * np.conj(b)))


def final_state(red: DiracReduction, f: BoundaryControl, sign: str) -> np.ndarray:
    res = solve_dirac_type(red, f, red.grid, f.grid, sign=sign, store_field=False)
    return res.final


@dataclass(frozen=True)
class ControlOperatorMatrix:
    """Columns are the states at T (shape (n_x, 2) each) for the orthonormal control basis.

    ``matrix`` has shape (n_x, 2, m).  In extended mode the first half of
    the columns are forward states V^{b_k}, the second half auxiliary
    states U^{b_k}.  ``basis`` (n_t, k) holds the orthonormal controls,
    ``bumps`` the raw smoothed deltas and ``coeff`` the triangular map with
    basis = bumps @ coeff.
    """

    red: DiracReduction
    time: TimeGrid
    mode: str
    matrix: np.ndarray
    basis: np.ndarray
    bumps: np.ndarray
    coeff: np.ndarray
    centers: np.ndarray
    width: float

    @property
    def T(self) -> float:
        return self.time.t_max

    def weighted(self) -> np.ndarray:
        """sqrt(Q) W as a (2 n_x, m) matrix, so that its Gram is C^T."""
        sw = np.sqrt(energy_weights(self.red))
        return (sw[..., None] * self.matrix).reshape(-1, self.matrix.shape[-1])

    def project(self, *controls: BoundaryControl) -> tuple[np.ndarray, float]:
        """Coefficients of controls (one per family) in the basis and the relative residual."""
        w = self.time.weights()
        coefs, res, norm = [], 0.0, 0.0
        for c in controls:
            v = np.asarray(c.values)
            a = self.basis.T @ (w * v)
            coefs.append(a)
            r = v - self.basis @ a
            res += float(np.sum(w * np.abs(r) ** 2))
            norm += float(np.sum(w * np.abs(v) ** 2))
        rel = np.sqrt(res / norm) if norm > 0 else 0.0
        return np.concatenate(coefs), rel


def control_operator(red: DiracReduction, T: float, mode: str = "extended", width: Optional[float] = None,
                     n_basis: Optional[int] = None, jobs: int = 1, time: Optional[TimeGrid] = None
                     ) -> ControlOperatorMatrix:
    """Assemble W~^T (``single``) or W^T (``extended``) on a smoothed-delta basis.

    Bumps have width 6 dt by default and are spaced one width apart; they
    are orthonormalized (QR of the quadrature-weighted samples) before the
    state columns are combined, which is legitimate because the solvers are
    linear.
    """
    if mode not in ("single", "extended"):
        raise ValueError(f"unknown mode {mode!r}")
    time = time_grid_for(red, T) if time is None else time
    cmax = 1.0 / np.sqrt((red.d1 * red.d2).min())
    if red.grid.x_max < cmax * time.t_max - 1e-12:
        raise GridError("reduction grid does not cover x(T)")
    width = 6 * time.dt if width is None else float(width)
    centers = bump_centers(time, width, n_basis)
    bumps = [smoothed_delta(c, width, time) for c in centers]
    raw = np.column_stack([b.values.real for b in bumps])
    sw = np.sqrt(time.weights())
    _, R = np.linalg.qr(sw[:, None] * raw)
    coeff = np.linalg.inv(R)
    basis = raw @ coeff

    signs = ["forward"] if mode == "single" else ["forward", "auxiliary"]
    tasks = [(b, s) for s in signs for b in bumps]

    def run(task):
        return final_state(red, task[0], task[1])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            states = list(pool.map(run, tasks))
    else:
        states = [run(t) for t in tasks]
    k = len(bumps)
    blocks = []
    for i, _ in enumerate(signs):
        S = np.stack(states[i * k:(i + 1) * k], axis=-1)
        blocks.append(S @ coeff)
    M = np.concatenate(blocks, axis=-1)
    return ControlOperatorMatrix(red, time, mode, M, basis, raw, coeff, centers, width)


@dataclass(frozen=True)
class SingularProfile:
    values: np.ndarray
    sigma_min: float
    sigma_max: float
    ratio: float


def singular_profile(W: ControlOperatorMatrix) -> SingularProfile:
    s = np.linalg.svd(W.weighted(), compute_uv=False)
    return SingularProfile(s, float(s.min()), float(s.max()), float(s.min() / s.max()))


def _rank(A: np.ndarray, rel: float) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rel * s.max())) if s.size and s.max() > 0 else 0


@dataclass(frozen=True)
class DefectReport:
    singular_values: np.ndarray
    rank_single: int
    rank_extended: int
    defect: float


def reachability_defect(W: ControlOperatorMatrix, extended: Optional[ControlOperatorMatrix] = None,
                        rel_tol: float = 1e-6) -> DefectReport:
    """Share of the extended reachable set that a single control misses.

    defect = 1 - rank(W~) / rank([W~, W~_aux]) with numerical ranks at
    ``rel_tol * sigma_max``.  The auxiliary family is assembled on the same
    basis when ``extended`` is not supplied.  Free transport gives 1/2: the
    single-control image is {phi (1, i)}.
    """
    if W.mode != "single":
        raise ValueError("reachability_defect expects a single-control operator")
    if extended is None:
        extended = control_operator(W.red, W.T, "extended", width=W.width, n_basis=W.centers.size, time=W.time)
    s = np.linalg.svd(W.weighted(), compute_uv=False)
    r1 = _rank(W.weighted(), rel_tol)
    r2 = _rank(extended.weighted(), rel_tol)
    return DefectReport(s, r1, r2, 1.0 - r1 / r2 if r2 else 0.0)


@dataclass(frozen=True)
class ControllabilityReport:
    sigma_min: float
    sigma_max: float
    ratio: float
    floor: float
    passed: bool


def controllability_check(W: ControlOperatorMatrix, floor: float = 1e-4) -> ControllabilityReport:
    """Pass iff sigma_min > floor * sigma_max for the extended operator."""
    if W.mode != "extended":
        raise ValueError("controllability_check expects the extended operator")
    p = singular_profile(W)
    return ControllabilityReport(p.sigma_min, p.sigma_max, p.ratio, floor, p.ratio > floor)


@dataclass(frozen=True)
class ConnectingOperatorMatrix:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    hermitian_defect: float
    psd: bool
    source: ControlOperatorMatrix = field(repr=False)

    def distance_to(self, multiple_of_identity: float) -> float:
        """Relative spectral distance to c * I."""
        n = self.matrix.shape[0]
        c = multiple_of_identity
        return float(np.linalg.norm(self.matrix - c * np.eye(n), 2) / abs(c))


def connecting_operator(W: ControlOperatorMatrix, psd_floor: float = 1e-10) -> ConnectingOperatorMatrix:
    """C^T = W^H Q W in the orthonormal control coordinates."""
    if W.mode != "extended":
        raise ValueError("connecting_operator expects the extended operator")
    A = W.weighted()
    C = A.conj().T @ A
    herm = float(np.abs(C - C.conj().T).max())
    C = 0.5 * (C + C.conj().T)
    ev = np.linalg.eigvalsh(C)
    norm = max(abs(ev).max(), np.finfo(float).tiny)
    return ConnectingOperatorMatrix(C, ev, herm, bool(ev.min() >= -psd_floor * norm), W)


@dataclass(frozen=True)
class BTElement:
    controls: tuple
    lam: np.ndarray
    K: np.ndarray
    state: np.ndarray
    coefficients: np.ndarray
    projection_residual: float
    backing: ConnectingOperatorMatrix = field(repr=False)


def extended_state(red: DiracReduction, k1: BoundaryControl, k2: BoundaryControl) -> np.ndarray:
    """V^{k1}(T) + U^{k2}(T)."""
    if k1.grid != k2.grid:
        raise GridError("the two controls live on different grids")
    return final_state(red, k1, "forward") + final_state(red, k2, "auxiliary")


def bt_element(red: DiracReduction, pair, lambda_grid, backing: ConnectingOperatorMatrix) -> BTElement:
    """K(lambda) = Fourier image of W^T(k1, k2) against the Dirichlet solutions theta(., lambda)."""
    k1, k2 = pair
    if k1.grid != backing.source.time:
        raise GridError("controls must live on the operator's time grid")
    state = extended_state(red, k1, k2)
    K = fourier_image(state, red, lambda_grid)
    c, res = backing.source.project(k1, k2)
    return BTElement((k1, k2), np.asarray(lambda_grid), K, state, c, res, backing)


def bt_inner(a: BTElement, b: BTElement) -> complex:
    """[a, b] = (C^T k_a, k_b), conjugate-linear in ``a`` like ``quad_inner``."""
    if a.backing is not b.backing:
        raise ValueError("elements are backed by different connecting operators")
    return complex(np.conj(a.coefficients) @ a.backing.matrix @ b.coefficients)


# --------------------------------------------------------------------------
# wavefront amplitude


@dataclass(frozen=True)
class AmplitudeReport:
    x: np.ndarray
    field_ratio: np.ndarray
    amplitude_ratio: np.ndarray
    max_deviation: float
    ahead_of_front: float


def wavefront_amplitude(result: EvolutionResult, red: DiracReduction, A: np.ndarray,
                        center: float, width: float) -> AmplitudeReport:
    """Compare |V(x, tau(x) + center)| / |V(0, center)| with |A(x)| / |A(0)|.

    ``result`` must hold the stored field of a run driven by a narrow bump
    centered at ``center`` with half-width ``width``.  Only nodes whose
    front passes before T - width are used.  ``ahead_of_front`` is the
    largest |V| where tau(x) > t - (center - width) + 2 max(h, dt).
    """
    time = result.time
    if result.field is None:
        raise ValueError("wavefront extraction needs the stored field")
    if width > 0.25 * time.t_max:
        raise GridError("bump too wide relative to T")
    tau = eikonal_from_reduction(red).tau
    keep = tau + center <= time.t_max - width
    x_idx = np.flatnonzero(keep)
    tf = tau[x_idx] + center
    V = result.field
    # interpolate each column in time at its front time
    vals = np.empty((x_idx.size, 2), dtype=complex)
    for n, (k, t) in enumerate(zip(x_idx, tf)):
        vals[n] = lagrange_resample(time.dt, V[:, k, :], np.array([t]))[0]
    mag = np.linalg.norm(vals, axis=-1)
    amp = np.linalg.norm(np.asarray(A)[x_idx], axis=-1)
    fr, ar = mag / mag[0], amp / amp[0]
    dev = float(np.abs(fr / ar - 1).max())
    gap = 2 * max(red.grid.h, time.dt)
    ahead = tau[None, :] > time.t[:, None] - (center - width) + gap
    lead = float(np.linalg.norm(V, axis=-1)[ahead].max()) if ahead.any() else 0.0
    return AmplitudeReport(red.grid.x[x_idx], fr, ar, dev, lead)
