"""Grids, sampled fields, quadrature and small discrete-operator helpers.

Everything here is immutable after construction.  Arrays are stored as
read-only numpy views so that accidental in-place edits fail loudly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


class GridError(ValueError):
    """Raised for inconsistent or under-resolved grids."""


class CFLError(ValueError):
    """Raised when a time step violates a solver's stability bound."""


class HamiltonianError(ValueError):
    """Raised when a Hamiltonian leaves its declared class."""


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpaceGrid:
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3:
            raise GridError("SpaceGrid needs at least 3 points")
        if not self.x_max > 0:
            raise GridError("x_max must be positive")

    @classmethod
    def from_step(cls, x_max: float, h: float) -> "SpaceGrid":
        """Grid whose spacing is ``h`` (``x_max`` rounded up to a whole cell)."""
        n = int(np.ceil(x_max / h - 1e-9)) + 1
        return cls((n - 1) * h, n)

    @property
    def h(self) -> float:
        return self.x_max / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, self.x_max, self.n_points))

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_points, self.h)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, t_max]``; ``cfl`` is whatever bound the builder recorded."""

    t_max: float
    n_steps: int
    cfl: Optional[float] = None

    def __post_init__(self):
        if self.n_steps < 1 or not self.t_max > 0:
            raise GridError("TimeGrid needs t_max > 0 and at least one step")

    @classmethod
    def from_step(cls, t_max: float, dt: float, cfl: Optional[float] = None) -> "TimeGrid":
        n = int(np.ceil(t_max / dt - 1e-9))
        return cls(n * dt, n, cfl)

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @cached_property
    def t(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, self.t_max, self.n_steps + 1))

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_points, self.dt)


def trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = step / 2
    return w


def cumulative_integral(values: np.ndarray, step: float, rule: str = "trapezoid") -> np.ndarray:
    """Running integral from the first sample, same length as ``values``."""
    values = np.asarray(values)
    if rule == "trapezoid":
        return integrate.cumulative_trapezoid(values, dx=step, initial=0.0)
    if rule == "simpson":
        return integrate.cumulative_simpson(values, dx=step, initial=0.0)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def quad_inner(a: np.ndarray, b: np.ndarray, grid: SpaceGrid, weight=None) -> complex:
    """Discrete L2(0, x_max; C^2) pairing, conjugate-linear in ``a``.

    ``a`` and ``b`` have shape ``(n_points, 2)`` (or ``(n_points,)`` for
    scalar fields).  ``weight`` optionally supplies a pointwise 2x2 matrix,
    giving ``sum w_k a_k^* M_k b_k``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.shape[0] != grid.n_points:
        raise GridError(f"shape mismatch: {a.shape} vs {b.shape} on {grid.n_points} points")
    w = grid.weights()
    if a.ndim == 1:
        return complex(np.sum(w * np.conj(a) * b))
    if weight is not None:
        b = np.einsum("kij,kj->ki", weight, b)
    return complex(np.sum(w[:, None] * np.conj(a) * b))


_D4_LEFT = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D4_SKEW = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def derivative4(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (one-sided near the ends)."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    if v.shape[0] < 5:
        raise GridError("need at least 5 nodes")
    out = np.empty_like(v, dtype=np.result_type(v, float))
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / 12.0
    out[0] = np.tensordot(_D4_LEFT, v[:5], axes=(0, 0))
    out[1] = np.tensordot(_D4_SKEW, v[:5], axes=(0, 0))
    out[-1] = -np.tensordot(_D4_LEFT, v[-1:-6:-1], axes=(0, 0))
    out[-2] = -np.tensordot(_D4_SKEW, v[-1:-6:-1], axes=(0, 0))
    return np.moveaxis(out / step, 0, axis)


def lagrange_resample(s_nodes_step: float, values: np.ndarray, s_query: np.ndarray) -> np.ndarray:
    """Local 4-point Lagrange interpolation from a uniform grid ``k*step``.

    Unlike a spline this keeps supports local: a query more than two nodes
    past the last nonzero sample returns exactly zero.  ``values`` may carry
    trailing dimensions.  Queries beyond the last node give zero.
    """
    values = np.asarray(values)
    n = values.shape[0]
    s = np.asarray(s_query, dtype=float) / s_nodes_step
    out = np.zeros(s.shape + values.shape[1:], dtype=np.result_type(values, float))
    inside = (s >= 0) & (s <= n - 1 + 1e-12)
    si = s[inside]
    k = np.clip(np.floor(si).astype(int) - 1, 0, max(n - 4, 0))
    r = si - k
    nodes = np.arange(4)
    acc = 0
    for m in range(4):
        others = [j for j in range(4) if j != m]
        wm = np.ones_like(r)
        for j in others:
            wm = wm * (r - nodes[j]) / (nodes[m] - nodes[j])
        acc = acc + wm.reshape(wm.shape + (1,) * (values.ndim - 1)) * values[k + m]
    out[inside] = acc
    return out


def bump(s: np.ndarray) -> np.ndarray:
    """The standard C-infinity bump exp(-1/(1-s^2)) on (-1, 1), zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


@dataclass(frozen=True)
class BoundaryControl:
    """Complex samples on a TimeGrid, zero outside ``support``.

    ``func`` is an optional exact evaluator used by solvers that need values
    between grid nodes; without it a cubic spline of the samples is used.
    """

    grid: TimeGrid
    values: np.ndarray
    support: tuple
    func: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_points,):
            raise GridError("control samples do not match the time grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("control samples must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, func: Callable, grid: TimeGrid, support=None) -> "BoundaryControl":
        vals = np.asarray(func(grid.t), dtype=complex)
        if support is None:
            nz = np.flatnonzero(np.abs(vals) > 0)
            support = (grid.t[nz[0]], grid.t[nz[-1]]) if nz.size else (0.0, 0.0)
        return cls(grid, vals, tuple(support), func)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "BoundaryControl":
        return cls(grid, np.zeros(grid.n_points), (0.0, 0.0), lambda t: np.zeros_like(np.asarray(t, float)))

    @cached_property
    def _spline(self):
        return interpolate.CubicSpline(self.grid.t, self.values)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(t), dtype=complex)
        return self._spline(t)

    def energy(self) -> float:
        return float(np.sum(self.grid.weights() * np.abs(self.values) ** 2))

    def scaled(self, alpha: complex) -> "BoundaryControl":
        f = None if self.func is None else (lambda t, g=self.func: alpha * g(t))
        return BoundaryControl(self.grid, alpha * self.values, self.support, f)

    def conj(self) -> "BoundaryControl":
        f = None if self.func is None else (lambda t, g=self.func: np.conj(g(t)))
        return BoundaryControl(self.grid, np.conj(self.values), self.support, f)

    def __add__(self, other: "BoundaryControl") -> "BoundaryControl":
        if other.grid != self.grid:
            raise GridError("controls live on different time grids")
        f = None
        if self.func is not None and other.func is not None:
            f = lambda t, a=self.func, b=other.func: a(t) + b(t)  # noqa: E731
        lo = min(self.support[0], other.support[0])
        hi = max(self.support[1], other.support[1])
        return BoundaryControl(self.grid, self.values + other.values, (lo, hi), f)


def smoothed_delta(center: float, width: float, grid: TimeGrid, amplitude: complex = 1.0) -> BoundaryControl:
    """Nonnegative C-infinity bump on [center-width, center+width] with unit discrete integral.

    The discrete integral is the trapezoid sum on ``grid``; the endpoints of
    the support carry zero weight so it equals ``sum(values) * dt``.
    """
    if width < 4 * grid.dt * (1 - 1e-9):
        raise GridError(f"bump width {width} under-resolved (needs >= 4*dt = {4 * grid.dt})")
    if center - width <= 0 or center + width >= grid.t_max:
        raise GridError("bump support must lie inside (0, T)")
    raw = bump((grid.t - center) / width)
    norm = np.sum(grid.weights() * raw)
    scale = amplitude / norm

    def func(t):
        return scale * bump((np.asarray(t, float) - center) / width)

    return BoundaryControl(grid, scale * raw, (center - width, center + width), func)


def smooth_pulse(center: float, width: float, grid: TimeGrid) -> BoundaryControl:
    """Unit-height bump (not normalized); convenient for convergence studies."""
    def func(t):
        return bump((np.asarray(t, float) - center) / width) * np.e
    return BoundaryControl.from_function(func, grid, (center - width, center + width))


@dataclass(frozen=True)
class HamiltonianField:
    """2x2 real symmetric nonnegative matrix function on a SpaceGrid.

    representation is ``"sampled"`` (values at grid points, optionally with an
    exact evaluator ``func``) or ``"piecewise"`` (constant on the intervals of
    ``partition``, one matrix per interval in ``blocks``).  ``positive_delta``
    is the certified lower eigenvalue bound for the strictly positive class,
    ``None`` otherwise.
    """

    grid: SpaceGrid
    values: np.ndarray
    representation: str = "sampled"
    rank_one: bool = False
    positive_delta: Optional[float] = None
    partition: Optional[np.ndarray] = None
    blocks: Optional[np.ndarray] = None
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points, 2, 2):
            raise GridError(f"Hamiltonian samples have shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise HamiltonianError("non-finite Hamiltonian samples")
        v = 0.5 * (v + np.swapaxes(v, 1, 2))
        lam_min = np.linalg.eigvalsh(v)[:, 0]
        if lam_min.min() < -1e-12 * max(1.0, np.abs(v).max()):
            k = int(np.argmin(lam_min))
            raise HamiltonianError(f"H is not nonnegative at x={self.grid.x[k]:.6g} (min eig {lam_min[k]:.3e})")
        if self.rank_one:
            idem = v @ v - v
            tr = np.trace(v, axis1=1, axis2=2)
            scale = np.maximum(tr, 1.0)[:, None, None]
            # idempotent only when the trace is normalized; otherwise det must vanish
            if self.representation == "piecewise" and np.abs(idem).max() > 1e-12:
                raise HamiltonianError("piecewise rank-one H must satisfy H^2 = H")
            if np.abs(np.linalg.det(v / scale)).max() > 1e-8:
                raise HamiltonianError("rank-one H has nonzero determinant")
        if self.positive_delta is not None:
            if lam_min.min() < self.positive_delta * (1 - 1e-12):
                raise HamiltonianError("H violates its strict positivity bound")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def det(self) -> np.ndarray:
        v = self.values
        return v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] ** 2

    @property
    def trace(self) -> np.ndarray:
        return self.values[:, 0, 0] + self.values[:, 1, 1]

    @property
    def strictly_positive(self) -> bool:
        return self.positive_delta is not None and self.positive_delta > 0

    @cached_property
    def _spline(self):
        return interpolate.CubicSpline(self.grid.x, self.values, axis=0)

    def at(self, x) -> np.ndarray:
        """Evaluate H at arbitrary points in [0, x_max]; shape ``x.shape + (2, 2)``."""
        x = np.asarray(x, dtype=float)
        if self.representation == "piecewise":
            idx = np.searchsorted(self.partition, x, side="right") - 1
            idx = np.clip(idx, 0, len(self.blocks) - 1)
            return self.blocks[idx]
        if self.func is not None:
            return np.asarray(self.func(x), dtype=float)
        return self._spline(x)

    def fingerprint(self) -> str:
        import hashlib
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


def constant_hamiltonian(matrix, grid: SpaceGrid) -> HamiltonianField:
    m = np.asarray(matrix, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))
    delta = float(lam[0]) if lam[0] > 0 else None

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(m, x.shape + (2, 2)).copy()

    return HamiltonianField(grid, np.broadcast_to(m, (grid.n_points, 2, 2)),
                            positive_delta=delta, func=func)


def hamiltonian_from_function(func: Callable, grid: SpaceGrid) -> HamiltonianField:
    """Sampled field from an exact evaluator ``x -> (..., 2, 2)``; the positivity bound is measured."""
    vals = np.asarray(func(grid.x), dtype=float)
    sym = 0.5 * (vals + np.swapaxes(vals, 1, 2))
    lam = np.linalg.eigvalsh(sym)[:, 0].min()
    return HamiltonianField(grid, vals, positive_delta=float(lam) if lam > 0 else None, func=func)


@dataclass(frozen=True)
class ResponseMatrix:
    """Discretized response operator acting on control samples.

    ``matrix[i, j]`` is the response at ``grid.t[i]`` to the j-th basis
    control; ``basis[:, j]`` holds that control's samples, so identity-type
    relations can be expressed as ``basis`` itself.
    """

    grid: TimeGrid
    matrix: np.ndarray
    basis: np.ndarray
    centers: np.ndarray
    width: float
    weights: np.ndarray = field(default=None, compare=False)

    def causality_violation(self) -> float:
        """Largest entry strictly before the support of its basis control."""
        t = self.grid.t[:, None]
        before = t < (self.centers[None, :] - self.width - 1e-12)
        if not before.any():
            return 0.0
        return float(np.abs(self.matrix[before]).max())


class IntegrationOverflow(ArithmeticError):
    def __init__(self, x: float, message: str = "solution overflow"):
        super().__init__(f"{message} at x={x:.6g}")
        self.x = x


def rk4_linear(a_nodes: np.ndarray, a_half: np.ndarray, y0: np.ndarray, h: float,
               x0: float = 0.0, guard: float = 1e150, store: bool = True) -> np.ndarray:
    """Classical RK4 for the linear system Y' = A(x) Y on a uniform grid.

    ``a_nodes`` has shape ``(n, ..., k, k)`` (coefficient at the grid nodes),
    ``a_half`` shape ``(n-1, ..., k, k)`` (at the midpoints).  ``y0`` is
    ``(..., k)`` or ``(..., k, m)``.  Returns the solution at every node, or
    only at the last one when ``store`` is false.
    """
    vec = y0.ndim == a_nodes.ndim - 2
    y = np.asarray(y0, dtype=np.result_type(a_nodes, y0))
    if vec:
        y = y[..., None]
    n = a_nodes.shape[0]
    out = np.empty((n if store else 1,) + y.shape, dtype=y.dtype)
    out[0] = y
    for i in range(n - 1):
        a0, am, a1 = a_nodes[i], a_half[i], a_nodes[i + 1]
        k1 = a0 @ y
        k2 = am @ (y + 0.5 * h * k1)
        k3 = am @ (y + 0.5 * h * k2)
        k4 = a1 @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i % 32 == 31 or i == n - 2) and not np.abs(y).max() <= guard:
            raise IntegrationOverflow(x0 + (i + 1) * h)
        if store:
            out[i + 1] = y
    if not store:
        out[0] = y
        out = out[0]
    return out[..., 0] if vec else out


def sample_function(f, grid: SpaceGrid, name: str = "coefficient"):
    """Return (samples on grid, evaluator) for a callable, scalar or sample array."""
    if callable(f):
        vals = np.asarray(f(grid.x), dtype=float)
        vals = np.broadcast_to(vals, grid.x.shape).copy()
        ev = lambda x: np.broadcast_to(np.asarray(f(np.asarray(x, float)), float), np.shape(x))  # noqa: E731
    elif np.ndim(f) == 0:
        c = float(f)
        vals = np.full(grid.n_points, c)
        ev = lambda x: np.full(np.shape(x), c)  # noqa: E731
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (grid.n_points,):
            raise GridError(f"{name} samples do not match the grid ({vals.shape})")
        ev = interpolate.CubicSpline(grid.x, vals)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"non-finite {name} samples")
    return vals, ev
