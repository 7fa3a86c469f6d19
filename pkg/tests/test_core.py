import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canonsys.core import (BoundaryControl, GridError, HamiltonianError, HamiltonianField, SpaceGrid,
                           TimeGrid, bump, constant_hamiltonian, cumulative_integral, derivative4,
                           lagrange_resample, quad_inner, rk4_linear, smooth_pulse, smoothed_delta)


def test_space_grid_from_step_rounds_up_to_whole_cells():
    g = SpaceGrid.from_step(1.0, 0.3)
    assert g.n_points == 5
    assert g.h == pytest.approx(0.3)
    assert g.x_max == pytest.approx(1.2)


@pytest.mark.parametrize("args", [(1.0, 2), (0.0, 10), (-1.0, 10)])
def test_space_grid_rejects_degenerate(args):
    with pytest.raises(GridError):
        SpaceGrid(*args)


def test_time_grid_rejects_empty():
    with pytest.raises(GridError):
        TimeGrid(1.0, 0)


def test_grid_arrays_are_read_only():
    g = SpaceGrid(1.0, 11)
    with pytest.raises(ValueError):
        g.x[0] = 5.0


def test_trapezoid_weights_integrate_linear_exactly():
    g = SpaceGrid(2.0, 21)
    assert np.sum(g.weights() * (3 * g.x + 1)) == pytest.approx(8.0)


@pytest.mark.parametrize("rule", ["trapezoid", "simpson"])
def test_cumulative_integral_of_cosine(rule):
    x = np.linspace(0, np.pi, 401)
    out = cumulative_integral(np.cos(x), x[1] - x[0], rule)
    tol = 1e-4 if rule == "trapezoid" else 1e-8
    assert np.abs(out - np.sin(x)).max() < tol


def test_cumulative_integral_unknown_rule():
    with pytest.raises(ValueError, match="unknown"):
        cumulative_integral(np.ones(4), 0.1, "midpoint")


def test_derivative4_is_fourth_order():
    errs = []
    for n in (50, 100):
        x = np.linspace(0, 1, n + 1)
        d = derivative4(np.sin(3 * x), x[1] - x[0])
        errs.append(np.abs(d - 3 * np.cos(3 * x)).max())
    assert np.log2(errs[0] / errs[1]) > 3.7


def test_derivative4_needs_five_nodes():
    with pytest.raises(GridError):
        derivative4(np.ones(4), 0.1)


def test_quad_inner_is_conjugate_linear_in_first_slot():
    g = SpaceGrid(1.0, 41)
    rng = np.random.default_rng(4)
    a = rng.normal(size=(41, 2)) + 1j * rng.normal(size=(41, 2))
    b = rng.normal(size=(41, 2)) + 1j * rng.normal(size=(41, 2))
    alpha = 0.3 - 2j
    assert quad_inner(alpha * a, b, g) == pytest.approx(np.conj(alpha) * quad_inner(a, b, g))
    assert quad_inner(a, b, g) == pytest.approx(np.conj(quad_inner(b, a, g)))


def test_quad_inner_shape_mismatch():
    g = SpaceGrid(1.0, 11)
    with pytest.raises(GridError):
        quad_inner(np.ones((11, 2)), np.ones((10, 2)), g)


def test_bump_support_and_peak():
    s = np.array([-1.0, -0.5, 0.0, 0.999, 1.0, 2.0])
    b = bump(s)
    assert b[0] == b[-1] == b[-2] == 0.0
    assert b[2] == pytest.approx(np.exp(-1))


def test_smoothed_delta_has_unit_discrete_mass():
    tg = TimeGrid(2.0, 400)
    f = smoothed_delta(1.0, 0.1, tg, amplitude=2.0)
    assert np.sum(tg.weights() * f.values) == pytest.approx(2.0, rel=1e-12)
    assert f.support == (0.9, 1.1)


def test_smoothed_delta_too_narrow():
    tg = TimeGrid(1.0, 100)
    with pytest.raises(GridError, match="under-resolved"):
        smoothed_delta(0.5, 0.02, tg)


def test_smoothed_delta_support_must_fit():
    with pytest.raises(GridError):
        smoothed_delta(0.05, 0.1, TimeGrid(1.0, 100))


def test_control_algebra():
    tg = TimeGrid(1.0, 200)
    f = smooth_pulse(0.4, 0.2, tg)
    g = smooth_pulse(0.6, 0.2, tg).scaled(1j)
    s = f + g
    assert np.allclose(s.values, f.values + g.values)
    assert np.allclose(g.values.imag, smooth_pulse(0.6, 0.2, tg).values.real)
    assert s.support == pytest.approx((0.2, 0.8))
    assert np.allclose(s.conj().values, np.conj(s.values))
    assert np.allclose(s.at(tg.t[10:20]), s.values[10:20])


def test_control_rejects_wrong_length_and_nan():
    tg = TimeGrid(1.0, 10)
    with pytest.raises(GridError):
        BoundaryControl(tg, np.zeros(5), (0, 0))
    bad = np.zeros(11)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        BoundaryControl(tg, bad, (0, 0))


def test_lagrange_resample_is_exact_for_cubics_and_local():
    step = 0.1
    s = np.arange(30) * step
    v = 1 + s - 2 * s**2 + 0.5 * s**3
    q = np.array([0.33, 1.27, 2.01])
    assert np.allclose(lagrange_resample(step, v, q), 1 + q - 2 * q**2 + 0.5 * q**3)
    w = np.zeros(30)
    w[:5] = 1.0
    # three nodes past the last nonzero sample: exactly zero
    assert lagrange_resample(step, w, np.array([0.75]))[0] == 0.0


class TestHamiltonianField:
    grid = SpaceGrid(1.0, 11)

    def test_negative_matrix_rejected(self):
        with pytest.raises(HamiltonianError, match="nonnegative"):
            constant_hamiltonian([[1.0, 2.0], [2.0, 1.0]], self.grid)

    def test_det_trace_and_positivity(self):
        H = constant_hamiltonian([[2.0, 0.5], [0.5, 1.0]], self.grid)
        assert np.allclose(H.det, 1.75)
        assert np.allclose(H.trace, 3.0)
        assert H.strictly_positive
        assert H.at(np.array([0.25, 0.5])).shape == (2, 2, 2)

    def test_rank_one_flag_checks_determinant(self):
        vals = np.broadcast_to(np.eye(2), (11, 2, 2))
        with pytest.raises(HamiltonianError, match="rank-one"):
            HamiltonianField(self.grid, vals, rank_one=True)

    def test_values_are_symmetrized(self):
        vals = np.broadcast_to(np.array([[1.0, 0.2], [0.0, 1.0]]), (11, 2, 2))
        H = HamiltonianField(self.grid, vals)
        assert H.values[0, 0, 1] == H.values[0, 1, 0] == pytest.approx(0.1)

    def test_fingerprint_tracks_values(self):
        a = constant_hamiltonian(np.eye(2), self.grid)
        b = constant_hamiltonian(np.eye(2) * 1.0000001, self.grid)
        assert a.fingerprint() == constant_hamiltonian(np.eye(2), self.grid).fingerprint()
        assert a.fingerprint() != b.fingerprint()


def test_rk4_linear_matches_rotation():
    n = 201
    h = 2 * np.pi / (n - 1)
    A = np.broadcast_to(np.array([[0.0, 1.0], [-1.0, 0.0]]), (n, 2, 2))
    y = rk4_linear(A, A[:-1], np.array([1.0, 0.0]), h)
    x = np.linspace(0, 2 * np.pi, n)
    assert np.abs(y[:, 0] - np.cos(x)).max() < 1e-7
    last = rk4_linear(A, A[:-1], np.array([1.0, 0.0]), h, store=False)
    assert np.allclose(last, y[-1])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(-3, 3))
def test_smoothed_delta_scales_linearly(width, amp):
    tg = TimeGrid(1.0, 400)
    a = smoothed_delta(0.5, width, tg, amplitude=amp)
    b = smoothed_delta(0.5, width, tg)
    assert np.allclose(a.values, amp * b.values)
