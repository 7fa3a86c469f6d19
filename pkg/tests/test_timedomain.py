import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from canonsys.builders import DiracReduction, build_H_from_potential, build_jacobi_from_partition
from canonsys.core import (BoundaryControl, CFLError, GridError, SpaceGrid, TimeGrid, constant_hamiltonian,
                           smooth_pulse, smoothed_delta)
from canonsys.timedomain import (canonical_fields_from_wave, canonical_residual,
                                 compare_responses, convergence_slopes, dirac_pair, jacobi_fields_from_v,
                                 jacobi_response_derived, jacobi_response_stated, response_matrix,
                                 rotation_pair, solve_canonical_i, solve_dirac, solve_dirac_type,
                                 solve_jacobi_continuous, solve_jacobi_discrete, solve_wave_density,
                                 solve_wave_potential, wave_potential_pair)
from canonsys.timedomain.equivalence import grids_for


def pulse_derivative(f, t, d=1e-6):
    return (f.func(t + d) - f.func(t - d)) / (2 * d)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def meshes(res):
    return np.meshgrid(res.time.t, res.space.x, indexing="ij")


# ---------------------------------------------------------------- scalar wave equations


def test_free_wave_is_transport_and_response_is_minus_derivative():
    errs = []
    for h in (1 / 100, 1 / 200):
        space, time = grids_for(h, 2.0, 1.0)
        f = smooth_pulse(0.6, 0.5, time)
        u = solve_wave_potential(0.0, f, space, time)
        T, X = meshes(u)
        assert np.abs(u.field - f.at(T - X).real).max() < 1e-2
        errs.append(rel(u.response, -pulse_derivative(f, time.t)))
    assert np.log2(errs[0] / errs[1]) > 1.9


def test_wave_is_zero_before_arrival_at_unit_courant_number():
    space, time = SpaceGrid.from_step(2.2, 1 / 200), TimeGrid(2.0, 400)
    u = solve_wave_potential(lambda x: 1 + np.sin(x), smooth_pulse(0.3, 0.25, time), space, time)
    T, X = meshes(u)
    assert np.abs(u.field[T < X - 1e-12]).max() < 1e-10


def test_wave_self_convergence_with_unit_potential():
    traces = []
    for n in (100, 200, 400):
        space, time = SpaceGrid.from_step(2.5, 1 / n), TimeGrid(2.0, 2 * n)
        u = solve_wave_potential(1.0, smooth_pulse(0.6, 0.5, time), space, time, store_field=False)
        traces.append(u.response[:: n // 100])
    order = np.log2(np.linalg.norm(traces[0] - traces[1]) / np.linalg.norm(traces[1] - traces[2]))
    assert order >= 1.9


def test_wave_rejects_large_time_step():
    with pytest.raises(CFLError):
        solve_wave_potential(0.0, smooth_pulse(0.5, 0.2, TimeGrid(1.0, 50)), SpaceGrid.from_step(2, 0.01),
                             TimeGrid(1.0, 50))


def test_wave_rejects_short_domain():
    time = TimeGrid(2.0, 400)
    with pytest.raises(GridError, match="too short"):
        solve_wave_potential(0.0, smooth_pulse(0.5, 0.2, time), SpaceGrid.from_step(1.5, 0.005), time)


def test_density_one_matches_free_wave():
    space, time = grids_for(1 / 200, 2.0, 1.0)
    f = smooth_pulse(0.6, 0.5, time)
    u = solve_wave_density(1.0, f, space, time)
    assert rel(u.response, -pulse_derivative(f, time.t)) < 1e-3


def test_density_four_travels_at_half_speed():
    space, time = SpaceGrid.from_step(2.2, 1 / 200), TimeGrid(2.0, 200)
    u = solve_wave_density(4.0, smooth_pulse(0.3, 0.25, time), space, time)
    T, X = meshes(u)
    assert np.abs(u.field[X > T / 2 + space.h]).max() == 0.0
    assert np.abs(u.field).max() > 0.5


def test_zero_control_gives_zero_field():
    space, time = grids_for(1 / 50, 1.0, 1.0)
    u = solve_wave_density(lambda x: 1 + x, BoundaryControl.zero(time), space, time)
    assert not np.any(u.field)


# ---------------------------------------------------------------- first-order systems


class TestDirac:
    space, time = grids_for(1 / 200, 2.0, 1.0)
    f = smooth_pulse(0.6, 0.4, time)

    def test_free_response(self):
        r = solve_dirac(0.0, 0.0, self.f, self.space, self.time)
        assert np.abs(r.response - 1j * self.f.values).max() < 1e-6
        T, X = meshes(r)
        np.testing.assert_allclose(r.field[..., 0], self.f.at(T - X), atol=1e-4)

    def test_unit_speed_support(self):
        r = solve_dirac(lambda x: np.sin(3 * x), 0.4, self.f, self.space, self.time)
        T, X = meshes(r)
        assert np.abs(r.field[X > T - 0.05 + 1e-9]).max() < 1e-8

    def test_energy_is_conserved_after_control_stops(self):
        r = solve_dirac(lambda x: 0.3 * np.sin(x), lambda x: 0.2 * np.cos(2 * x), self.f, self.space, self.time)
        w = self.space.weights()[:, None]
        energy = np.array([np.sum(w * np.abs(F) ** 2) for F in r.field])
        after = self.time.t > 1.0 + 1e-9
        assert np.ptp(energy[after]) < 1e-6


@pytest.mark.parametrize("scale,speed", [(0.5, 2.0), (1.0, 1.0)])
def test_canonical_scalar_hamiltonian(scale, speed):
    space, time = grids_for(1 / 200, 2.0, speed)
    f = smooth_pulse(0.6, 0.4, time)
    H = constant_hamiltonian(scale * np.eye(2), space)
    for route in ("diagonal", "direct"):
        r = solve_canonical_i(H, f, space, time, route=route)
        assert np.abs(r.response + 1j * f.values).max() < 1e-8
        T, X = meshes(r)
        assert np.abs(r.field[X / speed > T - 0.2 + 1e-9]).max() < 1e-8


def test_canonical_needs_strict_positivity():
    space, time = grids_for(1 / 50, 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_canonical_i(build_H_from_potential(0.0, space), smooth_pulse(0.5, 0.2, time), space, time)


def test_dirac_type_free_transport():
    space, time = grids_for(1 / 200, 2.0, 2.0)
    red = DiracReduction.from_coefficients(0.5, 0.5, 0.0, space)
    f = smooth_pulse(0.6, 0.4, time)
    V = solve_dirac_type(red, f, space, time).field
    T, X = np.meshgrid(time.t, space.x, indexing="ij")
    np.testing.assert_allclose(V[..., 0], f.at(T - X / 2), atol=1e-5)
    ratio = V[..., 1][np.abs(V[..., 0]) > 0.1] / V[..., 0][np.abs(V[..., 0]) > 0.1]
    assert np.ptp(ratio) < 1e-8
    assert abs(abs(ratio[0]) - 1) < 1e-8


def test_forward_and_auxiliary_are_conjugate():
    space, time = grids_for(1 / 200, 1.5, 1 / 0.4)
    red = DiracReduction.from_coefficients(lambda x: 0.6 + 0.1 * np.sin(x), lambda x: 0.45 + 0.05 * np.cos(2 * x),
                                           lambda x: 0.3 * np.sin(3 * x), space)
    space, time = grids_for(1 / 200, 1.5, 1 / np.sqrt((red.d1 * red.d2).min()))
    red = DiracReduction.from_coefficients(lambda x: 0.6 + 0.1 * np.sin(x), lambda x: 0.45 + 0.05 * np.cos(2 * x),
                                           lambda x: 0.3 * np.sin(3 * x), space)
    base = smooth_pulse(0.5, 0.4, time)
    f = BoundaryControl.from_function(lambda t: base.func(t) * np.exp(1j * t), time)
    V = solve_dirac_type(red, f, space, time, "forward", store_field=False).final
    U = solve_dirac_type(red, f.conj(), space, time, "auxiliary", store_field=False).final
    assert np.abs(V - np.conj(U)).max() < 1e-7


def test_zero_control_first_order():
    space, time = grids_for(1 / 50, 1.0, 1.0)
    red = DiracReduction.from_coefficients(1.0, 1.0, 0.3, space)
    assert not np.any(solve_dirac_type(red, BoundaryControl.zero(time), space, time).field)


# ---------------------------------------------------------------- Jacobi dynamics


QUARTER = build_jacobi_from_partition(np.ones(40), angles=np.arange(40) * np.pi / 2)


def test_continuous_two_site_is_an_integral():
    time = TimeGrid(2.0, 200)
    h = smooth_pulse(0.8, 0.5, time)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = solve_jacobi_continuous(QUARTER, h, 2)
    exact = np.array([-1j * quad(h.func, 0, t)[0] for t in time.t])
    assert np.abs(v.response - exact).max() < 1e-6


def test_truncation_tail_warns():
    time = TimeGrid(2.0, 200)
    with pytest.warns(UserWarning, match="tail"):
        solve_jacobi_continuous(QUARTER, smooth_pulse(0.8, 0.5, time), 2)


def test_continuous_energy_is_conserved_after_control_stops():
    sys = build_jacobi_from_partition(np.ones(40), angles=np.arange(40) * np.pi / 3)
    time = TimeGrid(2.0, 200)
    v = solve_jacobi_continuous(sys, smooth_pulse(0.8, 0.5, time), 30)
    energy = np.sum(np.abs(v.field[:, 1:]) ** 2, axis=1)
    assert np.ptp(energy[time.t > 1.3 + 1e-9]) < 1e-6
    assert not np.any(solve_jacobi_continuous(sys, BoundaryControl.zero(time), 30).field)


def test_discrete_hand_recursion():
    v = solve_jacobi_discrete(QUARTER, np.r_[0, 0, 1, 0, 0, 0, 0, 0], 2)
    np.testing.assert_array_equal(v.response.real, [0, 0, 1, -1, 1, -1, 1, -1])


def test_discrete_difference_variant():
    v = solve_jacobi_discrete(QUARTER, np.r_[0, 0, 1, 0, 0], 2, discrete_dt="difference")
    # v_{2,t} - v_{2,t-1} = h_t  ->  partial sums of h
    np.testing.assert_array_equal(v.response.real, [0, 0, 1, 1, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_discrete_linearity(seed, alpha):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=20) + 1j * rng.normal(size=20)
    # N = 13 keeps 1 out of the spectrum of the interior operator (2 cos(k pi / 13))
    a = solve_jacobi_discrete(QUARTER, alpha * h, 13).response
    b = solve_jacobi_discrete(QUARTER, h, 13).response
    assert np.allclose(a, alpha * b, rtol=1e-9, atol=1e-9 * np.abs(b).max())
    assert not np.any(solve_jacobi_discrete(QUARTER, np.zeros(20), 13).response)


def test_discrete_resonant_truncation_is_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        solve_jacobi_discrete(QUARTER, np.ones(20), 12)


# ---------------------------------------------------------------- field transformations


def test_wave_to_canonical_free_closed_form():
    # unit Courant number removes leapfrog dispersion; what is left is the x-derivative stencil
    space, time = SpaceGrid.from_step(2.2, 1 / 400), TimeGrid(2.0, 800)
    f = smooth_pulse(0.6, 0.5, time)
    u = solve_wave_potential(0.0, f, space, time)
    H = build_H_from_potential(0.0, space)
    C = canonical_fields_from_wave(u, H)
    T, X = meshes(u)
    fp = pulse_derivative(f, T - X).real
    assert np.abs(C[..., 1] + fp).max() < 1e-3
    assert np.abs(C[..., 0] - (f.at(T - X).real + X * fp)).max() < 1e-3
    np.testing.assert_allclose(C[:, 0, 0], f.values.real, atol=1e-12)
    np.testing.assert_allclose(C[:, 0, 1], u.response, atol=1e-12)


def test_wave_to_canonical_zero():
    space, time = grids_for(1 / 50, 1.0, 1.0)
    u = solve_wave_potential(0.0, BoundaryControl.zero(time), space, time)
    assert not np.any(canonical_fields_from_wave(u, build_H_from_potential(0.0, space)))


def test_canonical_trace_reproduces_wave_response():
    r = wave_potential_pair(1.0, 1 / 400, 2.0)
    assert r.error < 1e-3


class TestJacobiFields:
    sys = build_jacobi_from_partition(np.full(30, 0.8), angles=np.cumsum(np.r_[0, np.full(29, 1.1)]))

    def test_zero(self):
        v = solve_jacobi_discrete(self.sys, np.zeros(10), 20)
        F = jacobi_fields_from_v(self.sys, v, "discrete")
        assert not np.any(F.boundary())

    @pytest.mark.parametrize("dynamics", ["continuous", "discrete"])
    def test_continuity_at_breakpoints(self, dynamics):
        if dynamics == "continuous":
            time = TimeGrid(3.0, 300)
            v = solve_jacobi_continuous(self.sys, smooth_pulse(1.0, 0.8, time), 25)
        else:
            # the implicit recursion amplifies like 1/(1 - a); keep the chain short
            h = np.r_[0, 0, np.random.default_rng(2).normal(size=8)]
            v = solve_jacobi_discrete(self.sys, h, 5)
        F = jacobi_fields_from_v(self.sys, v, dynamics)
        assert F.continuity_defect() < 1e-12 * max(1.0, np.abs(v.field).max())

    def test_boundary_value_matches_derived_identity(self):
        rng = np.random.default_rng(8)
        h = np.r_[0, 0, rng.normal(size=8) + 1j * rng.normal(size=8)]
        v = solve_jacobi_discrete(self.sys, h, 5)
        F = jacobi_fields_from_v(self.sys, v, "discrete")
        xi0 = F.xi(1, [0.0])[2:, 0]
        pred = jacobi_response_derived(self.sys, v.field[:, 1], h, F.u[:, 0])[2:]
        assert np.abs(pred - xi0).max() < 1e-12 * np.abs(xi0).max()
        np.testing.assert_allclose(F.boundary()[2:, 1], -xi0, atol=1e-12)

    @pytest.mark.xfail(strict=True, reason="displayed boundary relation assumes q1 = 1/l1 and u1 = i h")
    def test_boundary_value_matches_displayed_relation(self):
        sys = build_jacobi_from_partition(np.ones(30), angles=np.arange(30) * np.pi / 2)
        h = np.r_[0, 0, np.random.default_rng(3).normal(size=8)]
        v = solve_jacobi_discrete(sys, h, 5)
        F = jacobi_fields_from_v(sys, v, "discrete")
        pred = jacobi_response_stated(sys, v.field[:, 1], h)
        assert np.abs(pred[2:] - F.xi(1, [0.0])[2:, 0]).max() < 1e-9


# ---------------------------------------------------------------- residuals


def _free_canonical_field(n):
    g = lambda s: np.exp(-20 * (s - 0.8) ** 2)  # noqa: E731
    gp = lambda s: -40 * (s - 0.8) * g(s)  # noqa: E731
    space, time = SpaceGrid.from_step(2.0, 1 / n), TimeGrid(2.0, 2 * n)
    X, T = np.meshgrid(space.x, time.t)
    return space, time, np.stack([g(T - X) + X * gp(T - X), -gp(T - X)], -1)


def test_residual_of_exact_field_is_second_order():
    reports = []
    for n in (50, 100, 200):
        space, time, C = _free_canonical_field(n)
        reports.append(canonical_residual(build_H_from_potential(0.0, space), C, time))
    assert convergence_slopes(reports).min() >= 1.9
    assert not canonical_residual(build_H_from_potential(0.0, space), 0 * C, time).max


def test_residual_flags_mismatched_hamiltonian():
    space, time, C = _free_canonical_field(200)
    good = canonical_residual(build_H_from_potential(0.0, space), C, time)
    bad = canonical_residual(build_H_from_potential(1.0, space), C, time)
    assert bad.l2 > 1e3 * good.l2
    assert bad.max > 0.1


def test_residual_rejects_wrong_shape():
    space, time, C = _free_canonical_field(50)
    with pytest.raises(ValueError):
        canonical_residual(build_H_from_potential(0.0, space), C[:-1], time)


# ---------------------------------------------------------------- response operators


def test_free_wave_response_matrix_matches_stencil_oracle():
    # unit Courant number: leapfrog transports grid functions exactly, so only the stencil remains
    space, time = SpaceGrid.from_step(1.2, 1 / 200), TimeGrid(1.0, 200)
    R = response_matrix(lambda f: solve_wave_potential(0.0, f, space, time, store_field=False).response,
                        time, n_basis=10)
    h = space.h
    stencil = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    for j, c in enumerate(R.centers):
        f = smoothed_delta(c, R.width, time)
        exact = sum(w * f.at(time.t - k * h) for k, w in enumerate(stencil))
        assert np.abs(R.matrix[:, j] - exact).max() < 1e-10 * np.abs(exact).max()
    assert R.causality_violation() < 1e-8


def test_free_dirac_response_matrix_is_i_times_basis():
    space, time = grids_for(1 / 200, 1.0, 1.0)
    R = response_matrix(lambda f: solve_dirac(0.0, 0.0, f, space, time, store_field=False).response,
                        time, n_basis=8)
    assert compare_responses(R, R).operator == 0.0
    d = compare_responses(R, R, ("affine", 0.0, 1j))
    assert d.operator < 1e-8


def test_acausal_solver_is_caught():
    time = TimeGrid(1.0, 200)
    with pytest.raises(ArithmeticError, match="causality"):
        response_matrix(lambda f: np.ones(time.n_points), time, n_basis=4)


def test_compare_traces_needs_control_for_affine():
    with pytest.raises(ValueError):
        compare_responses(np.ones(5), np.ones(5), ("affine", 1.0, 2.0))


# ---------------------------------------------------------------- paired systems


def test_dirac_matches_canonical_only_with_auxiliary_sign():
    p, q = (lambda x: 0.5 * np.sin(2 * x)), (lambda x: 0.3 * np.cos(x))
    good = dirac_pair(p, q, 1 / 200, 2.0)
    bad = dirac_pair(p, q, 1 / 200, 2.0, sign="forward")
    assert good.error < 1e-3
    assert bad.error > 0.5


def test_rotated_boundary_relation():
    def H_func(x):
        a, b = 1 + 0.3 * np.sin(x), 0.2 + 0.1 * x
        return np.stack([np.stack([a, b], -1), np.stack([b, 1.5 + 0 * x], -1)], -2)

    r = rotation_pair(H_func, 1 / 200, 2.0)
    assert r.error < 1e-6
    assert r.meta["response_error"] < 1e-3
    # the variant with -sin(phi0) f does not hold
    assert r.meta["minus_sine_error"] > 0.1


def test_mismatched_potential_breaks_wave_equivalence():
    r = wave_potential_pair(1.0, 1 / 200, 2.0, q_canonical=0.0)
    assert r.error > 0.1
