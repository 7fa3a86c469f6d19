import numpy as np
import pytest

from canonsys.bcmethod import (bt_element, bt_inner, connecting_operator, control_operator, controllability_check,
                               energy_inner, reachability_defect, singular_profile, time_grid_for,
                               wavefront_amplitude)
from canonsys.builders import DiracReduction, solve_amplitude_A, transport_amplitude
from canonsys.core import BoundaryControl, SpaceGrid, smooth_pulse, smoothed_delta
from canonsys.timedomain import solve_dirac_type


def smooth_reduction(h=1 / 100):
    g = SpaceGrid.from_step(2.5, h)
    return DiracReduction.from_coefficients(lambda x: 0.6 + 0.1 * np.sin(x), lambda x: 0.45 + 0.05 * np.cos(2 * x),
                                            lambda x: 0.3 * np.sin(3 * x), g)


@pytest.fixture(scope="module")
def free():
    red = DiracReduction.from_coefficients(0.5, 0.5, 0.0, SpaceGrid.from_step(2.2, 1 / 100))
    W = control_operator(red, 1.0, "extended")
    return red, W, connecting_operator(W)


@pytest.fixture(scope="module")
def varying():
    red = smooth_reduction()
    W = control_operator(red, 1.0, "extended")
    return red, W, connecting_operator(W)


def test_free_connecting_operator_is_twice_identity(free):
    _, W, C = free
    assert C.distance_to(2.0) < 1e-2
    assert C.hermitian_defect < 1e-10
    assert W.matrix.shape[-1] == 2 * W.basis.shape[1]


def test_basis_is_orthonormal(free):
    _, W, _ = free
    G = W.basis.T @ (W.time.weights()[:, None] * W.basis)
    np.testing.assert_allclose(G, np.eye(G.shape[0]), atol=1e-12)


def test_connecting_operator_is_psd_for_smooth_coefficients(varying):
    _, _, C = varying
    assert C.psd
    assert C.eigenvalues.min() > 0


def test_extended_operator_is_controllable(free, varying):
    for _, W, _ in (free, varying):
        r = controllability_check(W)
        assert r.passed and r.ratio > 0.5


def test_single_control_misses_half(free, varying):
    for red, W, _ in (free, varying):
        Ws = control_operator(red, 1.0, "single")
        rep = reachability_defect(Ws, W)
        assert rep.defect == pytest.approx(0.5)


def test_mode_checks(free):
    red, W, _ = free
    with pytest.raises(ValueError):
        reachability_defect(W)
    with pytest.raises(ValueError):
        control_operator(red, 1.0, "double")
    Ws = control_operator(red, 1.0, "single")
    with pytest.raises(ValueError):
        controllability_check(Ws)
    with pytest.raises(ValueError):
        connecting_operator(Ws)


def test_singular_profile_matches_eigenvalues(free):
    _, W, C = free
    p = singular_profile(W)
    np.testing.assert_allclose(np.sort(p.values**2), np.sort(C.eigenvalues), rtol=1e-10)


def test_energy_is_the_connecting_form(varying):
    red, W, C = varying
    rng = np.random.default_rng(5)
    m = W.basis.shape[1]
    k1, k2 = (BoundaryControl(W.time, W.basis @ (rng.normal(size=m) + 1j * rng.normal(size=m)), (0.0, W.T))
              for _ in range(2))
    lam = np.linspace(-5, 5, 11)
    a = bt_element(red, (k1, k2), lam, C)
    assert a.projection_residual < 1e-10
    direct = energy_inner(red, a.state, a.state)
    assert bt_inner(a, a) == pytest.approx(direct, rel=1e-9)
    assert a.K.shape == lam.shape


def test_smooth_control_projection_is_reported(varying):
    red, W, C = varying
    k = smooth_pulse(0.5, 0.3, W.time)
    assert 0 < bt_element(red, (k, k), [0.0], C).projection_residual < 0.5


def test_bt_elements_need_matching_backing(free, varying):
    red, W, C = free
    k = smooth_pulse(0.5, 0.2, W.time)
    a = bt_element(red, (k, k), [0.0], C)
    b = bt_element(varying[0], (smooth_pulse(0.5, 0.2, varying[1].time),) * 2, [0.0], varying[2])
    with pytest.raises(ValueError):
        bt_inner(a, b)


def _front(d1, d2, psi=0.0, h=1 / 200):
    g = SpaceGrid.from_step(4.5, h)
    red = DiracReduction.from_coefficients(d1, d2, psi, g)
    tg = time_grid_for(red, 2.0)
    f = smoothed_delta(0.1, 0.05, tg)
    return red, solve_dirac_type(red, f, g, tg, "forward")


@pytest.mark.parametrize("d1,d2", [(lambda x: 1 + x, 0.5), (lambda x: 1 + x, lambda x: 1 / (1 + x))])
def test_transport_amplitude_tracks_front(d1, d2):
    red, res = _front(d1, d2)
    rep = wavefront_amplitude(res, red, transport_amplitude(red), 0.1, 0.05)
    assert rep.max_deviation < 5e-3
    assert rep.ahead_of_front < 1e-10


@pytest.mark.parametrize("d1,d2", [(lambda x: 1 + x, 0.5), (lambda x: 1 + x, lambda x: 1 / (1 + x))])
def test_amplitude_system_misses_varying_ratio(d1, d2):
    # the stated amplitude system leaves |A| constant when psi = 0
    red, res = _front(d1, d2)
    rep = wavefront_amplitude(res, red, solve_amplitude_A(red), 0.1, 0.05)
    assert np.ptp(rep.amplitude_ratio) < 1e-12
    assert rep.max_deviation > 0.1


def test_amplitudes_agree_for_constant_coefficients():
    red, res = _front(0.8, 0.3)
    for A in (solve_amplitude_A(red), transport_amplitude(red)):
        assert wavefront_amplitude(res, red, A, 0.1, 0.05).max_deviation < 1e-5
