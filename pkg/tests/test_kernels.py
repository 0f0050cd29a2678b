from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stableheat.coeffs import Scenario
from stableheat.flow import FlowMap
from stableheat.kernels import (
    ConvolutionGrid,
    PhiSpec,
    composite_lattice,
    convolution_hypothesis_ok,
    convolution_inequality_check,
    gauss_jacobi_rule,
    graded_time_rule,
    phi_profile,
    phi_profile_forward,
    rho_profile,
    rho_profile_scaled,
    sinh_lattice,
    spacetime_convolve,
    weighted_profile_gap,
)
from stableheat.nonlocal_ops import first_difference_integral, fractional_derivative, fractional_laplacian
from stableheat.stable import get_profile


def test_rho_profile_direct_value():
    assert rho_profile(PhiSpec(1.0, 0.0, 1.0, 1.0), 0.25, 0.0) == pytest.approx(4.0)


@pytest.mark.parametrize("alpha", [0.7, 1.3])
def test_rho_profile_at_origin_is_power_of_t(alpha):
    t = np.array([0.1, 0.4, 0.9])
    spec = PhiSpec(alpha, 0.0, alpha, alpha)
    assert np.allclose(rho_profile(spec, t, np.zeros(3)), t ** (-1 / alpha))


def test_rho_profile_two_forms_agree():
    rng = np.random.default_rng(0)
    for _ in range(100):
        spec = PhiSpec(rng.uniform(0.2, 2), rng.uniform(0, 1), rng.uniform(-0.5, 2), rng.uniform(0.3, 1.9))
        t = rng.uniform(1e-3, 2)
        x = rng.normal(0, 3)
        a, b = rho_profile(spec, t, x), rho_profile_scaled(spec, t, x)
        assert a == pytest.approx(b, rel=1e-12)


def test_phi_profile_without_drift():
    spec = PhiSpec(1.2, 0.0, 1.2, 1.2)
    x = np.array([0.3, -1.0])
    assert np.allclose(phi_profile(spec, 0.1, x, 0.6, 0.5), rho_profile(spec, 0.5, x - 0.5))


def test_phi_profile_on_diagonal():
    sc = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    fm = FlowMap.from_scenario(sc)
    spec = PhiSpec(1.0, 0.0, 1.0, 1.0)
    y = fm.solve_flow(0.0, 0.5, np.array([[1.5]]))[0, 0]
    assert phi_profile(spec, 0.0, np.array([1.5]), 0.5, np.array([y]), fm)[0] == pytest.approx(0.5 ** -1, rel=1e-6)
    assert phi_profile_forward(spec, 0.0, np.array([1.5]), 0.5, np.array([y]), fm)[0] == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("tau", [0.05, 0.3, 1.0])
def test_phi_mass_is_constant_in_time(tau):
    spec = PhiSpec(1.5, 0.0, 1.5, 1.5)
    mass = 2 * quad(lambda y: float(rho_profile(spec, tau, y)), 0, np.inf, limit=200)[0]
    # closed form: 2 int_0^inf (h + y)^{-1-eta} dy h^{eta} / ... = 2 / eta
    assert mass == pytest.approx(2 / 1.5, rel=1e-6)


def test_weighted_profile_gap_nonpositive():
    x = np.linspace(-20, 20, 81)
    for t in (0.01, 0.3, 1.0):
        assert np.all(weighted_profile_gap(1.2, 0.6, t, x) <= 1e-12)


def test_gauss_jacobi_beta_identity():
    r, w = gauss_jacobi_rule(0.0, 1.0, 0.5, 0.5, 20)
    assert w.sum() == pytest.approx(math.pi, rel=1e-12)
    r, w = gauss_jacobi_rule(1.0, 3.0, 0.5, 0.5, 20)
    assert w.sum() == pytest.approx(math.pi, rel=1e-12)


def test_graded_time_rule_integrates_singular_function():
    r, w = graded_time_rule(0.0, 1.0, 0.3, 1.0, 30)
    assert np.sum(w * r ** (-0.7) * np.cos(r)) == pytest.approx(quad(lambda u: u ** -0.7 * np.cos(u), 0, 1)[0], rel=1e-9)


def test_sinh_lattice_reach_and_symmetry():
    z = sinh_lattice(2.0, 0.5, 101, 100.0)
    assert z[0] == pytest.approx(2.0 - 50.0) and z[-1] == pytest.approx(2.0 + 50.0)
    assert np.allclose(z - 2.0, -(z - 2.0)[::-1])


def test_composite_lattice_integrates_two_bumps():
    z, w = composite_lattice([0.0, 30.0], [0.01, 2.0], 400, 1e4)
    f = np.exp(-0.5 * (z / 0.01) ** 2) / (0.01 * math.sqrt(2 * math.pi)) + np.exp(-0.5 * ((z - 30) / 2) ** 2) / (
        2 * math.sqrt(2 * math.pi))
    assert np.sum(f * w) == pytest.approx(2.0, abs=1e-8)


def test_spacetime_convolution_zero():
    zero = lambda s, x, t, z: np.zeros(np.shape(z)[:-1])
    one = lambda s, x, t, z: np.ones(np.shape(z)[:-1])
    val, _ = spacetime_convolve(zero, one, 0.0, np.array([0.0]), 1.0, np.array([0.0]), 1.0)
    assert val == 0.0


def test_spacetime_convolution_beta_identity():
    # time-only factors: f = (r-s)^{-1/2}, g = (t-r)^{-1/2} times a unit-mass space density
    cauchy = get_profile(1.0)

    def f(s, x, r, z):
        return (r - s) ** -0.5 * cauchy(z[..., 0] - x[0])

    def g(r, z, t, y):
        return (t - r) ** -0.5 * np.ones(np.shape(z)[:-1])

    grid = ConvolutionGrid(n_time=16, n_space=400, a=0.5, b=0.5)
    val, _ = spacetime_convolve(f, g, 0.0, np.array([0.0]), 1.0, np.array([0.0]), 1.0, None, grid)
    assert val == pytest.approx(math.pi, rel=1e-3)


def test_convolution_inequality_small_sample():
    sc = Scenario(d=1, alpha=1.2, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    res = convolution_inequality_check(1.2, FlowMap.from_scenario(sc), n_draws=5, seed=2,
                                       grid=ConvolutionGrid(n_time=16, n_space=200))
    assert res["finite"]
    assert res["convolution_vs_baseline"] < 10


def test_fractional_derivative_of_linear_is_zero():
    f = lambda p: 3.0 * p[..., 0] - 1.0
    assert np.allclose(fractional_derivative(f, np.array([[0.2], [5.0]]), 1.1), 0.0, atol=1e-10)


def test_fractional_derivative_cauchy_matches_adaptive_oracle():
    g = get_profile(1.0)
    num = fractional_derivative(lambda p: g(p[..., 0]), np.array([[0.0]]), 1.0,
                                hessian=lambda p: g.derivative(p[:, 0], 2)[:, None, None])[0]
    integrand = lambda z: abs(g(z) + g(-z) - 2 * g(0.0)) / z ** 2
    ref = 2 * (quad(integrand, 0, 1, limit=200)[0] + quad(integrand, 1, np.inf, limit=200)[0])
    assert num > 0
    assert num == pytest.approx(ref, rel=1e-2)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.7])
def test_fractional_laplacian_of_profile(alpha):
    g = get_profile(alpha)
    x = np.linspace(-4, 4, 9)[:, None]
    num = fractional_laplacian(lambda p: g(p[..., 0]), x, alpha, hessian=lambda p: g.derivative(p[:, 0], 2)[:, None, None])
    assert np.allclose(num, g.frac_laplacian(x[:, 0]), rtol=1e-4, atol=1e-7)


def test_first_difference_form_is_half_the_second_difference():
    g = get_profile(0.6)
    f = lambda p: g(p[..., 0])
    x = np.array([[0.0], [1.3]])
    first = first_difference_integral(f, lambda p: g.derivative(p[:, 0], 1)[:, None], x, 0.6, 1.0,
                                      hessian=lambda p: g.derivative(p[:, 0], 2)[:, None, None])
    second = fractional_laplacian(f, x, 0.6) / (0.5 * __import__("stableheat").stable.levy_constant(1, 0.6))
    assert np.allclose(first, 0.5 * second, rtol=1e-4)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.3, 1.9), t=st.floats(1e-3, 3.0), x=st.floats(-50, 50), beta=st.floats(0.0, 1.0))
def test_rho_profile_positive_and_forms_agree(alpha, t, x, beta):
    spec = PhiSpec(alpha, beta, alpha, alpha)
    a = rho_profile(spec, t, x)
    assert a > 0
    assert a == pytest.approx(rho_profile_scaled(spec, t, x), rel=1e-10)


def test_convolution_hypothesis_limit():
    assert convolution_hypothesis_ok(1.2, 0.0, 0.3)
    assert not convolution_hypothesis_ok(1.2, 0.31)


def test_engine_warns_when_gamma0_exceeds_limit():
    from stableheat.parametrix import ParametrixEngine
    sc = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    with pytest.warns(RuntimeWarning, match="alpha/4"):
        ParametrixEngine(sc, 1.0, 0.0)
