from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad
from scipy.special import gamma as G

from stableheat.nonlocal_ops import fractional_laplacian
from stableheat.stable import (
    FrozenPath,
    StableLaw,
    coefficient_perturbation_check,
    frozen_density,
    frozen_density_derivative,
    get_profile,
    levy_constant,
    sample_stable_increment,
    sample_subordinator_increment,
    subordinator_density,
)

# closed-form Levy (rho = 1/2) law: median solves erfc(1/(2 sqrt r)) = 1/2
LEVY_MEDIAN = 1.0 / (4.0 * 0.4769362762044699 ** 2)


def levy_density(r):
    r = np.asarray(r, dtype=float)
    return r ** -1.5 * np.exp(-1.0 / (4 * r)) / (2 * math.sqrt(math.pi))


def test_levy_median_constant():
    assert LEVY_MEDIAN == pytest.approx(1.0991, abs=1e-4)


@pytest.mark.parametrize("alpha", [0.3, 0.8, 1.0, 1.5, 1.9])
def test_levy_constant_one_dimensional_closed_form(alpha):
    # C_{1,alpha} = Gamma(1 + alpha) sin(pi alpha / 2) / pi
    assert levy_constant(1, alpha) == pytest.approx(G(1 + alpha) * math.sin(math.pi * alpha / 2) / math.pi, rel=1e-12)


def test_levy_constant_cauchy():
    assert levy_constant(1, 1.0) == pytest.approx(1 / math.pi)


def test_subordinator_density_closed_form():
    r = np.geomspace(0.05, 50, 10)
    assert np.max(np.abs(subordinator_density(0.5, 1.0, r) - levy_density(r))) < 1e-5
    assert subordinator_density(0.5, 1.0, 1.0) == pytest.approx(0.21970, abs=1e-5)


@pytest.mark.parametrize("rho", [0.3, 0.5, 0.7])
def test_subordinator_density_normalized(rho):
    f = lambda r: float(subordinator_density(rho, 1.0, r))
    mass = quad(f, 0, 1, limit=200)[0] + quad(f, 1, np.inf, limit=400)[0]
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_subordinator_density_global_bound():
    rho, t = 0.6, 0.7
    r = np.geomspace(t ** (1 / rho), 1e3 * t ** (1 / rho), 60)
    scaled = subordinator_density(rho, t, r) * r ** (rho + 1) / t
    assert np.all(np.isfinite(scaled)) and scaled.max() < 1.0


def test_subordinator_median():
    n = 100_000
    draws = sample_subordinator_increment(0.5, 1.0, np.random.default_rng(11), n)
    se = math.sqrt(0.25 / n) / float(levy_density(LEVY_MEDIAN))
    assert abs(np.median(draws) - LEVY_MEDIAN) < 3 * se


def test_subordinator_self_similarity():
    rng = np.random.default_rng(5)
    m1 = np.median(sample_subordinator_increment(0.6, 0.5, rng, 100_000))
    m2 = np.median(sample_subordinator_increment(0.6, 1.5, rng, 100_000))
    assert m2 / m1 == pytest.approx(3.0 ** (1 / 0.6), rel=0.05)


def test_subordinator_tail_exponent():
    draws = np.sort(sample_subordinator_increment(0.4, 1.0, np.random.default_rng(3), 200_000))[::-1]
    k = np.arange(1, 2001)
    slope = np.polyfit(np.log(draws[:2000]), np.log(k / draws.size), 1)[0]
    assert -slope == pytest.approx(0.4, abs=0.05)


def test_stable_characteristic_function():
    n = 200_000
    inc = sample_stable_increment(StableLaw(1.3, 1), 0.5, np.random.default_rng(8), n)[:, 0]
    c = np.cos(inc)
    assert abs(c.mean() - math.exp(-0.5)) < 3 * c.std() / math.sqrt(n)


def test_stable_isotropy_2d():
    inc = sample_stable_increment(StableLaw(1.2, 2), 1.0, np.random.default_rng(9), 50_000)
    ang = np.arctan2(inc[:, 1], inc[:, 0])
    counts, _ = np.histogram(ang, bins=24, range=(-math.pi, math.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_cauchy_quartile():
    inc = sample_stable_increment(StableLaw(1.0, 1), 1.0, np.random.default_rng(4), 100_000)[:, 0]
    assert np.mean(inc <= 1.0) == pytest.approx(0.75, abs=0.01)


def test_frozen_density_cauchy_at_origin():
    path = FrozenPath.constant(1.0, 1.0)
    assert frozen_density(path, 0.0, 1.0, np.array([0.0]))[0] == pytest.approx(1 / math.pi, abs=1e-5)
    assert frozen_density(path, 0.0, 1.0, np.array([0.0]), backend="charfn")[0] == pytest.approx(1 / math.pi, abs=1e-5)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5])
def test_frozen_density_scaling(alpha):
    path = FrozenPath.constant(1.0, alpha)
    x = np.linspace(-3, 3, 13)
    tau = 0.3
    lhs = frozen_density(path, 0.2, 0.2 + tau, x)
    rhs = tau ** (-1 / alpha) * frozen_density(path, 0.0, 1.0, tau ** (-1 / alpha) * x)
    assert np.allclose(lhs, rhs, rtol=1e-8)


def test_backends_agree_for_time_varying_scale():
    path = FrozenPath.scalar_path(lambda r: 1 + np.asarray(r) / 2, [[1.0]], 1.3)
    x = np.linspace(-6, 6, 25)
    a = frozen_density(path, 0.0, 1.0, x, backend="profile")
    b = frozen_density(path, 0.0, 1.0, x, backend="charfn")
    mask = a > 1e-4
    assert np.max(np.abs(a - b)[mask] / a[mask]) < 1e-3


def test_cauchy_gradient_closed_form():
    path = FrozenPath.constant(1.0, 1.0)
    g = frozen_density_derivative(path, 0.0, 1.0, np.array([1.0, 0.0]), 1)
    assert g[0] == pytest.approx(-1 / (2 * math.pi), abs=1e-6)
    assert g[1] == pytest.approx(0.0, abs=1e-12)


def test_gradient_concentration_gain_finite():
    path = FrozenPath.constant(1.0, 1.2)
    x = np.linspace(-50, 50, 201)
    g = frozen_density_derivative(path, 0.0, 1.0, x, 1)
    prof = (1.0 + np.abs(x)) ** (-1 - 1.2)
    assert np.all(np.isfinite(np.abs(x) * np.abs(g) / prof))


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.6])
def test_profile_fractional_laplacian_identity(alpha):
    prof = get_profile(alpha)
    x = np.array([[0.0], [0.7], [2.5]])
    num = fractional_laplacian(lambda p: prof(p[..., 0]), x, alpha, 1.0,
                               hessian=lambda p: prof.derivative(p[:, 0], 2)[:, None, None])
    assert np.allclose(num, prof.frac_laplacian(x[:, 0]), rtol=1e-4, atol=1e-7)


def test_perturbation_check_zero_for_equal_paths():
    p = FrozenPath.constant(1.0, 1.5)
    rep = coefficient_perturbation_check(p, p, 0.0, 1.0, np.linspace(-3, 3, 7))
    assert rep["gradient_sup_difference"] == 0.0


def test_perturbation_check_linear_in_distance():
    base = FrozenPath.constant(1.0, 1.5)
    grid = np.linspace(-3, 3, 7)
    eps = np.array([0.05, 0.1, 0.2])
    diffs = [coefficient_perturbation_check(base, FrozenPath.constant(1.0 + e, 1.5), 0.0, 1.0, grid)
             ["gradient_sup_difference"] for e in eps]
    slope = np.polyfit(np.log(eps), np.log(diffs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)
    rep = coefficient_perturbation_check(base, FrozenPath.constant(1.1, 1.5), 0.0, 1.0, grid)
    assert math.isfinite(rep["gradient_ratio"]) and math.isfinite(rep["fractional_ratio"])


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(0.5, 1.9), x=st.floats(-20, 20))
def test_profile_matches_fourier_inversion(alpha, x):
    path = FrozenPath.constant(1.0, alpha)
    a = frozen_density(path, 0.0, 1.0, np.array([x]), backend="profile")[0]
    b = frozen_density(path, 0.0, 1.0, np.array([x]), backend="charfn")[0]
    assert a == pytest.approx(b, rel=1e-6, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(0.3, 1.95), d=st.integers(1, 4))
def test_levy_constant_positive(alpha, d):
    assert levy_constant(d, alpha) > 0
