from __future__ import annotations

import math

import numpy as np
import pytest

from stableheat.coeffs import Scenario
from stableheat.parametrix import (
    ParametrixConfig,
    ParametrixEngine,
    ResolutionError,
    density_gradient,
    frozen_kolmogorov_residual,
    kolmogorov_residual,
    mass_function,
    proxy_density,
    q0,
    truncated_density,
)
from stableheat.stable import FrozenPath, frozen_density

EXACT = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0)
LINEAR = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))


def ou_cauchy(tau, x, y=0.0):
    """Density of X = e^tau x + int_0^tau e^{tau-r} dL_r for Cauchy L, evaluated at y."""
    scale = math.expm1(tau)
    return scale / (math.pi * (scale ** 2 + (math.exp(tau) * np.asarray(x) - y) ** 2))


@pytest.mark.parametrize("alpha", [0.6, 1.5])
def test_exact_case_equals_frozen_density(alpha):
    sc = Scenario(d=1, alpha=alpha, beta=1.0, gamma=1.0)
    x = np.linspace(-5, 5, 11)
    ev = truncated_density(sc, 0.0, x, 1.0, 0.0, N=2)
    ref = frozen_density(FrozenPath.constant(1.0, alpha), 0.0, 1.0, x, backend="charfn")
    assert np.allclose(ev.value, ref, rtol=1e-3)
    assert all(np.all(t == 0) for t in ev.terms[1:])


def test_exact_cauchy_closed_form():
    x = np.linspace(-5, 5, 20)
    ev = truncated_density(EXACT, 0.0, x, 1.0, 0.0, N=2)
    assert np.max(np.abs(ev.value - 1 / (math.pi * (1 + x ** 2)))) < 1e-5


def test_linear_drift_series_converges_to_closed_form():
    x = np.array([0.0, 1.0, 3.0])
    ref = ou_cauchy(0.5, x)
    errs = [np.max(np.abs(truncated_density(LINEAR, 0.5, x, 1.0, 0.0, N=N).value / ref - 1)) for N in (0, 1, 2)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01


def test_proxy_density_is_centred_on_backward_flow():
    # for b = x the frozen centre is theta_{t,s}(y) = e^{-(t-s)} y
    y = 2.0
    xs = np.linspace(-1, 3, 401)
    p = proxy_density(LINEAR, 0.5, xs, 1.0, y)
    assert xs[np.argmax(p)] == pytest.approx(y * math.exp(-0.5), abs=0.02)


def test_q0_vanishes_in_exact_case():
    assert np.allclose(q0(EXACT, 0.2, np.array([0.0, 1.5]), 1.0, 0.0), 0.0, atol=1e-10)


def test_kolmogorov_residual_exact_case():
    assert np.max(kolmogorov_residual(EXACT, 0.5, np.array([0.0, 1.0, 3.0]), 1.0, 0.0)) < 0.01


def test_frozen_residual_small_for_linear_drift():
    assert np.max(frozen_kolmogorov_residual(LINEAR, 0.5, np.array([0.0, 0.5]), 1.0, 0.0)) < 0.05


def test_gradient_matches_cauchy_derivative():
    x = np.array([-2.0, 0.5, 1.0])
    out = density_gradient(EXACT, 0.0, x, 1.0, 0.0)
    assert np.allclose(out["gradient"], -2 * x / (math.pi * (1 + x ** 2) ** 2), atol=1e-6)
    assert not out["flagged"]


def test_density_function_interpolates_evaluate():
    eng = ParametrixEngine(LINEAR, 1.0, 0.0, ParametrixConfig(N=1), s_min=0.5)
    f = eng.density_function(0.5)
    x = np.array([-0.7, 0.1, 2.4])
    assert np.allclose(f(x[:, None]), eng.evaluate(0.5, x).value, rtol=1e-4)


def test_mass_function_is_one_without_drift():
    out = mass_function(EXACT, 0.0, 1.0, np.array([0.0, 2.0]))
    assert np.allclose(out["h"], 1.0, atol=1e-3)
    assert np.allclose(out["fractional"], 0.0, atol=1e-6)


def test_engine_rejects_bad_gamma1():
    with pytest.raises(ValueError):
        ParametrixEngine(EXACT, 1.0, 0.0, ParametrixConfig(gamma1=5.0))


def test_engine_is_one_dimensional():
    with pytest.raises(NotImplementedError):
        ParametrixEngine(Scenario(d=2, alpha=1.0, beta=1.0, gamma=1.0), 1.0, np.zeros(2))


def test_negative_order_rejected():
    with pytest.raises(ValueError):
        ParametrixConfig(N=-1)


def test_resolution_error_is_runtime_error():
    assert issubclass(ResolutionError, RuntimeError)
