from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stableheat.coeffs import Scenario
from stableheat.flow import BackwardTrajectory, FlowMap, backward_flow_batch, fit_loglog_slope, flow_suite


def _fm(**kw):
    base = dict(d=1, alpha=1.0, beta=1.0, gamma=1.0)
    base.update(kw)
    return FlowMap.from_scenario(Scenario(**base))


def test_zero_drift_flow_is_identity():
    fm = _fm()
    x = np.array([0.7])
    assert np.allclose(fm.solve_flow(0.0, 0.8, x), x)
    assert np.allclose(fm.solve_regularized_flow(0.3, 0.0, 0.8, x), x)
    J, dinv = fm.flow_jacobian(0.0, 0.8, x)
    assert np.allclose(J, np.eye(1), atol=1e-9)
    assert dinv == pytest.approx(1.0, abs=1e-9)
    assert fm.approximate_flow_defect(0.0, 0.3, 0.8, x) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(fm.comparability_ratio(0.0, 0.8, np.array([[0.1], [2.0]]), np.array([[1.0], [-3.0]])), 1.0)


def test_constant_drift_translates():
    fm = _fm(d=2, drift_id="constant", drift_params=(0.5, -1.0))
    x = np.array([1.0, 1.0])
    assert np.allclose(fm.solve_flow(0.2, 0.7, x), x + 0.5 * np.array([0.5, -1.0]), atol=1e-9)
    assert fm.approximate_flow_defect(0.2, 0.4, 0.7, x) < 1e-10


def test_linear_drift_regularized_doubles_in_ln2():
    fm = _fm(drift_id="linear", drift_params=(1.0, 0.0))
    assert fm.solve_regularized_flow(0.1, 0.0, math.log(2), np.array([1.0]))[0] == pytest.approx(2.0, abs=1e-8)


def test_linear_drift_flow_is_exponential():
    fm = _fm(drift_id="linear", drift_params=(1.0, 0.0))
    assert fm.solve_flow(0.0, 1.0, np.array([1.0]))[0] == pytest.approx(math.e, abs=1e-6)
    J, dinv = fm.flow_jacobian(0.0, 0.6, np.array([0.4]))
    assert J[0, 0] == pytest.approx(math.exp(0.6), rel=1e-6)
    assert dinv == pytest.approx(math.exp(-0.6), rel=1e-6)


def test_rotation_preserves_volume():
    fm = _fm(d=2, drift_id="rotation", drift_params=(1.0,))
    _, dinv = fm.flow_jacobian(0.0, 0.9, np.array([0.3, -1.2]))
    assert dinv == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kw", [
    dict(drift_id="linear", drift_params=(1.0, 0.0)),
    dict(drift_id="linear_trig", drift_params=(1.0, 1.0, 1.0, 0.0), alpha=0.8),
    dict(drift_id="holder", drift_params=(1.0, 1.0, 1.0), beta=0.6, alpha=1.2),
])
def test_regularized_inverse_identity(kw):
    fm = _fm(**kw)
    x = np.array([0.9])
    for eps in (0.05, 0.5):
        fwd = fm.solve_regularized_flow(eps, 0.1, 0.6, x)
        assert np.allclose(fm.solve_regularized_flow(eps, 0.6, 0.1, fwd), x, atol=1e-6)


def test_defect_exponent_linear_plus_cosine():
    fm = _fm(alpha=0.8, drift_id="linear_trig", drift_params=(1.0, 1.0, 1.0, 0.0))
    spans = 2.0 ** -np.arange(6, 1, -1)
    defects = [fm.approximate_flow_defect(0.0, h / 2, h, np.array([0.5])) for h in spans]
    assert fit_loglog_slope(spans, defects) >= 1 / 0.8 - 0.1


def test_comparability_ratio_on_diagonal():
    fm = _fm(drift_id="linear", drift_params=(1.0, 0.0))
    x = np.array([[2.0]])
    y = fm.solve_flow(0.0, 0.5, x)
    r = fm.comparability_ratio(0.0, 0.5, x, y)[0]
    assert r == pytest.approx(1.0, abs=1e-6)


def test_comparability_ratio_bounded_for_linear_drift():
    fm = _fm(drift_id="linear", drift_params=(1.0, 0.0))
    xs = np.linspace(-10, 10, 41)[:, None]
    ys = np.linspace(-10, 10, 41)[::-1, None]
    r = fm.comparability_ratio(0.0, 0.5, xs, ys)
    assert np.all(np.isfinite(r))
    assert r.max() < math.exp(0.5) + 1e-6


def test_flow_suite_reports_exponents_for_holder_drift():
    fm = _fm(alpha=1.5, beta=0.6, drift_id="holder", drift_params=(1.0, 1.0, 1.0))
    res = flow_suite(fm, [0.8], spans=2.0 ** -np.arange(8, 3, -1))
    assert res["inverse_error"] <= 1e-6
    assert res["defect_exponent"] >= res["defect_exponent_target"]
    assert res["det_exponent"] >= res["det_exponent_target"]


def test_backward_trajectory_matches_flow_map():
    sc = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear_trig", drift_params=(0.5, 0.3, 1.0, 0.0),
                  dispersion_id="exp_sin", dispersion_params=(1.0, 0.15, 1.0, 0.0))
    traj = BackwardTrajectory(sc.field(), sc.alpha, 1.0, [0.2], u_min=0.0)
    fm = FlowMap.from_scenario(sc)
    c, A = traj(np.array([0.3]))
    assert c[0, 0] == pytest.approx(fm.solve_flow(1.0, 0.3, np.array([0.2]))[0], abs=1e-6)
    assert A[0] > 0


def test_backward_batch_affine_matches_closed_form():
    sc = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    u = np.array([0.8, 0.6])
    delta = np.array([0.3, 0.1])
    w = np.array([[1.0, -2.0], [0.5, 0.0]])[..., None]
    out = backward_flow_batch(sc.field(), sc.alpha, u, delta, w)
    assert np.allclose(out.theta[..., 0], w[..., 0] * np.exp(-delta)[:, None], atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(x=st.floats(-5, 5), s=st.floats(0.0, 0.4), span=st.floats(0.05, 0.6))
def test_flow_semigroup_property(x, s, span):
    fm = _fm(drift_id="linear_trig", drift_params=(0.5, 0.3, 1.0, 0.0))
    t = s + span
    r = s + span / 3
    direct = fm.solve_flow(s, t, np.array([x]))
    # unregularized field is smooth here, so the exact composition law holds up to the mollification defect
    comp = fm.solve_flow(r, t, fm.solve_flow(s, r, np.array([x])))
    assert abs(direct[0] - comp[0]) <= 0.3 * span ** (1 / fm.alpha) + 1e-8
    back = fm.inverse_flow(s, t, direct)
    assert abs(back[0] - x) < 1e-6
