from __future__ import annotations

import math

import numpy as np
import pytest

from stableheat.coeffs import Scenario
from stableheat.verify import (
    VerifyGrid,
    class_stability,
    constant_stability,
    initial_condition_check,
    naive_centre_comparison,
    verify_all,
    verify_two_sided,
)

EXACT = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0)
LINEAR = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))


@pytest.fixture(scope="module")
def exact_reports():
    return verify_all(EXACT, VerifyGrid())


def test_exact_two_sided_constant_is_pi(exact_reports):
    # p / ((t-s) phi) = (tau + |x|)^2 / (pi (tau^2 + x^2)) lies in [1/pi, 2/pi]
    rep = exact_reports["two_sided"]
    assert rep.constant == pytest.approx(math.pi, rel=1e-4)
    assert rep.passed


def test_exact_gradient_constant_is_one(exact_reports):
    # tau |d/dx log p| = 2 tau |x| / (tau^2 + x^2), maximal at |x| = tau, which is on the grid
    assert exact_reports["gradient"].constant == pytest.approx(1.0, rel=1e-4)


def test_exact_fractional_constant_is_scale_free(exact_reports):
    rep = exact_reports["fractional"]
    assert rep.extra["stability_drift"] < 1e-3
    assert rep.extra["centre_exponent"] == pytest.approx(rep.extra["centre_exponent_target"], abs=0.02)


def test_report_serializes(exact_reports):
    d = exact_reports["two_sided"].to_dict()
    assert d["estimate"] == "two_sided" and d["grid"]["spans"] == [0.4, 0.2, 0.1]


def test_ceiling_controls_pass_flag():
    assert not verify_two_sided(EXACT, VerifyGrid(spans=(0.4,)), ceiling=3.0).passed


def test_naive_centre_ratio_grows_with_drift():
    out = naive_centre_comparison(LINEAR, 0.5, 1.0, [5.0])
    assert out["rows"][0]["naive_over_flow"] >= 5


def test_constant_stability_and_class_ratio(exact_reports):
    reps = [exact_reports["two_sided"], exact_reports["two_sided"]]
    assert constant_stability(reps) == 0.0
    out = class_stability(exact_reports, exact_reports)
    assert out["max_ratio"] == 1.0 and out["passed"]


def test_initial_condition_errors_shrink():
    out = initial_condition_check(EXACT, 0.3, 1.0, spans=(0.2, 0.02), n_paths=20_000, steps=20)
    assert all(v["errors"][1] < v["errors"][0] for v in out.values())


def test_grid_requires_one_dimension():
    with pytest.raises(NotImplementedError):
        verify_two_sided(Scenario(d=2, alpha=1.0, beta=1.0, gamma=1.0))


def test_grid_describe_lists_points():
    g = VerifyGrid(spans=(0.5,), zetas=(0.0, 1.0))
    assert g.describe() == {"grid_id": "default", "t": 1.0, "y": 0.0, "spans": [0.5], "zetas": [0.0, 1.0]}
    assert np.isfinite(verify_two_sided(EXACT, g).constant)
