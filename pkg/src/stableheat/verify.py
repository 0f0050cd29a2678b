"""Fitted constants for the two-sided, fractional-derivative and gradient bounds.

Every report evaluates the truncated parametrix kernel on a grid of start
points ``x = theta_{t,s}(y) + zeta (t-s)^{1/alpha}`` for several spans t - s and
fits the smallest constant that makes the bound hold on the grid.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .coeffs import Scenario
from .flow import FlowMap
from .mc import simulate_paths
from .parametrix import ParametrixConfig, ParametrixEngine, pN_fractional_derivative

DEFAULT_CEILINGS = {"two_sided": 50.0, "fractional": 200.0, "gradient": 20.0}
DEFAULT_ZETAS = (0.0, 0.25, -0.5, 1.0, -1.0, 2.0, -3.0, 5.0, -5.0, 10.0, -10.0)


@dataclass
class VerifyGrid:
    t: float = 1.0
    y: float = 0.0
    spans: tuple = (0.4, 0.2, 0.1)
    zetas: tuple = DEFAULT_ZETAS
    grid_id: str = "default"

    def describe(self) -> dict:
        return {"grid_id": self.grid_id, "t": self.t, "y": self.y, "spans": list(self.spans),
                "zetas": list(self.zetas)}


@dataclass
class BoundReport:
    estimate: str
    grid: dict
    constant: float
    per_span: dict
    worst: dict
    ceiling: float
    passed: bool
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _profile(alpha: float, d: int, span: float, dist):
    """phi(t - s, r) = ((t-s)^{1/alpha} + r)^{-d-alpha}."""
    return (span ** (1.0 / alpha) + np.abs(dist)) ** (-d - alpha)


class _GridRunner:
    """Shared engine and flow evaluations for one scenario and grid."""

    def __init__(self, scenario: Scenario, grid: VerifyGrid, N: int, config: ParametrixConfig | None):
        if scenario.d != 1:
            raise NotImplementedError("bound verification uses the d = 1 series engine")
        self.sc = scenario
        self.grid = grid
        self.alpha = scenario.alpha
        cfg = config or ParametrixConfig(N=N)
        s_min = grid.t - max(grid.spans) * (1 + 2 * cfg.fd_time_frac)
        self.engine = ParametrixEngine(scenario, grid.t, grid.y, cfg, s_min=max(s_min, 0.0))
        self.flow = FlowMap(scenario.field(), scenario.alpha, scenario.T)

    def points(self, span: float):
        s = self.grid.t - span
        c, _ = self.engine.centre(s)
        x = c + np.asarray(self.grid.zetas, dtype=float) * span ** (1 / self.alpha)
        fwd = self.flow.solve_flow(s, self.grid.t, x[:, None])[:, 0]
        return s, x, fwd - self.grid.y


def _finish(estimate, grid, per_span, worst, ceiling, flags, extra=None, constant=None):
    const = constant if constant is not None else max(v["C"] for v in per_span.values())
    ok = bool(np.isfinite(const) and const > 0 and const <= ceiling and not flags)
    return BoundReport(estimate=estimate, grid=grid, constant=float(const), per_span=per_span, worst=worst,
                       ceiling=float(ceiling), passed=ok, flags=flags, extra=extra or {})


def _drift(per_span) -> float:
    cs = np.array([v["C"] for v in per_span.values()])
    return float(cs.max() / cs.min() - 1.0)


def verify_two_sided(scenario: Scenario, grid: VerifyGrid | None = None, N: int = 2, ceiling: float | None = None,
                     config: ParametrixConfig | None = None, runner: _GridRunner | None = None) -> BoundReport:
    """C1 = max(sup ratio, 1 / inf ratio) of p_N / [(t-s) phi(t-s, theta_{s,t}(x) - y)]."""
    grid = grid or VerifyGrid()
    ceiling = DEFAULT_CEILINGS["two_sided"] if ceiling is None else ceiling
    run = runner or _GridRunner(scenario, grid, N, config)
    a, d = scenario.alpha, scenario.d
    per_span, flags = {}, []
    worst = {"C": -1.0}
    for span in grid.spans:
        s, x, dist = run.points(span)
        p = run.engine.evaluate(s, x).value
        if np.any(p <= 0):
            flags.append(f"nonpositive p_N at span {span}")
            p = np.where(p > 0, p, np.nan)
        ratio = p / (span * _profile(a, d, span, dist))
        C = float(max(np.nanmax(ratio), 1.0 / np.nanmin(ratio)))
        k = int(np.nanargmax(np.maximum(ratio, 1.0 / ratio)))
        per_span[str(span)] = {"C": C, "ratio_min": float(np.nanmin(ratio)), "ratio_max": float(np.nanmax(ratio))}
        if C > worst["C"]:
            worst = {"C": C, "span": span, "x": float(x[k]), "zeta": grid.zetas[k], "ratio": float(ratio[k])}
    return _finish("two_sided", grid.describe(), per_span, worst, ceiling, flags,
                   {"stability_drift": _drift(per_span), "N": N})


def verify_fractional(scenario: Scenario, grid: VerifyGrid | None = None, N: int = 2, ceiling: float | None = None,
                      config: ParametrixConfig | None = None, runner: _GridRunner | None = None) -> BoundReport:
    """C2 = sup of D^{(alpha)} p_N / phi(t-s, theta_{s,t}(x) - y)."""
    grid = grid or VerifyGrid()
    ceiling = DEFAULT_CEILINGS["fractional"] if ceiling is None else ceiling
    run = runner or _GridRunner(scenario, grid, N, config)
    a, d = scenario.alpha, scenario.d
    per_span, flags = {}, []
    worst = {"C": -1.0}
    centre_values = []
    for span in grid.spans:
        s, x, dist = run.points(span)
        D = pN_fractional_derivative(run.engine, s, x, run.engine.cfg.polar)
        if not np.all(np.isfinite(D)):
            flags.append(f"non-finite fractional derivative at span {span}")
        ratio = D / _profile(a, d, span, dist)
        C = float(np.max(ratio))
        k = int(np.argmax(ratio))
        per_span[str(span)] = {"C": C, "ratio_min": float(np.min(ratio))}
        centre_values.append(float(D[list(grid.zetas).index(0.0)]) if 0.0 in grid.zetas else float("nan"))
        if C > worst["C"]:
            worst = {"C": C, "span": span, "x": float(x[k]), "zeta": grid.zetas[k], "ratio": float(ratio[k])}
    spans = np.array(grid.spans, dtype=float)
    cv = np.array(centre_values)
    slope = float(np.polyfit(np.log(spans), np.log(cv), 1)[0]) if len(spans) > 1 and np.all(cv > 0) else float("nan")
    return _finish("fractional", grid.describe(), per_span, worst, ceiling, flags,
                   {"stability_drift": _drift(per_span), "centre_exponent": slope,
                    "centre_exponent_target": -1.0 - d / a, "N": N})


def verify_gradient(scenario: Scenario, grid: VerifyGrid | None = None, N: int = 2, ceiling: float | None = None,
                    config: ParametrixConfig | None = None, runner: _GridRunner | None = None) -> BoundReport:
    """C3 = sup of (t-s)^{1/alpha} |grad_x log p_N|."""
    grid = grid or VerifyGrid()
    ceiling = DEFAULT_CEILINGS["gradient"] if ceiling is None else ceiling
    run = runner or _GridRunner(scenario, grid, N, config)
    a = scenario.alpha
    per_span, flags = {}, []
    worst = {"C": -1.0}
    for span in grid.spans:
        s, x, _ = run.points(span)
        ev = run.engine.evaluate(s, x, order=1)
        if np.any(ev.value <= 0):
            flags.append(f"nonpositive p_N at span {span}")
        val = span ** (1 / a) * np.abs(ev.gradient / ev.value)
        C = float(np.max(val))
        k = int(np.argmax(val))
        per_span[str(span)] = {"C": C}
        if C > worst["C"]:
            worst = {"C": C, "span": span, "x": float(x[k]), "zeta": grid.zetas[k], "value": float(val[k])}
    spans = sorted(grid.spans, reverse=True)
    cs = [per_span[str(sp)]["C"] for sp in spans]
    growing = all(c2 > 1.2 * c1 for c1, c2 in zip(cs, cs[1:]))
    if growing and len(cs) > 1:
        flags.append("C3 grows as t - s decreases")
    return _finish("gradient", grid.describe(), per_span, worst, ceiling, flags,
                   {"stability_drift": _drift(per_span), "N": N})


def verify_all(scenario: Scenario, grid: VerifyGrid | None = None, N: int = 2, ceilings: dict | None = None,
               config: ParametrixConfig | None = None) -> dict:
    """The three reports from one engine and one configuration."""
    grid = grid or VerifyGrid()
    ceil = dict(DEFAULT_CEILINGS)
    ceil.update(ceilings or {})
    run = _GridRunner(scenario, grid, N, config)
    return {
        "two_sided": verify_two_sided(scenario, grid, N, ceil["two_sided"], runner=run),
        "fractional": verify_fractional(scenario, grid, N, ceil["fractional"], runner=run),
        "gradient": verify_gradient(scenario, grid, N, ceil["gradient"], runner=run),
    }


def naive_centre_comparison(scenario: Scenario, s: float, t: float, xs, N: int = 2,
                            config: ParametrixConfig | None = None) -> dict:
    """Flow-centred versus naive (x-centred) two-sided ratios on the diagonal y = theta_{s,t}(x).

    For each start point x the target is placed at y = theta_{s,t}(x), where the
    kernel is largest; the naive profile measures the distance as |x - y|.
    """
    a, d = scenario.alpha, scenario.d
    fm = FlowMap(scenario.field(), a, scenario.T)
    span = t - s
    rows = []
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        y = float(fm.solve_flow(s, t, np.array([x]))[0])
        eng = ParametrixEngine(scenario, t, y, config or ParametrixConfig(N=N), s_min=s)
        p = float(eng.evaluate(s, np.array([x])).value[0])
        flow_ratio = p / (span * float(_profile(a, d, span, 0.0)))
        naive_ratio = p / (span * float(_profile(a, d, span, x - y)))
        rows.append({"x": float(x), "y": y, "p": p, "flow_ratio": flow_ratio, "naive_ratio": naive_ratio,
                     "naive_over_flow": naive_ratio / flow_ratio})
    return {"s": s, "t": t, "rows": rows}


def constant_stability(reports: list[BoundReport]) -> float:
    """Relative spread max/min - 1 of the fitted constants of comparable reports."""
    cs = np.array([r.constant for r in reports])
    return float(cs.max() / cs.min() - 1.0)


def class_stability(first: dict, second: dict) -> dict:
    """Ratios of fitted constants between two scenarios sharing one parameter class.

    Both arguments are outputs of :func:`verify_all`; constants that depend only on
    the class should move by less than a factor of two.
    """
    out = {}
    for key in first:
        a, b = first[key].constant, second[key].constant
        out[key] = float(max(a, b) / min(a, b))
    out["max_ratio"] = max(out.values())
    out["passed"] = out["max_ratio"] < 2.0
    return out


def initial_condition_check(scenario: Scenario, x: float, t: float, spans=(0.2, 0.05, 0.0125), n_paths: int = 100_000,
                            steps: int = 200, seed: int = 0) -> dict:
    """E phi(X_{s,t}(x)) -> phi(x) as s -> t for three smooth test functions (Monte Carlo)."""
    tests = {
        "gauss": lambda z: np.exp(-z ** 2),
        "cos": lambda z: np.cos(z),
        "bump": lambda z: 1.0 / (1.0 + z ** 2),
    }
    out = {}
    for name, fn in tests.items():
        errs = []
        for i, span in enumerate(spans):
            ens = simulate_paths(scenario, t - span, [x], t, steps, n_paths, seed + i)
            errs.append(float(abs(np.mean(fn(ens.terminal[:, 0])) - fn(x))))
        out[name] = {"spans": list(spans), "errors": errs,
                     "decreasing": bool(all(e2 <= e1 for e1, e2 in zip(errs, errs[1:])))}
    return out
