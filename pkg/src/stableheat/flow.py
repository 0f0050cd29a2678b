"""Mollified-drift flows, their inverses, Jacobians and comparability diagnostics.

``theta_{s,t}(x)`` solves ``d/dr theta = b_{eps(r)}(r, theta)`` from ``(s, x)`` to
time ``t`` with ``eps(r) = |r - s|^{1/alpha}``, forward or backward in time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .coeffs import CoefficientField, Scenario


class FlowIntegrationError(RuntimeError):
    """Integrator failure; ``partial`` holds the trajectory reached so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass
class FlowConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "RK45"
    first_step_cap: float = 1e-6
    first_step_frac: float = 1e-3
    cache_digits: int = 12
    jacobian_step: float = 1e-5


def _affine_flow(lam: float, c, x, dt):
    x = np.asarray(x, dtype=float)
    if lam == 0.0:
        return x + c * dt
    e = np.exp(lam * dt)
    return e * x + c * np.expm1(lam * dt) / lam


class FlowMap:
    """Evaluator for theta_{s,t}, theta^{(eps)}_{s,t}, inverses and Jacobians."""

    def __init__(self, field: CoefficientField, alpha: float, T: float = 1.0, config: FlowConfig | None = None):
        self.field = field
        self.alpha = float(alpha)
        self.T = float(T)
        self.config = config or FlowConfig()
        self.d = field.d
        self._cache: dict = {}

    @classmethod
    def from_scenario(cls, scenario: Scenario, config: FlowConfig | None = None) -> "FlowMap":
        return cls(scenario.field(), scenario.alpha, scenario.T, config)

    # ------------------------------------------------------------------ core
    def _integrate(self, s: float, t: float, x, eps_fn):
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy()
        shape = x.shape
        d = self.d

        def rhs(r, y):
            pts = y.reshape(-1, d)
            return self.field.drift_eps(eps_fn(r), r, pts).ravel()

        span = abs(t - s)
        first = min(self.config.first_step_cap, self.config.first_step_frac * span)
        sol = solve_ivp(rhs, (s, t), x.ravel(), method=self.config.method, rtol=self.config.rtol,
                        atol=self.config.atol, first_step=first)
        if not sol.success:
            raise FlowIntegrationError(f"flow integration failed: {sol.message}",
                                       partial=(sol.t, sol.y))
        return sol.y[:, -1].reshape(shape)

    def _key(self, tag, s, t, x):
        nd = self.config.cache_digits
        return (tag, round(float(s), nd), round(float(t), nd), tuple(np.round(np.ravel(x), nd)))

    # ------------------------------------------------------------ operations
    def solve_regularized_flow(self, epsilon: float, s: float, t: float, x):
        """theta^{(eps)}_{s,t}(x) with a fixed mollification scale."""
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        x = np.asarray(x, dtype=float)
        aff = self.field.affine
        if aff is not None:
            return _affine_flow(aff[0], aff[1], x, t - s)
        return self._integrate(s, t, x, lambda r: epsilon)

    def solve_flow(self, s: float, t: float, x):
        """theta_{s,t}(x); the drift at time r is mollified at scale |r - s|^{1/alpha}.

        ``x`` may be a single point (d,) or a batch (..., d).
        """
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy()
        aff = self.field.affine
        if aff is not None:
            return _affine_flow(aff[0], aff[1], x, t - s)
        single = x.size <= self.d
        if single:
            key = self._key("flow", s, t, x)
            hit = self._cache.get(key)
            if hit is not None:
                return hit.copy()
        if self.field.holder_drift[0] < 1 and abs(t - s) * 1e-3 < 1e-12:
            warnings.warn("time span too short to resolve the mollification singularity", RuntimeWarning)
        a = self.alpha
        out = self._integrate(s, t, x, lambda r: abs(r - s) ** (1.0 / a))
        if single:
            self._cache[key] = out.copy()
        return out

    def inverse_flow(self, s: float, t: float, z):
        """Solve theta_{s,t}(x) = z for x by Newton iteration started at theta_{t,s}(z)."""
        z = np.asarray(z, dtype=float)
        x = self.solve_flow(t, s, z)
        for _ in range(20):
            fx = self.solve_flow(s, t, x) - z
            if np.max(np.abs(fx)) < 1e-11 * (1 + np.max(np.abs(z))):
                break
            J, _ = self.flow_jacobian(s, t, x)
            x = x - np.linalg.solve(J, fx)
        return x

    def flow_jacobian(self, s: float, t: float, x):
        """(grad theta_{s,t}(x), det(grad theta_{s,t}(x))^{-1}) by central differences."""
        if t == s:
            raise ValueError("need t != s")
        x = np.asarray(x, dtype=float).reshape(self.d)
        h = self.config.jacobian_step * (1.0 + np.linalg.norm(x))
        pts = np.concatenate([x + h * np.eye(self.d), x - h * np.eye(self.d)])
        vals = self.solve_flow(s, t, pts)
        J = (vals[: self.d] - vals[self.d:]).T / (2 * h)
        return J, float(1.0 / np.linalg.det(J))

    def approximate_flow_defect(self, s: float, r: float, t: float, x) -> float:
        """|theta_{s,t}(x) - theta_{r,t}(theta_{s,r}(x))|."""
        direct = self.solve_flow(s, t, x)
        composed = self.solve_flow(r, t, self.solve_flow(s, r, x))
        return float(np.linalg.norm(direct - composed))

    def round_trip_defect(self, s: float, t: float, x) -> float:
        """|x - theta_{t,s}(theta_{s,t}(x))|."""
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.solve_flow(t, s, self.solve_flow(s, t, x))))

    def comparability_ratio(self, s: float, t: float, x, y):
        """(|t-s|^{1/a} + |theta_{s,t}(x) - y|) / (|t-s|^{1/a} + |x - theta_{t,s}(y)|).

        ``x`` and ``y`` may be batches of points with matching leading shapes.
        """
        if not s < t:
            raise ValueError("need s < t")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h = (t - s) ** (1.0 / self.alpha)
        fwd = self.solve_flow(s, t, x)
        bwd = self.solve_flow(t, s, y)
        num = h + np.linalg.norm(fwd - y, axis=-1)
        den = h + np.linalg.norm(x - bwd, axis=-1)
        return num / den


# --------------------------------------------------------------------------
# batched backward flows, parameterised by the elapsed time Delta = u - r


@dataclass
class BackwardFlowBatch:
    """theta_{u_i, u_i - delta_i}(w) and the scale integral for rows i.

    ``theta`` has shape (rows, n_w, d); ``scale_integral`` is
    ``int_{u-delta}^{u} scale(v, theta_{u,v}(w))^alpha dv`` with shape (rows, n_w).
    """

    theta: np.ndarray
    scale_integral: np.ndarray


def backward_flow_batch(field: CoefficientField, alpha: float, u, delta, w, config: FlowConfig | None = None,
                        scale_integral: bool = True) -> BackwardFlowBatch:
    """Backward flows from several terminal times, one ODE solve for all rows.

    All rows share the elapsed time Delta as the independent variable, so the
    mollification scale Delta^{1/alpha} is common and each row is read off at
    its own Delta_i.  ``w`` has shape (rows, n_w, d) or (rows, n_w) when d = 1.
    """
    cfg = config or FlowConfig()
    d = field.d
    u = np.atleast_1d(np.asarray(u, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    w = np.asarray(w, dtype=float)
    if w.ndim == 2 and d == 1:
        w = w[..., None]
    rows, n_w = w.shape[0], w.shape[1]
    if np.any(delta < 0):
        raise ValueError("delta must be nonnegative")

    aff = field.affine

    def scale_alpha(tv, pts):
        return np.abs(field.scale(tv, pts)) ** alpha

    if aff is not None:
        theta = _affine_flow(aff[0], aff[1], w, -delta[:, None, None])
        if not scale_integral:
            return BackwardFlowBatch(theta, np.zeros((rows, n_w)))
        xg, wg = np.polynomial.legendre.leggauss(24)
        acc = np.zeros((rows, n_w))
        for xk, wk in zip(xg, wg):
            dk = 0.5 * delta * (xk + 1)
            pts = _affine_flow(aff[0], aff[1], w, -dk[:, None, None])
            tv = np.maximum(u - dk, 0.0)[:, None]
            acc += 0.5 * delta[:, None] * wk * scale_alpha(tv, pts)
        return BackwardFlowBatch(theta, acc)

    dmax = float(delta.max())
    if dmax == 0.0:
        return BackwardFlowBatch(w.copy(), np.zeros((rows, n_w)))
    n_state = rows * n_w * d

    def rhs(D, y):
        th = y[:n_state].reshape(rows, n_w, d)
        eps = D ** (1.0 / alpha)
        tv = np.maximum(u - D, 0.0)
        # catalog drifts are time-homogeneous, so one drift call serves every row
        if eps > 0:
            b = field.drift_eps(eps, float(tv[0]), th)
        else:
            b = field.drift(float(tv[0]), th)
        out = [-b.ravel()]
        if scale_integral:
            out.append(scale_alpha(tv[:, None], th).ravel())
        return np.concatenate(out)

    y0 = [w.ravel()]
    if scale_integral:
        y0.append(np.zeros(rows * n_w))
    y0 = np.concatenate(y0)
    order = np.unique(delta)
    first = min(cfg.first_step_cap, cfg.first_step_frac * dmax)
    sol = solve_ivp(rhs, (0.0, dmax), y0, method=cfg.method, rtol=cfg.rtol, atol=cfg.atol,
                    first_step=first, t_eval=order)
    if not sol.success:
        raise FlowIntegrationError(f"batched flow failed: {sol.message}", partial=(sol.t, sol.y))
    idx = np.searchsorted(order, delta)
    theta = np.empty((rows, n_w, d))
    acc = np.zeros((rows, n_w))
    for i in range(rows):
        col = sol.y[:, idx[i]]
        theta[i] = col[:n_state].reshape(rows, n_w, d)[i]
        if scale_integral:
            acc[i] = col[n_state:].reshape(rows, n_w)[i]
    return BackwardFlowBatch(theta, acc)


class BackwardTrajectory:
    """Dense backward trajectory c(u) = theta_{t,u}(y) for u in [u_min, t].

    Also carries A(u) = int_u^t scale(v, c(v))^alpha dv so that the frozen law at
    start time u has stable scale (|base|^alpha A(u))^{1/alpha} in d = 1.
    """

    def __init__(self, field: CoefficientField, alpha: float, t: float, y, u_min: float = 0.0,
                 config: FlowConfig | None = None):
        cfg = config or FlowConfig()
        self.t = float(t)
        self.alpha = alpha
        self.field = field
        y = np.asarray(y, dtype=float).reshape(field.d)
        self.y = y
        d = field.d
        span = self.t - u_min
        self.span = span
        if span <= 0:
            raise ValueError("need u_min < t")

        def rhs(D, st):
            th = st[:d]
            eps = D ** (1.0 / alpha)
            tv = self.t - D
            b = field.drift_eps(eps, tv, th[None, :])[0] if eps > 0 else field.drift(tv, th[None, :])[0]
            sa = abs(float(np.ravel(field.scale(tv, th[None, :]))[0])) ** alpha
            return np.concatenate([-b, [sa]])

        first = min(cfg.first_step_cap, cfg.first_step_frac * span)
        sol = solve_ivp(rhs, (0.0, span), np.concatenate([y, [0.0]]), method="DOP853", rtol=1e-11,
                        atol=1e-13, first_step=first, dense_output=True)
        if not sol.success:
            raise FlowIntegrationError(f"trajectory failed: {sol.message}")
        self._sol = sol

    def __call__(self, u):
        """(centre, scale integral) at start times u; shapes (..., d) and (...)."""
        u = np.asarray(u, dtype=float)
        D = np.clip(self.t - u, 0.0, self.span)
        vals = self._sol.sol(D.ravel())
        d = self.field.d
        c = vals[:d].T.reshape(u.shape + (d,))
        a = vals[d].reshape(u.shape)
        return c, a


def fit_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log ys against log xs."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def flow_suite(flow: FlowMap, x, spans=None, s: float = 0.0) -> dict:
    """Inverse identity, defect exponent and determinant-deviation exponent."""
    alpha = flow.alpha
    beta = flow.field.holder_drift[0]
    spans = np.asarray(spans if spans is not None else 2.0 ** -np.arange(6, 1, -1), dtype=float)
    x = np.asarray(x, dtype=float).reshape(flow.d)
    inv_err = 0.0
    defects, dets = [], []
    for h in spans:
        t = s + h
        for eps in (h ** (1 / alpha), 0.1, 1.0):
            fwd = flow.solve_regularized_flow(eps, s, t, x)
            back = flow.solve_regularized_flow(eps, t, s, fwd)
            inv_err = max(inv_err, float(np.linalg.norm(back - x)))
        defects.append(flow.approximate_flow_defect(s, s + h / 2, t, x))
        _, dinv = flow.flow_jacobian(s, t, x)
        dets.append(abs(dinv - 1.0))
    defects = np.maximum(np.asarray(defects), 1e-300)
    dets = np.maximum(np.asarray(dets), 1e-300)
    # central-difference round-off; deviations below it mean the determinant is exactly one
    det_noise = 64 * np.finfo(float).eps / flow.config.jacobian_step
    return {
        "spans": spans.tolist(),
        "inverse_error": inv_err,
        "defects": defects.tolist(),
        "defect_exponent": math.inf if np.all(defects <= 1e-14) else fit_loglog_slope(spans, defects),
        "defect_exponent_target": 1.0 / alpha - 0.1,
        "det_deviations": dets.tolist(),
        "det_exponent": math.inf if np.all(dets <= det_noise) else fit_loglog_slope(spans, dets),
        "det_exponent_target": (alpha + beta - 1.0) / alpha - 0.1,
    }
