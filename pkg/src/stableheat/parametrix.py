"""Proxy density, perturbation kernel, q-series and the truncated heat kernel.

Two layers live here.

* Point routines (``proxy_density``, ``operator_K``, ``operator_B``, ``q0``) that
  work in any dimension through the frozen-density backends and polar
  quadrature.
* ``ParametrixEngine``: a d = 1 evaluator for a fixed terminal point (t, y).
  Writing ``Q_n(r, z) = q_n(r, z, t, y)``, the recursion
  ``Q_n(r, z) = int_r^t int q0(r, z, u, w) Q_{n-1}(u, w) dw du`` is tabulated on
  geometric time nodes ``tau = t - r`` and scaled space nodes
  ``zeta = (z - theta_{t,r}(y)) / tau^{1/alpha}``, and
  ``p_N(s, x) = p0(s, x) + sum_n int_s^t int p0(s, x, u, w) Q_n(u, w) dw du``.
  In d = 1 the frozen law is a scaled standard profile ``g``, so the nonlocal
  part of ``q0`` reduces to ``-(g + zeta g') / alpha`` exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .coeffs import CoefficientField, Scenario, kappa_factor
from .flow import BackwardTrajectory, FlowConfig, FlowMap, backward_flow_batch, _affine_flow
from .kernels import composite_lattice, convolution_hypothesis_ok, graded_time_rule, sinh_lattice
from .nonlocal_ops import DEFAULT_RULE, PolarRule, fractional_derivative, fractional_laplacian
from .stable import FrozenPath, frozen_density, frozen_density_derivative, get_profile


class ResolutionError(RuntimeError):
    """Quadrature resolution is insufficient (non-finite or non-positive output)."""


@dataclass
class ParametrixConfig:
    N: int = 2
    gamma1: float | None = None  # defaults to gamma0 / 2
    n_tau: int = 20
    tau_min_frac: float = 1e-4
    n_zeta: int = 121
    zeta_max: float = 1e4
    n_inner_time: int = 16
    n_final_time: int = 24
    final_left_exponent: float = 1.0
    n_lattice: int = 160
    lattice_zmax: float = 1e4
    n_scout: int = 200
    scout_zmax: float = 300.0
    scout_flow: FlowConfig = field(default_factory=lambda: FlowConfig(rtol=1e-7, atol=1e-10))
    n_density_grid: int = 401
    density_grid_zmax: float = 2000.0
    fd_time_frac: float = 1e-3
    # the correction terms' second x-derivative is taken by central differences at this
    # fraction of (t-s)^{1/alpha}; differentiating under the final time integral twice
    # leaves a (u-s)^{-2/alpha} singularity the graded rule does not resolve
    hessian_fd_frac: float = 0.05
    polar: PolarRule = DEFAULT_RULE

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be nonnegative")


@dataclass
class KernelEvaluation:
    """p_N at a batch of points with per-term magnitudes and an error estimate."""

    s: float
    x: np.ndarray
    t: float
    y: float
    value: np.ndarray
    p0: np.ndarray
    terms: np.ndarray  # (N+1, m): p0 (x) q_n contributions
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None

    @property
    def error_estimate(self) -> np.ndarray:
        return np.abs(self.terms[-1]) if len(self.terms) else np.zeros_like(self.value)

    @property
    def term_magnitudes(self) -> list:
        return [float(np.max(np.abs(tn))) for tn in self.terms]


# --------------------------------------------------------------------------
# generic point routines


class ProxyKernel:
    """Frozen proxy around the terminal point (t, y), any dimension.

    The frozen coefficient path is r -> a(r, theta_{t,r}(y)); the frozen drift
    path is r -> b_{(t-r)^{1/alpha}}(r, theta_{t,r}(y)).
    """

    def __init__(self, scenario: Scenario, t: float, y, s_min: float = 0.0, backend: str = "auto"):
        self.scenario = scenario
        self.field = scenario.field()
        self.alpha = scenario.alpha
        self.d = scenario.d
        self.t = float(t)
        self.y = np.asarray(y, dtype=float).reshape(self.d)
        self.backend = backend
        self.traj = BackwardTrajectory(self.field, self.alpha, self.t, self.y, u_min=min(s_min, t - 1e-12))
        self.flow = FlowMap(self.field, self.alpha, scenario.T)

    def centre(self, s: float):
        return self.traj(np.asarray(s, dtype=float))[0]

    def path(self) -> FrozenPath:
        f = self.field
        traj = self.traj

        def scale(r):
            r = np.asarray(r, dtype=float)
            c, _ = traj(r)
            return np.abs(f.scale(r, c))

        return FrozenPath.scalar_path(scale, f.base, self.alpha)

    def density(self, s: float, x, order: int = 0):
        """p0(s, x, t, y) (order 0), its gradient (1) or Hessian (2); x has shape (..., d)."""
        x = np.asarray(x, dtype=float)
        c = self.centre(s)
        path = self.path()
        if self.d == 1:
            xs = x[..., 0] - c[0]
            if order == 0:
                return frozen_density(path, s, self.t, xs, self.backend)
            v = frozen_density_derivative(path, s, self.t, xs, order, self.backend)
            return v[..., None] if order == 1 else v[..., None, None]
        if order == 0:
            return frozen_density(path, s, self.t, x - c, self.backend)
        return frozen_density_derivative(path, s, self.t, x - c, order, self.backend)

    def frozen_drift(self, s: float):
        c = self.centre(s)
        eps = (self.t - s) ** (1.0 / self.alpha)
        return self.field.drift_eps(eps, s, c[None, :])[0]

    def kappa(self, s: float, x, om):
        """kappa(s, x, omega) for directions om (k, d) at points x (m, d) -> (m, k)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sc = np.abs(self.field.scale(s, x)) ** self.alpha
        return sc[:, None] * kappa_factor(self.field, self.alpha, om)[None, :]


def proxy_density(scenario: Scenario, s: float, x, t: float, y, backend: str = "auto"):
    """p0(s, x, t, y) = p^{a^{(t,y)}}_{s,t}(x - theta_{t,s}(y))."""
    if not s < t:
        raise ValueError("need s < t")
    pk = ProxyKernel(scenario, t, y, s_min=s, backend=backend)
    return pk.density(s, np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, scenario.d))


def operator_K(scenario: Scenario, s: float, x, t: float, y, rule: PolarRule = DEFAULT_RULE, proxy: ProxyKernel | None = None):
    """C/2 int delta2_{p0}(x; z) (kappa(s,x,z) - kappa(s,theta_{t,s}(y),z)) |z|^{-d-alpha} dz by polar quadrature."""
    pk = proxy or ProxyKernel(scenario, t, y, s_min=s)
    d = scenario.d
    x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, d)
    c = pk.centre(s)
    f = lambda pts: pk.density(s, pts)
    hess = lambda pts: pk.density(s, pts, 2)
    scale = (t - s) ** (1.0 / scenario.alpha)
    weight = lambda om: pk.kappa(s, x, om) - pk.kappa(s, c[None, :], om)
    return fractional_laplacian(f, x, scenario.alpha, scale, hessian=hess, weight=weight, rule=rule)


def operator_B(scenario: Scenario, s: float, x, t: float, y, proxy: ProxyKernel | None = None):
    """(b(s,x) - b_{|t-s|^{1/alpha}}(s, theta_{t,s}(y))) . grad p0(s, x, t, y)."""
    pk = proxy or ProxyKernel(scenario, t, y, s_min=s)
    d = scenario.d
    x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, d)
    diff = pk.field.drift(s, x) - pk.frozen_drift(s)[None, :]
    grad = pk.density(s, x, 1).reshape(-1, d)
    return np.sum(diff * grad, axis=-1)


def q0(scenario: Scenario, s: float, x, t: float, y, rule: PolarRule = DEFAULT_RULE):
    """Perturbation kernel q0 = K p0 + B p0 at (s, x, t, y)."""
    pk = ProxyKernel(scenario, t, y, s_min=s)
    return operator_K(scenario, s, x, t, y, rule, pk) + operator_B(scenario, s, x, t, y, pk)


# --------------------------------------------------------------------------
# the d = 1 series engine


class ParametrixEngine:
    """Truncated parametrix series for a fixed terminal point (t, y) in d = 1."""

    def __init__(self, scenario: Scenario, t: float, y: float, config: ParametrixConfig | None = None,
                 s_min: float = 0.0):
        if scenario.d != 1:
            raise NotImplementedError("the series engine is implemented for d = 1; "
                                      "use the point routines for p0, K, B in higher dimension")
        self.scenario = scenario
        self.cfg = config or ParametrixConfig()
        self.field: CoefficientField = scenario.field()
        self.alpha = a = scenario.alpha
        self.t = float(t)
        self.y = float(np.ravel(y)[0])
        self.gamma0 = scenario.gamma0
        self.gamma1 = self.cfg.gamma1 if self.cfg.gamma1 is not None else self.gamma0 / 2
        if not 0 < self.gamma1 < self.gamma0:
            raise ValueError("gamma1 must lie in (0, gamma0)")
        if not convolution_hypothesis_ok(a, self.gamma0, self.gamma1):
            warnings.warn(f"gamma0 = {self.gamma0:.3g} exceeds alpha/4 = {a / 4:.3g}; the convolution bounds "
                          "behind the series are unproved there", RuntimeWarning, stacklevel=2)
        self.prof = get_profile(a)
        self.kap0 = abs(float(self.field.base[0, 0])) ** a
        self.s_min = min(float(s_min), self.t - 1e-9)
        self.traj = BackwardTrajectory(self.field, a, self.t, [self.y], u_min=self.s_min)
        aff = self.field.affine
        self.affine = aff
        self.space_free = self.field.space_free_dispersion
        self.drift_free = aff is not None and aff[0] == 0.0
        self.zero_q = self.space_free and self.drift_free
        self.zeta = sinh_lattice(0.0, 1.0, self.cfg.n_zeta, self.cfg.zeta_max)
        tau_max = self.t - self.s_min
        self.taus = np.geomspace(self.cfg.tau_min_frac * tau_max, tau_max, self.cfg.n_tau)
        self._V: dict[int, np.ndarray] = {}
        self._ready: dict[int, int] = {}
        self._zeta_a = 0.5
        self._u0 = -math.asinh(self.cfg.zeta_max / self._zeta_a)
        self._du = -2 * self._u0 / (self.cfg.n_zeta - 1)
        self._ltau0 = math.log(self.taus[0])
        self._dltau = math.log(self.taus[-1] / self.taus[0]) / (self.cfg.n_tau - 1)
        self._flat = (1 + self.zeta ** 2) ** ((1 + self.alpha) / 2)
        self._built = False
        self._density_cache: dict = {}
        self.flow = FlowMap(self.field, a, scenario.T)

    # ---------------------------------------------------------------- basics
    def centre(self, u):
        """(theta_{t,u}(y), frozen scale sigma(u)) for start times u."""
        c, A = self.traj(np.asarray(u, dtype=float))
        return c[..., 0], (self.kap0 * np.maximum(A, 1e-300)) ** (1.0 / self.alpha)

    def _kap(self, r, z):
        return self.kap0 * np.abs(self.field.scale(r, np.asarray(z, dtype=float)[..., None])) ** self.alpha

    def _b(self, r, z):
        return self.field.drift(r, np.asarray(z, dtype=float)[..., None])[..., 0]

    def _beps(self, eps, r, z):
        z = np.asarray(z, dtype=float)[..., None]
        out = self.field.drift_eps(eps, r, z) if eps > 0 else self.field.drift(r, z)
        return out[..., 0]

    def _q0_kernel(self, r, z, eps, theta, sigma):
        """q0(r, z, u, w) from the frozen centre theta = theta_{u,r}(w) and scale sigma."""
        a = self.alpha
        zeta = (z - theta) / sigma
        g1 = self.prof.derivative(zeta, 1)
        out = np.zeros(np.broadcast_shapes(np.shape(z), np.shape(theta)))
        if not self.space_free:
            g0 = self.prof.derivative(zeta, 0)
            lap = -(g0 + zeta * g1) / a
            out = out + (self._kap(r, z) - self._kap(r, theta)) * sigma ** (-1 - a) * lap
        if not self.drift_free:
            out = out + (self._b(r, z) - self._beps(eps, r, theta)) * g1 / sigma ** 2
        return out

    def p0(self, s: float, x, order: int = 0):
        c, sig = self.centre(s)
        x = np.asarray(x, dtype=float)
        return self.prof.derivative((x - c) / sig, order) / sig ** (1 + order)

    def Q0(self, r, z):
        c, sig = self.centre(r)
        eps = float(self.t - np.max(r)) ** (1.0 / self.alpha) if np.ndim(r) == 0 else None
        if eps is None:
            raise ValueError("Q0 expects a scalar time")
        return self._q0_kernel(r, z, eps, c, sig)

    # ---------------------------------------------------------------- flows
    def _pair_data(self, r: float, z: np.ndarray, u_nodes: np.ndarray):
        """Per u-node lattices in w with backward-flow centres and frozen scales."""
        a = self.alpha
        cfg = self.cfg
        delta = u_nodes - r
        cu, _ = self.centre(u_nodes)
        hu = (self.t - u_nodes) ** (1.0 / a)
        cr, _ = self.centre(r)
        hr = (self.t - r) ** (1.0 / a)
        out = []
        if self.affine is not None and self.space_free:
            lam, cc = self.affine[0], float(self.affine[1][0])
            xg, wg = np.polynomial.legendre.leggauss(32)
            for i, u in enumerate(u_nodes):
                dl = delta[i]
                wstar = _affine_flow(lam, cc, z, dl)
                vv = r + 0.5 * dl * (xg + 1)
                A = 0.5 * dl * np.sum(wg * np.abs(self.field.scale(vv, np.zeros((len(vv), 1)))) ** a)
                L, W = composite_lattice(np.stack([wstar, np.full_like(z, cu[i])], axis=1),
                                         np.stack([np.full_like(z, dl ** (1 / a)), np.full_like(z, hu[i])], axis=1),
                                         cfg.n_lattice, cfg.lattice_zmax)
                theta = _affine_flow(lam, cc, L, -dl)
                sig = np.full_like(L, (self.kap0 * A) ** (1 / a))
                out.append((L, W, theta, sig, dl ** (1 / a)))
            return out
        S, _ = composite_lattice(np.stack([np.full(len(u_nodes), cr), cu], axis=1),
                                 np.stack([np.full(len(u_nodes), hr), hu], axis=1), cfg.n_scout, cfg.scout_zmax)
        batch = backward_flow_batch(self.field, a, u_nodes, delta, S[..., None], cfg.scout_flow)
        thS = batch.theta[..., 0]
        AS = batch.scale_integral
        for i in range(len(u_nodes)):
            dl = delta[i]
            Si, ti = S[i], thS[i]
            if np.any(np.diff(ti) <= 0):
                raise ResolutionError("backward flow lost monotonicity on the scout lattice")
            wstar = _interp_linear_ends(z, ti, Si)
            L, W = composite_lattice(np.stack([wstar, np.full_like(z, cu[i])], axis=1),
                                     np.stack([np.full_like(z, dl ** (1 / a)), np.full_like(z, hu[i])], axis=1),
                                     cfg.n_lattice, cfg.lattice_zmax)
            Lc = np.clip(L, Si[0], Si[-1])
            dsp = ti - Si
            theta = L + np.where(L == Lc, CubicSpline(Si, dsp)(Lc), _interp_linear_ends(L, Si, dsp))
            if self.space_free:
                A = np.full_like(L, AS[i, 0])
            else:
                A = CubicSpline(Si, AS[i])(Lc)
            sig = (self.kap0 * np.maximum(A, 1e-300)) ** (1 / a)
            out.append((L, W, theta, sig, dl ** (1 / a)))
        return out

    # --------------------------------------------------------------- tables
    def _lam(self, n: int) -> float:
        return 1.0 + 1.0 / self.alpha - (n + 1) * self.gamma0 / self.alpha

    def _Qtab(self, n: int, u, w):
        """Interpolated Q_n(u, w) for n >= 1 (u scalar, w array).

        Tables hold Q_n * tau^{lam_n} * (1 + zeta^2)^{(1+alpha)/2}; both grid axes are
        uniform (log tau and asinh zeta), so 4-point Lagrange stencils are used.
        Outside the zeta range the flattened value is held constant.
        """
        V = self._V[n]
        a = self.alpha
        tau = self.t - float(u)
        c, _ = self.centre(u)
        zeta = (np.asarray(w, dtype=float) - c) / tau ** (1 / a)
        ready = self._ready.get(n, len(self.taus))
        # time axis
        ft = (math.log(max(tau, 1e-300)) - self._ltau0) / self._dltau
        ft = min(max(ft, 0.0), ready - 1.0)
        wt, kt = _lagrange4(np.array([ft]), ready)
        row = np.einsum("k,kz->z", wt[0], V[kt[0]])
        # space axis
        fz = (np.arcsinh(zeta / self._zeta_a) - self._u0) / self._du
        fz = np.clip(fz, 0.0, len(self.zeta) - 1.0)
        wz, kz = _lagrange4(fz, len(self.zeta))
        flat = np.sum(wz * row[kz], axis=-1)
        return flat * (1 + zeta * zeta) ** (-(1 + a) / 2) * tau ** (-self._lam(n))

    def build(self):
        """Tabulate Q_1..Q_N on the (tau, zeta) grid, working outward from tau -> 0."""
        if self._built:
            return
        N = self.cfg.N
        a = self.alpha
        if self.zero_q or N == 0:
            self._built = True
            return
        for n in range(1, N + 1):
            self._V[n] = np.zeros((len(self.taus), len(self.zeta)))
        a_in = min(1.0, self.gamma0 / a)
        for j, tau in enumerate(self.taus):
            r = self.t - tau
            c, _ = self.centre(r)
            z = c + tau ** (1 / a) * self.zeta
            un, uw = graded_time_rule(r, self.t, a_in, a_in, self.cfg.n_inner_time)
            pairs = self._pair_data(r, z, un)
            kers = [self._q0_kernel(r, z[:, None], eps, th, sg) * W for (L, W, th, sg, eps) in pairs]
            for n in range(1, N + 1):
                acc = np.zeros(len(z))
                for i, (L, W, th, sg, eps) in enumerate(pairs):
                    prev = self.Q0(float(un[i]), L) if n == 1 else self._Qtab(n - 1, un[i], L)
                    acc += uw[i] * np.sum(kers[i] * prev, axis=1)
                if not np.all(np.isfinite(acc)):
                    raise ResolutionError(f"non-finite q_{n} table entry")
                self._V[n][j] = acc * tau ** self._lam(n) * self._flat
                self._ready[n] = j + 1
        self._built = True

    def Qn(self, n: int, r: float, z):
        """q_n(r, z, t, y)."""
        if n == 0:
            return self.Q0(float(r), np.asarray(z, dtype=float))
        self.build()
        if self.zero_q:
            return np.zeros_like(np.asarray(z, dtype=float))
        return self._Qtab(n, r, np.asarray(z, dtype=float))

    # ------------------------------------------------------------ evaluation
    def evaluate(self, s: float, x, order: int = 0) -> KernelEvaluation:
        """p_N(s, x, t, y) with derivatives in x up to ``order`` (0, 1 or 2)."""
        if not s < self.t:
            raise ValueError("need s < t")
        if s < self.s_min - 1e-12:
            raise ValueError("s below the engine's tabulated range")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        N = self.cfg.N
        base = [self.p0(s, x, k) for k in range(order + 1)]
        terms = np.zeros((order + 1, N + 1, len(x)))
        if order >= 2 and not self.zero_q:
            ev = self.evaluate(s, x, order=1)
            dx = self.cfg.hessian_fd_frac * (self.t - s) ** (1 / self.alpha)
            vp = self.evaluate(s, x + dx).value
            vm = self.evaluate(s, x - dx).value
            return KernelEvaluation(
                s=ev.s, x=x, t=self.t, y=self.y, value=ev.value, p0=ev.p0, terms=ev.terms,
                gradient=ev.gradient, hessian=(vp + vm - 2 * ev.value) / dx ** 2,
            )
        if not self.zero_q:
            self.build()
            a = self.alpha
            bexp = min(1.0, self.gamma0 / a)
            un, uw = graded_time_rule(s, self.t, self.cfg.final_left_exponent, bexp, self.cfg.n_final_time)
            pairs = self._pair_data(s, x, un)
            for i, (L, W, th, sg, eps) in enumerate(pairs):
                zeta = (x[:, None] - th) / sg
                G = [self.prof.derivative(zeta, k) / sg ** (1 + k) * W for k in range(order + 1)]
                u = float(un[i])
                for n in range(N + 1):
                    Q = self.Q0(u, L) if n == 0 else self._Qtab(n, u, L)
                    for k in range(order + 1):
                        terms[k, n] += uw[i] * np.sum(G[k] * Q, axis=1)
        vals = [base[k] + terms[k].sum(axis=0) for k in range(order + 1)]
        if not np.all(np.isfinite(vals[0])):
            raise ResolutionError("non-finite p_N")
        return KernelEvaluation(
            s=float(s), x=x, t=self.t, y=self.y, value=vals[0], p0=base[0], terms=terms[0],
            gradient=vals[1] if order >= 1 else None, hessian=vals[2] if order >= 2 else None,
        )

    def density_function(self, s: float):
        """Callable x -> p_N(s, x) built from a Hermite spline on a wide sinh grid.

        Beyond the grid the density is continued with the power law |x|^{-1-alpha}.
        """
        key = round(float(s), 14)
        hit = self._density_cache.get(key)
        if hit is not None:
            return hit
        c, sig = self.centre(s)
        h = (self.t - s) ** (1 / self.alpha)
        grid = c + h * sinh_lattice(0.0, 1.0, self.cfg.n_density_grid, self.cfg.density_grid_zmax)
        ev = self.evaluate(s, grid, order=1)
        spl = CubicHermiteSpline(grid, ev.value, ev.gradient)
        lo, hi = grid[0], grid[-1]
        plo, phi = ev.value[0], ev.value[-1]
        a = self.alpha

        def f(pts):
            pts = np.asarray(pts, dtype=float)
            xs = pts[..., 0] if pts.ndim and pts.shape[-1] == 1 else pts
            out = spl(np.clip(xs, lo, hi))
            # outside the grid |x - c| exceeds the end distance, so the clipped ratio is exact there
            r_hi = np.minimum(np.abs(hi - c) / np.maximum(np.abs(xs - c), 1e-300), 1.0)
            r_lo = np.minimum(np.abs(lo - c) / np.maximum(np.abs(xs - c), 1e-300), 1.0)
            out = np.where(xs > hi, phi * r_hi ** (1 + a), out)
            return np.where(xs < lo, plo * r_lo ** (1 + a), out)

        self._density_cache[key] = f
        return f


def _interp_linear_ends(x, xp, fp):
    """np.interp continued linearly with the end slopes instead of held constant."""
    x = np.asarray(x, dtype=float)
    out = np.interp(x, xp, fp)
    lo_slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
    hi_slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
    out = np.where(x < xp[0], fp[0] + lo_slope * (x - xp[0]), out)
    return np.where(x > xp[-1], fp[-1] + hi_slope * (x - xp[-1]), out)


def _lagrange4(f, n: int):
    """Weights and indices of 4-point Lagrange interpolation at fractional positions f on 0..n-1."""
    f = np.asarray(f, dtype=float)
    if n < 4:
        k0 = np.clip(np.floor(f).astype(int), 0, max(n - 2, 0))
        k1 = np.minimum(k0 + 1, n - 1)
        t = f - k0
        return np.stack([1 - t, t], axis=-1), np.stack([k0, k1], axis=-1)
    k0 = np.clip(np.floor(f).astype(int) - 1, 0, n - 4)
    t = f - k0
    w = np.stack([
        -(t - 1) * (t - 2) * (t - 3) / 6,
        t * (t - 2) * (t - 3) / 2,
        -t * (t - 1) * (t - 3) / 2,
        t * (t - 1) * (t - 2) / 6,
    ], axis=-1)
    return w, k0[..., None] + np.arange(4)


@lru_cache(maxsize=64)
def _engine_cached(scenario: Scenario, t: float, y: float, N: int, s_min: float) -> ParametrixEngine:
    return ParametrixEngine(scenario, t, y, ParametrixConfig(N=N), s_min=s_min)


def get_engine(scenario: Scenario, t: float, y: float, N: int = 2, s_min: float = 0.0,
               config: ParametrixConfig | None = None) -> ParametrixEngine:
    if config is not None:
        return ParametrixEngine(scenario, t, y, config, s_min=s_min)
    return _engine_cached(scenario, float(t), float(y), int(N), float(s_min))


# --------------------------------------------------------------------------
# operations on the truncated kernel


def q_series(scenario: Scenario, s: float, x, t: float, y, N: int = 2, engine: ParametrixEngine | None = None):
    """(sum_{n<=N} q_n(s, x, t, y), [q_0, ..., q_N]) at points x."""
    eng = engine or get_engine(scenario, t, y, N, s_min=s)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    terms = [eng.Qn(n, s, x) for n in range(N + 1)]
    return np.sum(terms, axis=0), terms


def truncated_density(scenario: Scenario, s: float, x, t: float, y, N: int = 2, order: int = 0,
                      engine: ParametrixEngine | None = None) -> KernelEvaluation:
    eng = engine or get_engine(scenario, t, y, N, s_min=s)
    return eng.evaluate(s, x, order)


def density_gradient(scenario: Scenario, s: float, x, t: float, y, N: int = 2, engine: ParametrixEngine | None = None,
                     check: bool = True) -> dict:
    """Analytic grad_x p_N with a central finite-difference cross-check."""
    eng = engine or get_engine(scenario, t, y, N, s_min=s)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ev = eng.evaluate(s, x, order=1)
    out = {"gradient": ev.gradient, "value": ev.value}
    if check:
        h = 1e-4 * (t - s) ** (1 / scenario.alpha)
        fd = (eng.evaluate(s, x + h).value - eng.evaluate(s, x - h).value) / (2 * h)
        rel = np.abs(fd - ev.gradient) / np.maximum(np.abs(ev.gradient), 1e-3 * np.max(np.abs(ev.value)))
        out["finite_difference"] = fd
        out["relative_disagreement"] = rel
        out["flagged"] = bool(np.any((rel > 0.05) & (ev.value > 1e-3)))
    return out


def pN_fractional_derivative(engine: ParametrixEngine, s: float, x, rule: PolarRule = DEFAULT_RULE):
    """D^{(alpha)} p_N(s, ., t, y)(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f = engine.density_function(s)
    ev = engine.evaluate(s, x, order=2)
    hv = {float(k): v for k, v in zip(x, ev.hessian)}
    hess = lambda pts: np.array([hv[float(p)] for p in np.ravel(pts)])[:, None, None]
    scale = (engine.t - s) ** (1 / engine.alpha)
    return fractional_derivative(f, x[:, None], engine.alpha, scale, hessian=hess, rule=rule)


def generator_apply(engine: ParametrixEngine, s: float, x, rule: PolarRule = DEFAULT_RULE):
    """L_s p_N(s, ., t, y)(x) with the full kernel kappa(s, x, z) and drift b(s, x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f = engine.density_function(s)
    ev = engine.evaluate(s, x, order=2)
    hv = {float(k): v for k, v in zip(x, ev.hessian)}
    hess = lambda pts: np.array([hv[float(p)] for p in np.ravel(pts)])[:, None, None]
    scale = (engine.t - s) ** (1 / engine.alpha)
    lap = fractional_laplacian(f, x[:, None], engine.alpha, scale, hessian=hess, rule=rule)
    return engine._kap(s, x) * lap + engine._b(s, x) * ev.gradient


def kolmogorov_residual(scenario: Scenario, s: float, x, t: float, y, N: int = 2,
                        engine: ParametrixEngine | None = None, rule: PolarRule = DEFAULT_RULE):
    """|d_s p_N + L_s p_N| / (p_N / (t - s)) at points x."""
    eng = engine or get_engine(scenario, t, y, N, s_min=max(0.0, s - 0.01 * (t - s)))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = eng.cfg.fd_time_frac * (t - s)
    if s - h < eng.s_min:
        raise ValueError("engine range does not cover the finite-difference stencil")
    dp = (eng.evaluate(s + h, x).value - eng.evaluate(s - h, x).value) / (2 * h)
    gen = generator_apply(eng, s, x, rule)
    p = eng.evaluate(s, x).value
    return np.abs(dp + gen) / (p / (t - s))


def frozen_kolmogorov_residual(scenario: Scenario, s: float, x, t: float, y, rule: PolarRule = DEFAULT_RULE):
    """Residual of the frozen backward equation for p0 (frozen generator, frozen drift)."""
    eng = ParametrixEngine(scenario, t, y, ParametrixConfig(N=0), s_min=max(0.0, s - 0.01 * (t - s)))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = eng.cfg.fd_time_frac * (t - s)
    dp = (eng.p0(s + h, x) - eng.p0(s - h, x)) / (2 * h)
    c, sig = eng.centre(s)
    f = lambda pts: eng.p0(s, pts[..., 0])
    hess = lambda pts: eng.p0(s, pts[..., 0], 2)[..., None, None]
    lap = fractional_laplacian(f, x[:, None], eng.alpha, sig, hessian=hess, rule=rule)
    kap_frozen = eng._kap(s, np.array([c]))[0]
    b_frozen = eng._beps((t - s) ** (1 / eng.alpha), s, np.array([c]))[0]
    gen = kap_frozen * lap + b_frozen * eng.p0(s, x, 1)
    return np.abs(dp + gen) / (eng.p0(s, x) / (t - s))


def mass_function(scenario: Scenario, s: float, t: float, x, with_fractional: bool = True,
                  n_lattice: int = 400, rule: PolarRule = DEFAULT_RULE) -> dict:
    """h_{s,t}(x) = int p0(s, x, t, y) dy and D^{(alpha)} h_{s,t}(x) (d = 1)."""
    if scenario.d != 1:
        raise NotImplementedError("mass function implemented for d = 1")
    field = scenario.field()
    a = scenario.alpha
    kap0 = abs(float(field.base[0, 0])) ** a
    prof = get_profile(a)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = (t - s) ** (1 / a)
    fm = FlowMap(field, a, scenario.T)
    xc = float(np.median(x))
    yc = float(fm.solve_flow(s, t, np.array([xc]))[0])
    # flows theta_{t,s}(y) on a scout lattice of terminal points
    S, _ = composite_lattice(np.array([yc]), np.array([h]), 2000, 1e5)
    batch = backward_flow_batch(field, a, np.array([t]), np.array([t - s]), S[None, :, None])
    th = batch.theta[0, :, 0]
    A = batch.scale_integral[0]
    if np.any(np.diff(th) <= 0):
        raise ResolutionError("backward flow lost monotonicity")
    disp = CubicSpline(S, th - S)
    Aspl = CubicSpline(S, A)

    def h_of(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ystar = np.interp(xs, th, S)
        L, W = composite_lattice(ystar[:, None], np.full((len(xs), 1), h), n_lattice, 1e4)
        Lc = np.clip(L, S[0], S[-1])
        theta = L + disp(Lc)
        sig = (kap0 * np.maximum(Aspl(Lc), 1e-300)) ** (1 / a)
        return np.sum(prof((xs[:, None] - theta) / sig) / sig * W, axis=1)

    out = {"h": h_of(x)}
    if with_fractional:
        grid = xc + h * sinh_lattice(0.0, 1.0, 401, 2000.0)
        hv = h_of(grid)
        spl = CubicSpline(grid, hv)
        f = lambda pts: spl(np.clip(np.asarray(pts)[..., 0], grid[0], grid[-1]))
        out["fractional"] = fractional_derivative(f, x[:, None], a, h, rule=rule)
        out["scaled_fractional"] = out["fractional"] * (t - s) ** (1 - scenario.gamma0 / a)
    return out


def chapman_kolmogorov_residual(scenario: Scenario, s: float, r: float, t: float, x: float, y: float, N: int = 2,
                                n_nodes: int = 48, config: ParametrixConfig | None = None) -> float:
    """|int p_N(s,x,r,z) p_N(r,z,t,y) dz - p_N(s,x,t,y)| / p_N(s,x,t,y)."""
    if not s < r < t:
        raise ValueError("need s < r < t")
    a = scenario.alpha
    cfg = config or ParametrixConfig(N=N)
    eng_t = ParametrixEngine(scenario, t, y, cfg, s_min=s)
    fm = FlowMap(scenario.field(), a, scenario.T)
    c1 = float(fm.solve_flow(s, r, np.array([x]))[0])
    c2 = float(eng_t.centre(r)[0])
    z, w = composite_lattice(np.array([c1, c2]), np.array([(r - s) ** (1 / a), (t - r) ** (1 / a)]), n_nodes, 300.0)
    right = eng_t.evaluate(r, z).value
    left = np.array([ParametrixEngine(scenario, r, zk, cfg, s_min=s).evaluate(s, np.array([x])).value[0] for zk in z])
    direct = eng_t.evaluate(s, np.array([x])).value[0]
    return float(abs(np.sum(left * right * w) - direct) / direct)
