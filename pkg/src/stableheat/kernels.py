"""Profile functions, space/space-time convolutions and the convolution inequalities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .flow import FlowMap


@dataclass(frozen=True)
class PhiSpec:
    """Parameters (eta, beta, gamma) of rho^{(eta)}_{beta,gamma}, with alpha and d."""

    eta: float
    beta: float
    gamma: float
    alpha: float
    d: int = 1

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


def _norm(x, d: int):
    x = np.asarray(x, dtype=float)
    if d == 1:
        return np.abs(x[..., 0]) if (x.ndim and x.shape[-1] == 1 and x.ndim > 1) else np.abs(x)
    return np.linalg.norm(x, axis=-1)


def rho_profile(spec: PhiSpec, t, x):
    """(1 ^ (t^{1/a}+|x|))^beta t^{gamma/a} / (t^{1/a}+|x|)^{d+eta}.

    In d = 1 ``x`` is an array of coordinates; for d >= 2 the last axis holds
    the components.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    a = spec.alpha
    h = t ** (1.0 / a) + _norm(x, spec.d)
    return np.minimum(1.0, h) ** spec.beta * t ** (spec.gamma / a) / h ** (spec.d + spec.eta)


def rho_profile_scaled(spec: PhiSpec, t, x):
    """Same function written as (1 ^ .)^beta t^{(gamma-eta)/a} t^{-d/a} (1 + |t^{-1/a} x|)^{-d-eta}."""
    t = np.asarray(t, dtype=float)
    a = spec.alpha
    r = _norm(x, spec.d)
    h = t ** (1.0 / a) + r
    base = t ** (-spec.d / a) * (1.0 + r * t ** (-1.0 / a)) ** (-spec.d - spec.eta)
    return np.minimum(1.0, h) ** spec.beta * t ** ((spec.gamma - spec.eta) / a) * base


def phi_profile(spec: PhiSpec, s: float, x, t: float, y, flow: FlowMap | None = None):
    """rho(t-s, x - theta_{t,s}(y)); ``flow=None`` means zero drift."""
    if not s < t:
        raise ValueError("need s < t")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    back = y if flow is None else flow.solve_flow(t, s, _as_points(y, spec.d))
    back = np.reshape(back, np.shape(y)) if spec.d == 1 else back
    return rho_profile(spec, t - s, _vec(x, spec.d) - _vec(back, spec.d))


def phi_profile_forward(spec: PhiSpec, s: float, x, t: float, y, flow: FlowMap | None = None):
    """rho(t-s, theta_{s,t}(x) - y), comparable to ``phi_profile``."""
    x = np.asarray(x, dtype=float)
    fwd = x if flow is None else flow.solve_flow(s, t, _as_points(x, spec.d))
    fwd = np.reshape(fwd, np.shape(x)) if spec.d == 1 else fwd
    return rho_profile(spec, t - s, _vec(fwd, spec.d) - _vec(y, spec.d))


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    return x[..., None] if d == 1 else x


def _vec(x, d):
    return np.asarray(x, dtype=float)


def beta_function(p: float, q: float) -> float:
    return float(special.beta(p, q))


# --------------------------------------------------------------------------
# quadrature grids


def gauss_jacobi_rule(s: float, t: float, a: float, b: float, n: int):
    """Nodes r_k and weights w_k on (s, t) with sum w_k f(r_k) ~ int f(r) (r-s)^{a-1} (t-r)^{b-1} dr."""
    if a <= 0 or b <= 0:
        raise ValueError("Jacobi exponents must be positive")
    x, w = special.roots_jacobi(n, b - 1.0, a - 1.0)
    h = t - s
    r = s + 0.5 * h * (x + 1.0)
    return r, w * (0.5 * h) ** (a + b - 1.0)


def graded_time_rule(s: float, t: float, a: float, b: float, n: int):
    """Weights for int F(r) dr when F behaves like (r-s)^{a-1} (t-r)^{b-1} at the ends."""
    r, w = gauss_jacobi_rule(s, t, a, b, n)
    return r, w / ((r - s) ** (a - 1.0) * (t - r) ** (b - 1.0))


def sinh_lattice(center: float, scale: float, n: int, zmax: float, a: float = 0.5):
    """Points center + scale * a * sinh(u), u uniform, reaching +- zmax * scale."""
    umax = math.asinh(zmax / a)
    u = np.linspace(-umax, umax, n)
    return center + scale * a * np.sinh(u)


def composite_lattice(centers, scales, n: int, zmax: float, a: float = 0.5):
    """Nodes and trapezoid weights for a lattice refined around several centres.

    The node density is the sum of the densities of sinh lattices around each
    centre, i.e. nodes are equally spaced in ``N(z) = sum_i asinh((z - c_i) / (a h_i))``.
    Because the map is smooth, the trapezoid rule in ``N`` keeps the accuracy of
    a single sinh lattice.  ``centers`` and ``scales`` have shape (rows, m) or
    (m,); the result has shape (rows, n) or (n,).
    """
    c = np.asarray(centers, dtype=float)
    h = np.asarray(scales, dtype=float)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    h = np.broadcast_to(np.atleast_2d(h), c.shape)
    ah = a * h
    lo = np.min(c - zmax * h, axis=1, keepdims=True)
    hi = np.max(c + zmax * h, axis=1, keepdims=True)

    m = c.shape[1]

    def N(z):
        return sum(np.arcsinh((z - c[:, j:j + 1]) / ah[:, j:j + 1]) for j in range(m))

    def N_dN(z):
        val = np.zeros_like(z)
        der = np.zeros_like(z)
        for j in range(m):
            q = (z - c[:, j:j + 1]) / ah[:, j:j + 1]
            val += np.arcsinh(q)
            der += 1.0 / (ah[:, j:j + 1] * np.sqrt(1.0 + q * q))
        return val, der

    v0, v1 = N(lo)[:, 0], N(hi)[:, 0]
    k = np.linspace(0.0, 1.0, n)
    v = v0[:, None] + (v1 - v0)[:, None] * k
    # starting guess: merge of dense individual lattices, inverted by interpolation
    umax = np.arcsinh(zmax / a)
    u = np.linspace(-umax, umax, n)
    g = np.concatenate([c[:, j:j + 1] + ah[:, j:j + 1] * np.sinh(u) for j in range(m)] + [lo, hi], axis=1)
    g = np.sort(np.clip(g, lo, hi), axis=1)
    gN = N(g)
    z = np.empty_like(v)
    for i in range(c.shape[0]):
        z[i] = np.interp(v[i], gN[i], g[i])
    zlo = np.broadcast_to(lo, z.shape).copy()
    zhi = np.broadcast_to(hi, z.shape).copy()
    for _ in range(60):
        val, der = N_dN(z)
        res = val - v
        step = res / der
        # stop on the Newton step: far nodes cannot resolve N below round-off
        done = (np.abs(res) <= 1e-13 * np.maximum(np.abs(v), 1.0)) | (
            np.abs(step) <= 1e-12 * (np.abs(z) + ah.min(axis=1, keepdims=True)))
        if np.all(done):
            break
        zlo = np.where(res < 0, z, zlo)
        zhi = np.where(res > 0, z, zhi)
        zn = z - step
        bad = (zn < zlo) | (zn > zhi)
        z = np.where(bad, 0.5 * (zlo + zhi), zn)
    der = N_dN(z)[1]
    dv = ((v1 - v0) / (n - 1))[:, None]
    w = dv / der
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    if single:
        return z[0], w[0]
    return z, w


@dataclass(frozen=True)
class ConvolutionGrid:
    """Time nodes graded at both ends and a space lattice around both flow centres."""

    n_time: int = 64
    n_space: int = 512  # points per lattice in d = 1 (split between the two centres)
    n_space_2d: int = 128  # points per axis in d = 2
    zmax: float = 2000.0  # lattice reach in units of the local scale
    a: float | None = None
    b: float | None = None


def space_convolve(f: Callable, g: Callable, s: float, x, r: float, t: float, y, alpha: float,
                   flow: FlowMap | None = None, grid: ConvolutionGrid = ConvolutionGrid()):
    """(f . g)_r(s,x,t,y) = int f(s,x,r,z) g(r,z,t,y) dz on a merged lattice (d = 1 or 2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x.shape[-1]
    c1 = x if flow is None else flow.solve_flow(s, r, x)
    c2 = y if flow is None else flow.solve_flow(t, r, y)
    h1 = max(r - s, 1e-300) ** (1 / alpha)
    h2 = max(t - r, 1e-300) ** (1 / alpha)
    if d == 1:
        z, w = composite_lattice([c1[0], c2[0]], [h1, h2], grid.n_space, grid.zmax)
        vals = f(s, x, r, z[:, None]) * g(r, z[:, None], t, y)
        return float(np.sum(vals * w))
    if d == 2:
        axes = [composite_lattice([c1[i], c2[i]], [h1, h2], grid.n_space_2d, grid.zmax) for i in range(2)]
        Z = np.stack(np.meshgrid(axes[0][0], axes[1][0], indexing="ij"), axis=-1)
        vals = f(s, x, r, Z) * g(r, Z, t, y)
        return float(np.einsum("ij,i,j->", vals, axes[0][1], axes[1][1]))
    raise ValueError("space convolution implemented for d <= 2")


def spacetime_convolve(f: Callable, g: Callable, s: float, x, t: float, y, alpha: float,
                       flow: FlowMap | None = None, grid: ConvolutionGrid = ConvolutionGrid(),
                       estimate_error: bool = False):
    """(f (x) g)(s,x,t,y) = int_s^t (f . g)_r dr with Gauss-Jacobi nodes.

    Returns ``(value, error_estimate)``; the estimate compares against half the
    node count when requested and is ``nan`` otherwise.
    """
    if not s < t:
        raise ValueError("need s < t")
    a = grid.a if grid.a is not None else 1.0
    b = grid.b if grid.b is not None else 1.0

    def run(n):
        r, w = graded_time_rule(s, t, a, b, n)
        vals = np.array([space_convolve(f, g, s, x, rk, t, y, alpha, flow, grid) for rk in r])
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite value inside the convolution")
        return float(np.sum(w * vals))

    val = run(grid.n_time)
    err = abs(val - run(max(4, grid.n_time // 2))) if estimate_error else math.nan
    return val, err


# --------------------------------------------------------------------------
# convolution inequality check


def _phi_fn(spec: PhiSpec, flow: FlowMap | None):
    def fn(s, x, t, z):
        zz = np.asarray(z, dtype=float)
        back = zz if flow is None else flow.solve_flow(t, s, zz)
        diff = np.asarray(x, dtype=float) - back
        return rho_profile(spec, t - s, diff[..., 0] if spec.d == 1 else diff)
    return fn


def convolution_hypothesis_ok(alpha: float, *betas: float) -> bool:
    """The convolution bounds are only proved for Hoelder indices beta <= alpha / 4."""
    return all(0 <= b <= alpha / 4 for b in betas)


def convolution_inequality_check(alpha: float, flow: FlowMap | None, n_draws: int = 100, seed: int = 0,
                                 T: float = 1.0, grid: ConvolutionGrid = ConvolutionGrid(n_time=32, n_space=400),
                                 d: int = 1, baseline: bool = True) -> dict:
    """Sampled worst ratios for the pointwise (.) bound and the (x) bound with Beta factor.

    Each draw picks (beta1, beta2) in [0, alpha/4], gamma_i > -beta_i, times
    s < r < t in [0, T] and points x, y covering diagonal and off-diagonal
    regimes.  When ``baseline`` is set the same draws are repeated with zero
    drift and beta = 0, gamma = alpha.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_draws):
        b1, b2 = rng.uniform(0, alpha / 4, 2)
        g1 = rng.uniform(-b1 + 0.1 * alpha, alpha)
        g2 = rng.uniform(-b2 + 0.1 * alpha, alpha)
        s = rng.uniform(0, 0.5 * T)
        t = rng.uniform(s + 0.05 * T, T)
        frac = rng.choice([rng.uniform(1e-3, 0.05), rng.uniform(0.05, 0.95), rng.uniform(0.95, 1 - 1e-3)])
        r = s + frac * (t - s)
        x = rng.normal(0, 1.0, d)
        off = (t - s) ** (1 / alpha) * rng.choice([0.0, 1.0, 5.0, 20.0]) * rng.normal(0, 1.0, d)
        rows.append((b1, b2, g1, g2, s, r, t, x, off))

    def ratios(params, fl):
        b1, b2, g1, g2, s, r, t, x, off = params
        centre = x if fl is None else fl.solve_flow(s, t, x)
        y = centre + off
        f1 = _phi_fn(PhiSpec(alpha, b1, 0.0, alpha, d), fl)
        f2 = _phi_fn(PhiSpec(alpha, b2, 0.0, alpha, d), fl)
        lhs30 = space_convolve(f1, f2, s, x, r, t, y, alpha, fl, grid)
        bm = min(b1, b2)
        rhs30 = (((r - s) ** ((b1 - alpha) / alpha) + (t - r) ** ((b2 - alpha) / alpha))
                 * float(_phi_fn(PhiSpec(alpha, bm, 0.0, alpha, d), fl)(s, x, t, y[None])[0]))
        h1 = _phi_fn(PhiSpec(alpha, b1, g1, alpha, d), fl)
        h2 = _phi_fn(PhiSpec(alpha, b2, g2, alpha, d), fl)
        gr = ConvolutionGrid(n_time=grid.n_time, n_space=grid.n_space, zmax=grid.zmax,
                             a=(b1 + g1) / alpha, b=(b2 + g2) / alpha)
        lhs31, _ = spacetime_convolve(h1, h2, s, x, t, y, alpha, fl, gr)
        bf = beta_function((b1 + g1) / alpha, (b2 + g2) / alpha)
        rhs31 = bf * float(_phi_fn(PhiSpec(alpha, bm, b1 + b2 + g1 + g2, alpha, d), fl)(s, x, t, y[None])[0])
        return lhs30 / rhs30, lhs31 / rhs31

    res = np.array([ratios(p, flow) for p in rows])
    out = {
        "n_draws": n_draws,
        "worst_pointwise_ratio": float(res[:, 0].max()),
        "worst_convolution_ratio": float(res[:, 1].max()),
        "finite": bool(np.all(np.isfinite(res))),
    }
    if baseline:
        base_rows = [(0.0, 0.0, alpha, alpha) + p[4:] for p in rows]
        bres = np.array([ratios(p, None) for p in base_rows])
        out["baseline_pointwise_ratio"] = float(bres[:, 0].max())
        out["baseline_convolution_ratio"] = float(bres[:, 1].max())
        out["pointwise_vs_baseline"] = out["worst_pointwise_ratio"] / out["baseline_pointwise_ratio"]
        out["convolution_vs_baseline"] = out["worst_convolution_ratio"] / out["baseline_convolution_ratio"]
    return out


def weighted_profile_gap(alpha: float, beta: float, t, x, d: int = 1):
    """|x|^beta rho^{(alpha+1)}_{0,alpha}(t,x) minus rho^{(alpha)}_{0,beta+alpha-1}(t,x); nonpositive."""
    lhs = _norm(x, d) ** beta * rho_profile(PhiSpec(alpha + 1, 0.0, alpha, alpha, d), t, x)
    rhs = rho_profile(PhiSpec(alpha, 0.0, beta + alpha - 1, alpha, d), t, x)
    return lhs - rhs
