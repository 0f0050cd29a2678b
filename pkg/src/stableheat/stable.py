"""Rotationally invariant stable laws, the stable subordinator, and frozen densities.

Normalisation: ``E exp(i xi . L_t) = exp(-t |xi|^alpha)``.  The subordinator
``S`` has Laplace transform ``exp(-t lambda^rho)`` with ``rho = alpha / 2`` and
``L_t = W_{2 S_t}`` for a standard Brownian motion ``W``, because
``E exp(i xi W_{2s}) = exp(-s |xi|^2)`` and ``(|xi|^2)^{alpha/2} = |xi|^alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special
from scipy.interpolate import CubicHermiteSpline


def levy_constant(d: int, alpha: float) -> float:
    """C_{d,alpha} with (-Delta)^{alpha/2} f = -C/2 int delta2_f(x;z) |z|^{-d-alpha} dz."""
    return (4.0 ** (alpha / 2) * math.gamma((d + alpha) / 2)
            / (math.pi ** (d / 2) * abs(math.gamma(-alpha / 2))))


@dataclass(frozen=True)
class StableLaw:
    alpha: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")

    @property
    def levy_constant(self) -> float:
        return levy_constant(self.d, self.alpha)

    @property
    def subordinator(self) -> "SubordinatorLaw":
        return SubordinatorLaw(self.alpha / 2)


@dataclass(frozen=True)
class SubordinatorLaw:
    rho: float
    coupling: float = 2.0  # L_t = W_{coupling * S_t}

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")


# --------------------------------------------------------------------------
# sampling


def _kanter_a(rho: float, u):
    return (np.sin(rho * u) ** (rho / (1 - rho)) * np.sin((1 - rho) * u)
            / np.sin(u) ** (1 / (1 - rho)))


def sample_subordinator_increment(rho: float, dt: float, rng: np.random.Generator, size=None):
    """Draw S_dt with E exp(-lambda S_dt) = exp(-dt lambda^rho) (Kanter's representation)."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    s1 = (_kanter_a(rho, u) / e) ** ((1 - rho) / rho)
    return dt ** (1.0 / rho) * s1


def sample_stable_increment(law: StableLaw, dt: float, rng: np.random.Generator, size=None):
    """Increment L_{t+dt} - L_t as sqrt(2 S_dt) * N(0, I_d); shape ``size + (d,)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    s = sample_subordinator_increment(law.alpha / 2, dt, rng, shape)
    g = rng.standard_normal(shape + (law.d,))
    return np.sqrt(2.0 * s)[..., None] * g


# --------------------------------------------------------------------------
# subordinator density


@lru_cache(maxsize=8)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _subordinator_density_unit(rho: float, r, n: int):
    x, w = _gl(n)
    u = 0.5 * math.pi * (x + 1.0)
    wu = 0.5 * math.pi * w
    a = _kanter_a(rho, u)
    k = rho / (1 - rho)
    r = np.asarray(r, dtype=float)
    rr = r[..., None]
    z = a * rr ** (-k)
    vals = np.where(z < 700, a * np.exp(-np.minimum(z, 700.0)), 0.0)
    return (k / math.pi) * rr[..., 0] ** (-k - 1) * np.sum(wu * vals, axis=-1)


def subordinator_density(rho: float, t: float, r, n_nodes: int = 512, return_error: bool = False):
    """Density of S_t at r from the single-integral representation over (0, pi).

    The integrand ``A(u) exp(-A(u) r^{-k})`` vanishes to all orders where A blows
    up, so Gauss-Legendre converges quickly; the error estimate is the change
    when the node count is doubled.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    c = t ** (1.0 / rho)
    val = _subordinator_density_unit(rho, r / c, n_nodes) / c
    if not return_error:
        return val
    fine = _subordinator_density_unit(rho, r / c, 2 * n_nodes) / c
    return val, float(np.max(np.abs(fine - val)))


# --------------------------------------------------------------------------
# one-dimensional standard profile g_alpha (exponent exp(-|xi|^alpha))


def _xi_nodes(alpha: float, xmax: float, scale: float = 1.0):
    """Quadrature nodes on (0, xi_max) for int cos(xi x) exp(-scale xi^alpha) d xi."""
    ximax = (39.0 / scale) ** (1.0 / alpha)
    lo = min(1.0, ximax) * 1e-10
    geo = np.geomspace(lo, min(1.0, ximax), 40)
    width = min(1.0, 4.0 / max(xmax, 1e-12), ximax / 64)
    n_lin = max(1, int(math.ceil((ximax - geo[-1]) / width)))
    lin = np.linspace(geo[-1], ximax, n_lin + 1)[1:] if ximax > geo[-1] else np.array([])
    brk = np.concatenate([[0.0], geo, lin])
    x, w = _gl(16)
    a, b = brk[:-1, None], brk[1:, None]
    nodes = (0.5 * (b - a) * (x + 1) + a).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


def _fourier_profile(alpha: float, x, orders=(0, 1, 2, 3), scale: float = 1.0, chunk: int = 256):
    """g^{(m)}(x) for m in orders by direct quadrature of the inverse Fourier integral."""
    x = np.asarray(x, dtype=float)
    xi, w = _xi_nodes(alpha, float(np.max(np.abs(x))) if x.size else 1.0, scale)
    damp = w * np.exp(-scale * xi ** alpha) / math.pi
    flat = x.ravel()
    out = {m: np.empty(flat.size) for m in orders}
    for i in range(0, flat.size, chunk):
        xs = flat[i:i + chunk]
        ph = np.outer(xs, xi)
        c, s = np.cos(ph), np.sin(ph)
        for m in orders:
            base = damp * xi ** m
            # d^m/dx^m cos(xi x) = xi^m Re(i^m e^{i xi x})
            if m % 4 == 0:
                v = c @ base
            elif m % 4 == 1:
                v = -(s @ base)
            elif m % 4 == 2:
                v = -(c @ base)
            else:
                v = s @ base
            out[m][i:i + chunk] = v
    return {m: v.reshape(x.shape) for m, v in out.items()}


class StableProfile:
    """Standard symmetric stable density in d=1 with derivatives up to order 2.

    Near the origin values come from cubic Hermite interpolation of a
    Fourier-quadrature table; beyond ``x0`` the classical power series in
    ``|x|^{-alpha k - 1}`` is summed (convergent for alpha <= 1, asymptotic above).
    """

    def __init__(self, alpha: float):
        if not 0 < alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        self.alpha = float(alpha)
        self._build_series()
        h = 0.005 if alpha < 0.8 else 0.01
        n = int(round(self.x0 / h))
        grid = np.linspace(0.0, self.x0, n + 1)
        vals = _fourier_profile(alpha, grid, orders=(0, 1, 2, 3))
        self.grid = grid
        self._splines = [CubicHermiteSpline(grid, vals[m], vals[m + 1]) for m in range(3)]

    def _build_series(self):
        a = self.alpha
        kmax = 400
        k = np.arange(1, kmax + 1, dtype=float)
        logmag = special.gammaln(a * k + 1) - special.gammaln(k + 1)
        sgn = (-1.0) ** (k + 1) * np.sin(math.pi * a * k / 2)
        if a >= 1.0:
            x0 = 20.0 if a < 1.9 else 30.0
        else:
            x0 = None
            for cand in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 20.0):
                mags = logmag - a * k * math.log(cand)
                if mags[-1] < math.log(1e-20) and mags.max() < math.log(1e4):
                    x0 = cand
                    break
            if x0 is None:
                x0 = 20.0
        mags = logmag - a * k * math.log(x0)
        if a >= 1.0:
            # asymptotic: stop at the smallest term
            kk = int(np.argmin(mags)) + 1
            below = np.nonzero(mags < math.log(1e-22))[0]
            if below.size:
                kk = min(kk, int(below[0]) + 1)
        else:
            below = np.nonzero(mags < math.log(1e-22))[0]
            kk = int(below[0]) + 1 if below.size else kmax
        self.x0 = x0
        self._k = k[:kk]
        self._logmag = logmag[:kk]
        self._sgn = sgn[:kk] / math.pi
        self._horner = {}

    def _series(self, ax, order: int):
        # Horner in y = |x|^{-alpha}: sum_k c_k y^k times |x|^{-1-order}
        coefs = self._horner.get(order)
        if coefs is None:
            p = -(self.alpha * self._k + 1.0)
            c = self._sgn * np.exp(self._logmag)
            for j in range(order):
                c = c * (p - j)
            coefs = self._horner[order] = c[::-1]
        y = ax ** (-self.alpha)
        acc = np.full_like(ax, coefs[0])
        for ck in coefs[1:]:
            acc = acc * y + ck
        return acc * y * ax ** (-1.0 - order)

    def derivative(self, x, order: int = 0):
        """g^{(order)}(x) for order in {0, 1, 2}."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = np.empty_like(ax)
        inner = ax <= self.x0
        if np.any(inner):
            out[inner] = self._splines[order](ax[inner])
        if np.any(~inner):
            out[~inner] = self._series(ax[~inner], order)
        if order % 2 == 1:
            out = np.where(x < 0, -out, out)
        return out

    def __call__(self, x):
        return self.derivative(x, 0)

    def frac_laplacian(self, x):
        """C/2 int delta2_g(x; h) |h|^{-1-alpha} dh, equal to -(g + x g') / alpha."""
        x = np.asarray(x, dtype=float)
        return -(self.derivative(x, 0) + x * self.derivative(x, 1)) / self.alpha

    def frac_laplacian_dx(self, x):
        x = np.asarray(x, dtype=float)
        return -(2.0 * self.derivative(x, 1) + x * self.derivative(x, 2)) / self.alpha


@lru_cache(maxsize=32)
def _profile_cached(alpha_key: float) -> StableProfile:
    return StableProfile(alpha_key)


def get_profile(alpha: float) -> StableProfile:
    return _profile_cached(round(float(alpha), 12))


# --------------------------------------------------------------------------
# frozen densities


@dataclass
class FrozenPath:
    """Deterministic coefficient path r -> a(r) (d x d).

    ``scalar`` paths have a(r) = scale(r) * base, which makes the law an affine
    image of an isotropic stable vector.
    """

    d: int
    alpha: float
    matrix: Callable[[float], np.ndarray] | None = None
    scale: Callable | None = None
    base: np.ndarray | None = None
    n_time: int = 64

    @classmethod
    def constant(cls, a, alpha: float) -> "FrozenPath":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(d=a.shape[0], alpha=alpha, scale=lambda r: np.ones_like(np.asarray(r, dtype=float)), base=a)

    @classmethod
    def scalar_path(cls, scale: Callable, base, alpha: float) -> "FrozenPath":
        base = np.atleast_2d(np.asarray(base, dtype=float))
        return cls(d=base.shape[0], alpha=alpha, scale=scale, base=base)

    @property
    def is_scalar(self) -> bool:
        return self.scale is not None

    def at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.is_scalar:
            return np.asarray(self.scale(r), dtype=float)[..., None, None] * self.base
        return np.stack([np.atleast_2d(self.matrix(float(ri))) for ri in r.ravel()]).reshape(r.shape + (self.d, self.d))

    def _time_rule(self, s: float, t: float):
        x, w = _gl(self.n_time)
        r = 0.5 * (t - s) * (x + 1) + s
        return r, 0.5 * (t - s) * w

    def scale_integral(self, s: float, t: float) -> float:
        """int_s^t scale(r)^alpha dr for scalar paths."""
        r, w = self._time_rule(s, t)
        return float(np.sum(w * np.abs(self.scale(r)) ** self.alpha))

    def exponent(self, s: float, t: float, xi):
        """Psi(xi) = int_s^t |a(r)^T xi|^alpha dr; xi has shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        r, w = self._time_rule(s, t)
        mats = self.at(r)  # (n, d, d)
        v = np.einsum("nji,...j->...ni", mats, xi)
        return np.sum(w * np.linalg.norm(v, axis=-1) ** self.alpha, axis=-1)

    def gaussian_covariance(self, r_grid, ell_increments):
        """C = sum_k (a a^T)(r_k) * dl_k for subordinator increments dl (paths, k)."""
        mats = self.at(r_grid)
        aat = np.einsum("kij,klj->kil", mats, mats)
        return np.einsum("pk,kij->pij", ell_increments, aat)


def _charfn_1d(psi_scale: float, alpha: float, x, order: int):
    # density of a 1-d law with exponent psi_scale * |xi|^alpha, by direct quadrature
    vals = _fourier_profile(alpha, x, orders=(order,), scale=psi_scale)
    return vals[order]


def _charfn_2d(path: FrozenPath, s: float, t: float, x, order: int, n_angle: int = 128):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    om = np.stack([np.cos(th), np.sin(th)], axis=-1)
    psi = path.exponent(s, t, om)
    out = []
    alpha = path.alpha
    for j in range(n_angle):
        proj = x @ om[j]
        xmax = float(np.max(np.abs(proj))) if proj.size else 1.0
        nodes, w = _xi_nodes(alpha, xmax * (psi[j] ** (1 / alpha)), 1.0)
        rho = nodes * psi[j] ** (-1.0 / alpha)
        wr = w * psi[j] ** (-1.0 / alpha) * np.exp(-psi[j] * rho ** alpha) * rho
        ph = np.outer(proj, rho)
        if order == 0:
            out.append(np.cos(ph) @ wr)
        elif order == 1:
            out.append(-(np.sin(ph) @ (wr * rho))[:, None] * om[j])
        else:
            out.append(-(np.cos(ph) @ (wr * rho ** 2))[:, None, None] * np.outer(om[j], om[j]))
    return np.sum(out, axis=0) / (n_angle * 2 * np.pi)


def frozen_density_mc(path: FrozenPath, s: float, t: float, x, n_paths: int = 20_000,
                      n_steps: int = 200, seed: int = 12345, order: int = 0):
    """Average of Gaussian densities over sampled subordinator clocks ell = 2 S."""
    x = np.asarray(x, dtype=float).reshape(-1, path.d)
    rng = np.random.Generator(np.random.Philox(key=seed))
    dt = (t - s) / n_steps
    r = s + dt * (np.arange(n_steps) + 0.5)
    ell = 2.0 * sample_subordinator_increment(path.alpha / 2, dt, rng, (n_paths, n_steps))
    cov = path.gaussian_covariance(r, ell)  # (P, d, d)
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    norm = (2 * np.pi) ** (-path.d / 2) / np.sqrt(det)
    res = []
    for xi in x:
        q = np.einsum("i,pij,j->p", xi, inv, xi)
        dens = norm * np.exp(-0.5 * q)
        if order == 0:
            res.append(dens.mean())
        elif order == 1:
            res.append(-(dens[:, None] * (inv @ xi)).mean(axis=0))
        else:
            v = inv @ xi
            res.append((dens[:, None, None] * (np.einsum("pi,pj->pij", v, v) - inv)).mean(axis=0))
    return np.array(res)


def frozen_density(path: FrozenPath, s: float, t: float, x, backend: str = "auto", **kw):
    """Density at x of int_s^t a(r) dL_r.

    Backends: ``profile`` (d=1 scalar paths, interpolated standard profile),
    ``charfn`` (direct Fourier inversion, d <= 2) and ``mc`` (subordination,
    any d).  ``x`` has shape (..., d) or (...) when d = 1.
    """
    return _frozen(path, s, t, x, backend, 0, **kw)


def frozen_density_derivative(path: FrozenPath, s: float, t: float, x, order: int, backend: str = "auto", **kw):
    """grad (order 1) or Hessian (order 2) of the frozen density."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    return _frozen(path, s, t, x, backend, order, **kw)


def _frozen(path: FrozenPath, s, t, x, backend, order, **kw):
    if not s < t:
        raise ValueError("need s < t")
    d = path.d
    if backend == "auto":
        backend = "profile" if (d == 1 and path.is_scalar) else ("charfn" if d <= 2 else "mc")
    if backend == "charfn" and d > 2:
        raise ValueError("charfn backend supports d <= 2 only")
    if backend == "profile" and not (d == 1 and path.is_scalar):
        raise ValueError("profile backend needs a scalar path in d = 1")
    x = np.asarray(x, dtype=float)
    if d == 1:
        xs = x
        if backend in ("profile", "charfn"):
            if path.is_scalar:
                psi = path.scale_integral(s, t) * abs(float(path.base[0, 0])) ** path.alpha
            else:
                psi = float(path.exponent(s, t, np.array([1.0])))
            sig = psi ** (1.0 / path.alpha)
            if backend == "profile":
                prof = get_profile(path.alpha)
                return prof.derivative(xs / sig, order) / sig ** (1 + order)
            return _charfn_1d(psi, path.alpha, xs, order)
        res = frozen_density_mc(path, s, t, np.reshape(xs, (-1, 1)), order=order, **kw)
        return res.reshape(np.shape(xs))
    pts = x.reshape(-1, d)
    if backend == "charfn":
        res = _charfn_2d(path, s, t, pts, order)
    elif backend == "mc":
        res = frozen_density_mc(path, s, t, pts, order=order, **kw)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    tail = () if order == 0 else ((d,) if order == 1 else (d, d))
    return res.reshape(x.shape[:-1] + tail)


def coefficient_perturbation_check(path_a: FrozenPath, path_b: FrozenPath, s: float, t: float, grid) -> dict:
    """Sup ratios of gradient and fractional-derivative differences against the profile bounds."""
    from .kernels import PhiSpec, rho_profile
    from .nonlocal_ops import fractional_derivative

    alpha = path_a.alpha
    grid = np.asarray(grid, dtype=float)
    tau = t - s
    r = np.linspace(s, t, 65)
    dist = float(np.max(np.abs(path_a.at(r) - path_b.at(r))))
    ga = frozen_density_derivative(path_a, s, t, grid, 1)
    gb = frozen_density_derivative(path_b, s, t, grid, 1)
    env1 = rho_profile(PhiSpec(alpha + 1, 0.0, alpha, alpha, 1), tau, grid)
    env0 = rho_profile(PhiSpec(alpha, 0.0, 0.0, alpha, 1), tau, grid)
    # the quadrature hands over points of shape (..., 1)
    diff = lambda z: frozen_density(path_a, s, t, z[..., 0]) - frozen_density(path_b, s, t, z[..., 0])
    hess = lambda z: (frozen_density_derivative(path_a, s, t, z[..., 0], 2)
                      - frozen_density_derivative(path_b, s, t, z[..., 0], 2))
    dfrac = fractional_derivative(diff, grid[:, None], alpha, scale=tau ** (1 / alpha),
                                  hessian=lambda z: hess(z)[..., None, None])
    safe = dist if dist > 0 else 1.0
    return {
        "sup_norm_difference": dist,
        "gradient_ratio": float(np.max(np.abs(ga - gb) / (safe * env1))),
        "fractional_ratio": float(np.max(np.abs(dfrac) / (safe * env0))),
        "gradient_sup_difference": float(np.max(np.abs(ga - gb))),
    }
