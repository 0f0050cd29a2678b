"""Coefficient fields, hypothesis checks and drift mollification.

Coefficients come from a small built-in catalog so that scenarios are plain
JSON.  Every dispersion in the catalog has the form ``a(t, x) = scale(t, x) * A0``
with a constant matrix ``A0``; the nonlocal kernel then factorises as
``kappa(s, x, z) = scale(s, x)**alpha * kappa_A0(z)``, which the parametrix
engine exploits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate


class EllipticityError(ValueError):
    """Raised when a dispersion matrix is singular or violates ellipticity."""


@dataclass(frozen=True)
class Scenario:
    d: int
    alpha: float
    beta: float
    gamma: float
    kappa0: float = 1.0
    kappa1: float = 1.0
    T: float = 1.0
    drift_id: str = "zero"
    drift_params: tuple = ()
    dispersion_id: str = "identity"
    dispersion_params: tuple = ()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be a positive integer")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        lo = max(1.0 - self.alpha, 0.0)
        for name in ("beta", "gamma"):
            v = getattr(self, name)
            if not lo < v <= 1.0:
                raise ValueError(f"{name}={v} outside (({lo:.3g}), 1]")
        if self.kappa0 < 1.0 or self.kappa1 < 1.0:
            raise ValueError("kappa0 and kappa1 must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "drift_params", tuple(float(p) for p in self.drift_params))
        object.__setattr__(self, "dispersion_params", tuple(float(p) for p in self.dispersion_params))

    @property
    def theta(self) -> tuple:
        """The parameter tuple (kappa0, kappa1, d, alpha, beta, gamma)."""
        return (self.kappa0, self.kappa1, self.d, self.alpha, self.beta, self.gamma)

    @property
    def gamma0(self) -> float:
        return min(self.alpha + self.beta - 1.0, self.gamma)

    def field(self) -> "CoefficientField":
        return build_field(self)

    def to_dict(self) -> dict:
        return {
            "d": self.d, "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "kappa0": self.kappa0, "kappa1": self.kappa1, "T": self.T,
            "drift": {"id": self.drift_id, "params": list(self.drift_params)},
            "dispersion": {"id": self.dispersion_id, "params": list(self.dispersion_params)},
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "Scenario":
        drift = cfg.get("drift", {"id": "zero", "params": []})
        disp = cfg.get("dispersion", {"id": "identity", "params": []})
        return cls(
            d=int(cfg["d"]), alpha=float(cfg["alpha"]), beta=float(cfg["beta"]),
            gamma=float(cfg["gamma"]), kappa0=float(cfg.get("kappa0", 1.0)),
            kappa1=float(cfg.get("kappa1", 1.0)), T=float(cfg.get("T", 1.0)),
            drift_id=drift["id"], drift_params=tuple(drift.get("params", ())),
            dispersion_id=disp["id"], dispersion_params=tuple(disp.get("params", ())),
        )


# --------------------------------------------------------------------------
# mollifier


def _bump(r2):
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def _bump_mass(d: int) -> float:
    # radial integral of exp(-1/(1-r^2)) times the sphere area
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    f = lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0
    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return area * val


@dataclass(frozen=True)
class Mollifier:
    """Smooth radial bump on the unit ball with a fixed quadrature rule.

    ``nodes`` has shape (n, d) and ``weights`` already include the bump value,
    so that ``b_eps(x) = sum_i weights[i] * b(x - eps * nodes[i])``.
    """

    d: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    raw_weight_sum: float = 1.0

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return _bump(np.sum(x * x, axis=-1)) / _bump_mass(self.d)

    def grad_l1(self) -> float:
        return grad_rho_l1(self.d)


@lru_cache(maxsize=None)
def make_mollifier(d: int, n_axis: int = 32, mc_nodes: int = 100_000, seed: int = 20240101) -> Mollifier:
    if d <= 2:
        x, w = np.polynomial.legendre.leggauss(n_axis)
        grids = np.meshgrid(*([x] * d), indexing="ij")
        wgrids = np.meshgrid(*([w] * d), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        wq = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        vals = _bump(np.sum(nodes ** 2, axis=-1)) / _bump_mass(d)
        keep = vals > 0
        nodes, weights = nodes[keep], (wq * vals)[keep]
    else:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((mc_nodes, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.random(mc_nodes) ** (1.0 / d)
        nodes = g * r[:, None]
        vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        weights = vol / mc_nodes * _bump(r ** 2) / _bump_mass(d)
    raw = float(weights.sum())
    # the discrete rule is renormalised so that constants are reproduced exactly
    return Mollifier(d=d, nodes=nodes, weights=weights / raw, raw_weight_sum=raw)


@lru_cache(maxsize=None)
def grad_rho_l1(d: int) -> float:
    """||grad rho||_{L^1} for the bump; radial formula, computed once."""
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)

    def f(r):
        if r >= 1.0:
            return 0.0
        q = 1.0 - r * r
        return r ** (d - 1) * math.exp(-1.0 / q) * 2.0 * r / (q * q)

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-14, limit=200)
    return area * val / _bump_mass(d)


@lru_cache(maxsize=None)
def _marginal_rule(d: int):
    # Gauss-Legendre rule for the first-coordinate marginal of the bump
    x, w = np.polynomial.legendre.leggauss(200)
    if d == 1:
        dens = _bump(x * x) / _bump_mass(1)
    else:
        dens = np.array([_marginal(d, xi) for xi in x])
    return x, w * dens


def _marginal(d: int, u1: float) -> float:
    if abs(u1) >= 1:
        return 0.0
    rmax = math.sqrt(1 - u1 * u1)
    area = 2.0 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)
    f = lambda r: r ** (d - 2) * math.exp(-1.0 / (1.0 - u1 * u1 - r * r)) if r < rmax else 0.0
    val, _ = integrate.quad(f, 0.0, rmax, epsabs=1e-15, limit=200)
    return area * val / _bump_mass(d)


def cos_moment(d: int, k):
    """Fourier multiplier of the bump along one axis: int rho(u) cos(k u_1) du."""
    x, w = _marginal_rule(d)
    k = np.asarray(k, dtype=float)
    return np.cos(k[..., None] * x) @ w


# --------------------------------------------------------------------------
# catalog


@dataclass
class CoefficientField:
    """Drift b(t, x) and dispersion a(t, x) = scale(t, x) * base.

    ``drift`` maps arrays of shape (..., d) to (..., d); ``scale`` maps them to
    (...,).  ``mollified`` is an optional closed-form b_eps; when absent the
    generic ball quadrature is used.
    """

    d: int
    drift: Callable
    scale: Callable
    base: np.ndarray
    holder_drift: tuple
    holder_disp: tuple
    mollified: Callable | None = None
    drift_id: str = ""
    dispersion_id: str = ""
    linear_drift: float | None = None
    constant_dispersion: bool = False
    affine: tuple | None = None  # (lam, c) when b(t, x) = lam x + c
    space_free_dispersion: bool = False  # scale depends on t only

    def dispersion(self, t, x):
        x = np.asarray(x, dtype=float)
        sc = np.asarray(self.scale(t, x), dtype=float)
        return sc[..., None, None] * self.base

    def drift_eps(self, eps, t, x):
        """b_eps(t, x); closed form when the catalog entry provides one."""
        if eps <= 0:
            return self.drift(t, np.asarray(x, dtype=float))
        if self.mollified is not None:
            return self.mollified(eps, t, np.asarray(x, dtype=float))
        return mollify_drift(self, eps, t, x)

    @property
    def base_det(self) -> float:
        return float(abs(np.linalg.det(self.base)))


def _affine(params, d):
    p = list(params) + [0.0] * max(0, 1 + d - len(params))
    lam = p[0]
    c = np.array(p[1:1 + d], dtype=float)
    return lam, c


def build_field(sc: Scenario) -> CoefficientField:
    d = sc.d
    dp = sc.drift_params
    hd = (sc.beta, sc.kappa0)
    ha = (sc.gamma, sc.kappa1)

    # ---- drift
    lin = None
    aff = None
    if sc.drift_id == "zero":
        drift = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
        moll = lambda e, t, x: np.zeros_like(x)
        lin = 0.0
        aff = (0.0, np.zeros(d))
    elif sc.drift_id == "constant":
        v = np.array((list(dp) + [0.0] * d)[:d], dtype=float)
        drift = lambda t, x: np.broadcast_to(v, np.shape(x)).copy()
        moll = lambda e, t, x: np.broadcast_to(v, np.shape(x)).copy()
        lin = 0.0
        aff = (0.0, v)
    elif sc.drift_id == "linear":
        lam, c = _affine(dp, d)
        drift = lambda t, x: lam * np.asarray(x, dtype=float) + c
        moll = lambda e, t, x: lam * x + c
        lin = lam
        aff = (lam, c)
    elif sc.drift_id == "rotation":
        if d != 2:
            raise ValueError("rotation drift needs d=2")
        lam = dp[0] if dp else 1.0

        def drift(t, x):
            x = np.asarray(x, dtype=float)
            return lam * np.stack([-x[..., 1], x[..., 0]], axis=-1)

        moll = lambda e, t, x: drift(t, x)
    elif sc.drift_id == "linear_trig":
        # b_i = lam x_i + A cos(omega x_i + phase)
        lam, A, om, ph = (list(dp) + [0.0, 0.0, 1.0, 0.0][len(dp):])[:4]

        def drift(t, x):
            x = np.asarray(x, dtype=float)
            return lam * x + A * np.cos(om * x + ph)

        def moll(e, t, x):
            return lam * x + A * cos_moment(d, om * e) * np.cos(om * x + ph)

        lin = lam if A == 0 else None
        if A == 0:
            aff = (lam, np.zeros(d))
    elif sc.drift_id == "holder":
        # b_i = lam x_i + A |sin(omega x_i)|^beta
        lam, A, om = (list(dp) + [1.0, 1.0, 1.0][len(dp):])[:3]
        bexp = sc.beta

        def drift(t, x):
            x = np.asarray(x, dtype=float)
            return lam * x + A * np.abs(np.sin(om * x)) ** bexp

        moll = None
    else:
        raise KeyError(f"unknown drift id {sc.drift_id!r}")

    # ---- dispersion
    base = np.eye(d)
    const_disp = False
    space_free = False
    ap = sc.dispersion_params
    if sc.dispersion_id == "identity":
        scale = lambda t, x: np.ones(np.shape(x)[:-1])
        const_disp = True
    elif sc.dispersion_id == "constant":
        c0 = ap[0] if ap else 1.0
        scale = lambda t, x: np.full(np.shape(x)[:-1], c0)
        const_disp = True
    elif sc.dispersion_id == "diagonal":
        base = np.diag((list(ap) + [1.0] * d)[:d])
        scale = lambda t, x: np.ones(np.shape(x)[:-1])
        const_disp = True
    elif sc.dispersion_id == "exp_sin":
        # a = a0 exp(c sin(omega * sum_i x_i + phase)) I
        a0, c, om, ph = (list(ap) + [1.0, 0.25, 1.0, 0.0][len(ap):])[:4]

        def scale(t, x):
            x = np.asarray(x, dtype=float)
            return a0 * np.exp(c * np.sin(om * np.sum(x, axis=-1) + ph))
    elif sc.dispersion_id == "time_linear":
        space_free = True
        a0, c = (list(ap) + [1.0, 0.5][len(ap):])[:2]

        def scale(t, x):
            val = a0 + c * np.asarray(t, dtype=float)
            return np.broadcast_to(val, np.broadcast_shapes(np.shape(val), np.shape(x)[:-1])).copy()
    elif sc.dispersion_id == "holder_disp":
        # a = a0 (1 + c |sin(omega x_1)|^gamma) I
        a0, c, om = (list(ap) + [1.0, 0.3, 1.0][len(ap):])[:3]
        gexp = sc.gamma

        def scale(t, x):
            x = np.asarray(x, dtype=float)
            return a0 * (1.0 + c * np.abs(np.sin(om * x[..., 0])) ** gexp)
    else:
        raise KeyError(f"unknown dispersion id {sc.dispersion_id!r}")

    return CoefficientField(
        d=d, drift=drift, scale=scale, base=base, holder_drift=hd, holder_disp=ha,
        mollified=moll, drift_id=sc.drift_id, dispersion_id=sc.dispersion_id,
        linear_drift=lin, constant_dispersion=const_disp, affine=aff,
        space_free_dispersion=space_free or const_disp,
    )


# --------------------------------------------------------------------------
# operations


def mollify_drift(field: CoefficientField, epsilon: float, t, x, mollifier: Mollifier | None = None):
    """b_eps(t, x) = (b(t, .) * rho_eps)(x) by ball quadrature.

    ``x`` may have any leading shape; the result has the same shape as ``x``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    m = mollifier or make_mollifier(field.d)
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    flat = x.reshape(-1, field.d)
    out = np.zeros_like(flat)
    # chunk over points to bound memory
    step = max(1, 400_000 // len(m.weights))
    for i in range(0, len(flat), step):
        pts = flat[i:i + step, None, :] - epsilon * m.nodes[None, :, :]
        vals = field.drift(t, pts)
        out[i:i + step] = np.einsum("pnd,n->pd", vals, m.weights)
    return out.reshape(lead + (field.d,))


def kappa_kernel(field: CoefficientField, s, x, z, alpha: float):
    """det(a^{-1}(s,x)) (|z| / |a^{-1}(s,x) z|)^{d+alpha}; z must be nonzero."""
    a = field.dispersion(s, np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=float)
    det = np.linalg.det(a)
    if np.any(np.abs(det) < 1e-300):
        raise EllipticityError("dispersion matrix is singular")
    ainv = np.linalg.inv(a)
    az = np.einsum("...ij,...j->...i", ainv, z)
    nz = np.linalg.norm(z, axis=-1)
    if np.any(nz == 0):
        raise ValueError("kappa is undefined at z = 0")
    d = field.d
    return np.abs(1.0 / det) * (nz / np.linalg.norm(az, axis=-1)) ** (d + alpha)


def kappa_factor(field: CoefficientField, alpha: float, z):
    """kappa for the base matrix alone: kappa(s,x,z) = scale(s,x)^alpha * kappa_factor(z)."""
    z = np.asarray(z, dtype=float)
    ainv = np.linalg.inv(field.base)
    az = z @ ainv.T
    d = field.d
    return (1.0 / field.base_det) * (np.linalg.norm(z, axis=-1) / np.linalg.norm(az, axis=-1)) ** (d + alpha)


@dataclass
class ValidationReport:
    drift_origin_ratio: float
    drift_holder_ratio: float
    ellipticity_lower_ratio: float
    ellipticity_upper_ratio: float
    dispersion_holder_ratio: float
    kappa_bar: float
    grad_rho_l1: float
    sample_count: int

    @property
    def ratios(self) -> dict:
        return {
            "drift_origin": self.drift_origin_ratio,
            "drift_holder": self.drift_holder_ratio,
            "ellipticity_lower": self.ellipticity_lower_ratio,
            "ellipticity_upper": self.ellipticity_upper_ratio,
            "dispersion_holder": self.dispersion_holder_ratio,
        }

    @property
    def passed(self) -> bool:
        return all(v <= 1.0 + 1e-9 for v in self.ratios.values())

    def to_dict(self) -> dict:
        out = dict(self.ratios)
        out.update(kappa_bar=self.kappa_bar, grad_rho_l1=self.grad_rho_l1,
                   sample_count=self.sample_count, passed=self.passed)
        return out


def validate_hypotheses(field: CoefficientField, scenario: Scenario, sample_count: int = 1000,
                        seed: int = 0) -> ValidationReport:
    """Sampled check of the Hoelder/growth bounds on b and the ellipticity/Hoelder bounds on a.

    Returns the largest observed ratio for each inequality (<= 1 means it holds
    on the sample).  Singular dispersion at any sample raises EllipticityError.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    rng = np.random.default_rng(seed)
    d = field.d
    beta, k0 = field.holder_drift
    gam, k1 = field.holder_disp
    T = scenario.T
    t = rng.uniform(0.0, T, sample_count)
    x = rng.standard_normal((sample_count, d)) * 3.0
    # mixture of close and far partners
    scales = np.exp(rng.uniform(np.log(1e-4), np.log(10.0), sample_count))
    y = x + rng.standard_normal((sample_count, d)) * scales[:, None]

    b0 = np.array([np.linalg.norm(field.drift(ti, np.zeros(d))) for ti in t[:64]])
    r_origin = float(b0.max() / k0)

    bx = np.stack([field.drift(ti, xi) for ti, xi in zip(t, x)])
    by = np.stack([field.drift(ti, yi) for ti, yi in zip(t, y)])
    dist = np.linalg.norm(x - y, axis=-1)
    bound = k0 * np.maximum(dist ** beta, dist)
    r_holder = float(np.max(np.linalg.norm(bx - by, axis=-1) / bound))

    ax = np.stack([field.dispersion(ti, xi) for ti, xi in zip(t, x)])
    ay = np.stack([field.dispersion(ti, yi) for ti, yi in zip(t, y)])
    if np.any(np.abs(np.linalg.det(ax)) < 1e-300):
        raise EllipticityError("dispersion singular at a sampled point")
    eig = np.linalg.eigvalsh(ax @ np.swapaxes(ax, -1, -2))
    r_low = float(np.max(1.0 / (k1 * eig[:, 0])))
    r_up = float(np.max(eig[:, -1] / k1))
    diff = np.linalg.norm(ax - ay, ord=2, axis=(-2, -1))
    r_ah = float(np.max(diff / (k1 * dist ** gam)))

    # fitted bound for kappa over random directions
    z = rng.standard_normal((sample_count, d))
    kap = kappa_kernel(field, t, x, z, scenario.alpha)
    kbar = float(max(kap.max(), 1.0 / kap.min()))
    return ValidationReport(r_origin, r_holder, r_low, r_up, r_ah, kbar, grad_rho_l1(d), sample_count)


def drift_gradient_bound(field: CoefficientField, epsilon: float) -> float:
    """Right-hand side kappa0 (eps^{beta-1} + 1) ||grad rho||_{L1} of the mollified-gradient bound."""
    beta, k0 = field.holder_drift
    return k0 * (epsilon ** (beta - 1.0) + 1.0) * grad_rho_l1(field.d)


CATALOG_DRIFTS: Sequence[str] = ("zero", "constant", "linear", "rotation", "linear_trig", "holder")
CATALOG_DISPERSIONS: Sequence[str] = ("identity", "constant", "diagonal", "exp_sin", "time_linear", "holder_disp")
