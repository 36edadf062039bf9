"""Covariance kernels of the three example Gaussian families.

bifbm     bifractional Brownian motion, parameters (H, K)
phi       kernels of the form R(r, t) = min * phi(max / min)
quantile  covariance of the rescaled alpha-quantile process of the heat
          equation started from a random density f
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import special

from .errors import InvalidParameters, RootNotBracketed
from .quadrature import integrate

SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Gaussian helpers

def gaussian_p(t, x):
    """Heat kernel (2 pi t)^(-1/2) exp(-x^2 / 2t)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x / t) / np.sqrt(2.0 * math.pi * t)


def gaussian_cdf(x):
    return special.ndtr(x)


def orthant_prob(corr):
    """P(X <= 0, Y <= 0) for a standard bivariate normal with correlation corr."""
    corr = np.asarray(corr, dtype=float)
    if np.any(np.abs(corr) > 1.0):
        raise InvalidParameters("correlation must lie in [-1, 1]")
    return 0.25 + np.arcsin(corr) / (2.0 * math.pi)


def bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF P(X <= h, Y <= k) via Owen's T function.

    Valid for |rho| < 1; arguments broadcast.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float)
    )
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    hz = h == 0.0
    kz = k == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
    th = np.where(hz, 0.25 * np.sign(k), special.owens_t(np.where(hz, 1.0, h), np.where(hz, 0.0, ah)))
    tk = np.where(kz, 0.25 * np.sign(h), special.owens_t(np.where(kz, 1.0, k), np.where(kz, 0.0, ak)))
    hk = h * k
    beta = np.where((hk > 0) | ((hk == 0) & (h + k >= 0)), 0.0, 0.5)
    out = 0.5 * (special.ndtr(h) + special.ndtr(k)) - th - tk - beta
    both = hz & kz
    if np.any(both):
        out = np.where(both, 0.25 + np.arcsin(rho) / (2.0 * math.pi), out)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# bifractional Brownian motion

@dataclass(frozen=True)
class BifBmParams:
    H: float
    K: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.H < 1.0):
            raise InvalidParameters(f"H must lie in (0, 1), got {self.H}")
        if not (0.0 < self.K <= 1.0):
            raise InvalidParameters(f"K must lie in (0, 1], got {self.K}")

    @property
    def clt_valid(self) -> bool:
        return self.H <= 0.5 and abs(self.H * self.K - 0.25) <= 1e-12


def bifbm_cov(s, t, p: BifBmParams):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    hi = np.maximum(s, t)
    two_h = 2.0 * p.H
    val = (lo ** two_h + hi ** two_h) ** p.K - (hi - lo) ** (two_h * p.K)
    return val / 2.0 ** p.K


# ---------------------------------------------------------------------------
# phi-type kernels

@dataclass(frozen=True, eq=False)
class PhiKernelSpec:
    """R(r, t) = r * phi(t / r) for r <= t, with the derivative decomposition

    phi1(x) = kappa / sqrt(x - 1) + psi(x) / sqrt(x).
    """

    phi: Callable
    phi1: Callable
    phi2: Callable
    kappa: float
    psi: Callable
    c0: float
    c1: float
    c2: float
    name: str = "phi"

    def bound_checks(self, xs) -> dict:
        """Largest normalised value of each bound on the grid ``xs`` (all x > 1).

        A bound holds when the returned ratio is <= 1; ``decomposition`` is
        the max absolute residual of the derivative split.
        """
        xs = np.asarray(xs, dtype=float)
        if np.any(xs <= 1.0):
            raise InvalidParameters("bound checks need x > 1")
        d = np.sqrt(xs - 1.0)
        r0 = np.max(np.abs(self.phi(xs))) / self.c0
        r1 = np.max(np.abs(self.phi1(xs)) * d) / self.c1
        r2 = np.max(np.abs(self.phi2(xs)) * np.sqrt(xs) * d ** 3) / self.c2
        resid = np.max(np.abs(self.phi1(xs) - self.kappa / d - self.psi(xs) / np.sqrt(xs)))
        return {"phi": r0, "phi1": r1, "phi2": r2, "decomposition": float(resid)}


def median_phi(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sqrt(x) * np.arctan(1.0 / np.sqrt(x - 1.0))
    # phi(x) -> 1 as x -> inf
    return np.where(np.isinf(x), 1.0, val)


def median_phi1(x):
    x = np.asarray(x, dtype=float)
    d = np.sqrt(x - 1.0)
    return (np.arctan(1.0 / d) - 1.0 / d) / (2.0 * np.sqrt(x))


def median_phi2(x):
    x = np.asarray(x, dtype=float)
    d = np.sqrt(x - 1.0)
    return 0.25 / (np.sqrt(x) * d ** 3) - np.arctan(1.0 / d) / (4.0 * x ** 1.5)


def median_psi(x):
    x = np.asarray(x, dtype=float)
    d = np.sqrt(x - 1.0)
    # (sqrt(x) - 1) / sqrt(x - 1) written without cancellation
    return 0.5 * np.arctan(1.0 / d) + d / (2.0 * (np.sqrt(x) + 1.0))


MEDIAN_PHI = PhiKernelSpec(
    phi=median_phi,
    phi1=median_phi1,
    phi2=median_phi2,
    kappa=-0.5,
    psi=median_psi,
    c0=math.pi / 2.0,
    c1=0.5,
    c2=0.25,
    name="median",
)


def phi_cov(r, t, spec: PhiKernelSpec):
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(r, t)
    hi = np.maximum(r, t)
    pos = lo > 0
    safe = np.where(pos, lo, 1.0)
    with np.errstate(over="ignore"):
        ratio = np.where(pos, hi / safe, 1.0)
    val = lo * spec.phi(ratio)
    return np.where(pos, val, 0.0)


# ---------------------------------------------------------------------------
# quantile process kernel

@dataclass(frozen=True, eq=False)
class QuantileKernelSpec:
    """Initial density f and quantile level alpha.

    Integrals over y are taken on ``support`` when given, otherwise on
    center +- domain_cut * scale.
    """

    init_density: Callable
    alpha: float = 0.5
    quad_tol: float = 1e-10
    domain_cut: float = 12.0
    center: float = 0.0
    scale: float = 1.0
    support: Optional[Tuple[float, float]] = None
    name: str = "quantile"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise InvalidParameters(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.quad_tol <= 0 or self.domain_cut <= 0 or self.scale <= 0:
            raise InvalidParameters("quad_tol, domain_cut and scale must be positive")

    @property
    def window(self) -> Tuple[float, float]:
        if self.support is not None:
            return float(self.support[0]), float(self.support[1])
        w = self.domain_cut * self.scale
        return self.center - w, self.center + w

    def mass(self) -> float:
        lo, hi = self.window
        val, _ = integrate(self.init_density, lo, hi, tol=self.quad_tol * 1e-2)
        return float(val)

    def validate(self) -> None:
        m = self.mass()
        if abs(m - 1.0) > self.quad_tol:
            raise InvalidParameters(f"density integrates to {m!r} over the window, not 1")
        q0 = float(quantile_q(0.0, self))
        if not self.init_density(np.array([q0]))[0] > 0:
            raise InvalidParameters("density vanishes at the initial quantile")

    @classmethod
    def standard_normal(cls, alpha=0.5, **kw):
        return cls(init_density=_std_normal_pdf, alpha=alpha, name="quantile-normal", **kw)

    @classmethod
    def uniform(cls, a=-1.0, b=1.0, alpha=0.5, **kw):
        return cls(
            init_density=functools.partial(_uniform_pdf, a=float(a), b=float(b)),
            alpha=alpha,
            support=(float(a), float(b)),
            name="quantile-uniform",
            **kw,
        )


def _std_normal_pdf(y):
    return np.exp(-0.5 * y * y) / SQRT_2PI


def _uniform_pdf(y, a, b):
    return np.where((y >= a) & (y <= b), 1.0 / (b - a), 0.0)


def _inner_tol(spec):
    return spec.quad_tol * 1e-3


_FEATURE_STEPS = np.linspace(-12.0, 12.0, 25)


def _breaks(spec, centers, widths):
    """Extra quadrature breakpoints around steps/spikes narrower than the density scale.

    A shared adaptive grid can step over a feature of width sqrt(t) when t is
    tiny, so such features get their own cells.
    """
    centers = np.atleast_1d(np.asarray(centers, float))
    widths = np.atleast_1d(np.asarray(widths, float))
    small = (widths > 0) & (widths < 0.05 * spec.scale)
    if not small.any():
        return None
    pts = (centers[small, None] + widths[small, None] * _FEATURE_STEPS[None, :]).ravel()
    lo, hi = spec.window
    return np.unique(pts[(pts > lo) & (pts < hi)])


def _cdf(q, t, spec: QuantileKernelSpec):
    """P(B(t) <= q) for paired arrays q, t."""
    q, t = np.broadcast_arrays(np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(t, float)))
    out = np.empty(q.shape)
    lo, hi = spec.window
    f = spec.init_density
    z = t == 0
    if np.any(z):
        qz = np.clip(q[z], lo, hi)
        width = qz - lo

        def g0(u):
            return f(lo + u[:, None] * width[None, :]) * width[None, :]

        out[z], _ = integrate(g0, 0.0, 1.0, tol=_inner_tol(spec))
    if np.any(~z):
        qp = q[~z]
        st = np.sqrt(t[~z])

        def g(y):
            return f(y)[:, None] * special.ndtr((qp[None, :] - y[:, None]) / st[None, :])

        out[~z], _ = integrate(g, lo, hi, tol=_inner_tol(spec), breakpoints=_breaks(spec, qp, st))
    return out


def density_u(x, t, spec: QuantileKernelSpec):
    """Density of B(t) = B(0) + heat noise at x; t = 0 returns f(x)."""
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    shape = x.shape
    x = x.ravel()
    t = t.ravel()
    if np.any(t < 0):
        raise InvalidParameters("t must be non-negative")
    out = np.empty(x.shape)
    z = t == 0
    out[z] = spec.init_density(x[z]) if np.any(z) else 0.0
    if np.any(~z):
        xp = x[~z]
        tp = t[~z]
        lo, hi = spec.window

        def g(y):
            return spec.init_density(y)[:, None] * gaussian_p(tp[None, :], xp[None, :] - y[:, None])

        out[~z], _ = integrate(g, lo, hi, tol=_inner_tol(spec), breakpoints=_breaks(spec, xp, np.sqrt(tp)))
    return out.reshape(shape) if shape else float(out[0])


def _hybrid_root(g, lo, hi, flo, fhi, ctol, max_iter=200):
    """Vectorised bracketed root search mixing secant and bisection steps."""
    lo, hi, flo, fhi = (np.array(a, dtype=float) for a in (lo, hi, flo, fhi))
    x = 0.5 * (lo + hi)
    done = (np.abs(flo) <= ctol) | (np.abs(fhi) <= ctol)
    x = np.where(np.abs(flo) <= ctol, lo, np.where(np.abs(fhi) <= ctol, hi, x))
    bisect = np.zeros(lo.shape, dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            return x
        a, b, fa, fb = lo[act], hi[act], flo[act], fhi[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = b - fb * (b - a) / (fb - fa)
        use_mid = bisect[act] | ~np.isfinite(xs) | (xs <= a) | (xs >= b)
        xn = np.where(use_mid, 0.5 * (a + b), xs)
        fx = g(xn, act)
        width_old = b - a
        left = fx < 0
        lo[act] = np.where(left, xn, a)
        flo[act] = np.where(left, fx, fa)
        hi[act] = np.where(left, b, xn)
        fhi[act] = np.where(left, fb, fx)
        bisect[act] = (hi[act] - lo[act]) > 0.5 * width_old
        x[act] = xn
        tiny = (hi[act] - lo[act]) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(xn))
        done[act] = (np.abs(fx) <= ctol) | tiny
    raise RootNotBracketed("quantile search did not converge")


@functools.lru_cache(maxsize=64)
def _initial_quantile(spec: QuantileKernelSpec) -> float:
    lo, hi = spec.window
    a = spec.alpha

    def g(q, idx):
        return _cdf(q, np.zeros_like(q), spec) - a

    flo = g(np.array([lo]), None)
    fhi = g(np.array([hi]), None)
    if not (flo[0] <= 0 <= fhi[0]):
        raise RootNotBracketed("alpha-quantile of the initial density lies outside the window")
    return float(_hybrid_root(g, [lo], [hi], flo, fhi, ctol=1e-12)[0])


def _quantiles(ts, spec: QuantileKernelSpec):
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0):
        raise InvalidParameters("t must be non-negative")
    q0 = _initial_quantile(spec)
    out = np.full(ts.shape, q0)
    pos = np.flatnonzero(ts > 0)
    if pos.size == 0:
        return out
    t = ts[pos]
    a = spec.alpha

    def g(q, idx):
        tt = t if idx is None else t[idx]
        return _cdf(q, tt, spec) - a

    d = np.sqrt(t)
    lo, hi = q0 - d, q0 + d
    flo, fhi = g(lo, None), g(hi, None)
    for _ in range(64):
        bad_lo = flo > 0
        bad_hi = fhi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        d = np.where(bad_lo | bad_hi, 2.0 * d, d)
        if bad_lo.any():
            i = np.flatnonzero(bad_lo)
            lo[i] = q0 - d[i]
            flo[i] = g(lo[i], i)
        if bad_hi.any():
            i = np.flatnonzero(bad_hi)
            hi[i] = q0 + d[i]
            fhi[i] = g(hi[i], i)
    else:
        raise RootNotBracketed("bracket expansion failed; check domain_cut")
    out[pos] = _hybrid_root(g, lo, hi, flo, fhi, ctol=1e-12)
    return out


@functools.lru_cache(maxsize=8192)
def _quantile_scalar(spec, t):
    return float(_quantiles([t], spec)[0])


def quantile_q(t, spec: QuantileKernelSpec):
    """alpha-quantile q(t) of B(t); scalar or array input."""
    if np.ndim(t) == 0:
        return _quantile_scalar(spec, float(t))
    return _quantiles(t, spec)


def quantile_profile(ts, spec: QuantileKernelSpec):
    """Return (q(t), theta(t)) arrays with theta = 1 / u(q(t), t)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    q = _quantiles(ts, spec)
    u = np.atleast_1d(density_u(q, ts, spec))
    return q, 1.0 / u


def theta(t, spec: QuantileKernelSpec):
    _, th = quantile_profile(t, spec)
    return th if np.ndim(t) else float(th[0])


def _joint_row(r, qr, ts, qts, spec, tol):
    """P(B(r) <= q(r), B(t_j) <= q(t_j)) for every t_j != r."""
    lo, hi = spec.window
    f = spec.init_density
    out = np.empty(ts.shape)
    if r == 0.0:
        up = min(max(qr, lo), hi)

        def g(y):
            return f(y)[:, None] * special.ndtr((qts[None, :] - y[:, None]) / np.sqrt(ts)[None, :])

        out[:], _ = integrate(g, lo, up, tol=tol, breakpoints=_breaks(spec, qts, np.sqrt(ts)))
        return out
    z = ts == 0.0
    if np.any(z):
        up = min(max(qts[z][0], lo), hi)
        val, _ = integrate(lambda y: f(y) * special.ndtr((qr - y) / math.sqrt(r)), lo, up, tol=tol,
                           breakpoints=_breaks(spec, qr, math.sqrt(r)))
        out[z] = val
    if np.any(~z):
        tp = ts[~z]
        qp = qts[~z]
        rho = np.sqrt(np.minimum(tp, r) / np.maximum(tp, r))
        sr = math.sqrt(r)
        stp = np.sqrt(tp)

        def g(y):
            h = ((qr - y) / sr)[:, None]
            k = (qp[None, :] - y[:, None]) / stp[None, :]
            return f(y)[:, None] * bvn_cdf(h, k, rho[None, :])

        brk = _breaks(spec, np.concatenate([[qr], qp]), np.concatenate([[sr], stp]))
        out[~z], _ = integrate(g, lo, hi, tol=tol, breakpoints=brk)
    return out


def quantile_cov_row(r, ts, spec: QuantileKernelSpec, profile=None):
    """rho(r, t_j) for a fixed r and an array of times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    r = float(r)
    if profile is None:
        qs, th = quantile_profile(np.concatenate([[r], ts]), spec)
        qr, thr, qts, thts = qs[0], th[0], qs[1:], th[1:]
    else:
        qr, thr, qts, thts = profile
    a = spec.alpha
    out = np.empty(ts.shape)
    diag = ts == r
    out[diag] = (a - a * a) * thr * thts[diag]
    off = ~diag
    if np.any(off):
        scale = max(1.0, thr * float(np.max(thts[off])))
        p = _joint_row(r, qr, ts[off], qts[off], spec, tol=spec.quad_tol * 0.1 / scale)
        out[off] = (p - a * a) * thr * thts[off]
    return out


def quantile_cov(r, t, spec: QuantileKernelSpec) -> float:
    lo, hi = min(float(r), float(t)), max(float(r), float(t))
    return float(quantile_cov_row(lo, np.array([hi]), spec)[0])


def quantile_matrix(times, spec: QuantileKernelSpec):
    times = np.asarray(times, dtype=float)
    q, th = quantile_profile(times, spec)
    m = times.size
    out = np.empty((m, m))
    for i in range(m):
        row = quantile_cov_row(times[i], times[i:], spec, profile=(q[i], th[i], q[i:], th[i:]))
        out[i, i:] = row
        out[i:, i] = row
    return out


# ---------------------------------------------------------------------------
# unified kernel object

@dataclass(frozen=True, eq=False)
class CovarianceKernel:
    family: str
    params: object
    name: str = ""

    def __post_init__(self):
        expected = {"bifbm": BifBmParams, "phi": PhiKernelSpec, "quantile": QuantileKernelSpec}
        if self.family not in expected:
            raise InvalidParameters(f"unknown kernel family {self.family!r}")
        if not isinstance(self.params, expected[self.family]):
            raise InvalidParameters(f"{self.family} kernel needs {expected[self.family].__name__}")

    @property
    def random_start(self) -> bool:
        """True when the process has a non-degenerate value at time 0."""
        return self.family == "quantile"

    @property
    def clt_valid(self) -> bool:
        if self.family == "bifbm":
            return self.params.clt_valid
        return True

    def cov(self, s, t):
        if self.family == "bifbm":
            return bifbm_cov(s, t, self.params)
        if self.family == "phi":
            return phi_cov(s, t, self.params)
        s_arr, t_arr = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        if s_arr.ndim == 0:
            return quantile_cov(float(s_arr), float(t_arr), self.params)
        lo = np.minimum(s_arr, t_arr).ravel()
        hi = np.maximum(s_arr, t_arr).ravel()
        out = np.empty(lo.shape)
        for r in np.unique(lo):
            sel = lo == r
            out[sel] = quantile_cov_row(r, hi[sel], self.params)
        return out.reshape(s_arr.shape)

    def matrix(self, times):
        times = np.asarray(times, dtype=float)
        if self.family == "quantile":
            return quantile_matrix(times, self.params)
        return self.cov(times[:, None], times[None, :])


def bifbm_kernel(H, K=1.0) -> CovarianceKernel:
    return CovarianceKernel("bifbm", BifBmParams(H, K), name=f"bifbm(H={H:g},K={K:g})")


def brownian_kernel() -> CovarianceKernel:
    return CovarianceKernel("bifbm", BifBmParams(0.5, 1.0), name="brownian")


def median_kernel() -> CovarianceKernel:
    return CovarianceKernel("phi", MEDIAN_PHI, name="median")


def quantile_kernel(spec: QuantileKernelSpec) -> CovarianceKernel:
    return CovarianceKernel("quantile", spec, name=f"{spec.name}(alpha={spec.alpha:g})")
