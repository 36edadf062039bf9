"""Kolmogorov-Smirnov tests, moment summaries and power-law decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySample, InsufficientData, NonPositiveVariance, SampleTooSmall


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    sizes: tuple
    effective_n: float


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual_norm: float
    n_values: tuple


def kolmogorov_q(lam: float, term_tol: float = 1e-12) -> float:
    """Q(lam) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0.0:
        return 1.0
    if lam < 0.1:
        # 1 - Q(0.1) is below 1e-50, and the series converges slowly here
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < term_tol:
            break
        k += 1
    return float(min(1.0, max(0.0, 2.0 * total)))


def _p_value(D: float, ne: float) -> float:
    sq = math.sqrt(ne)
    return kolmogorov_q(D * (sq + 0.12 + 0.11 / sq))


def _clean(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def ks_two_sample(x, y) -> KSResult:
    x = np.sort(_clean(x, "x"))
    y = np.sort(_clean(y, "y"))
    m, n = x.size, y.size
    i = j = 0
    D = 0.0
    while i < m and j < n:
        v = min(x[i], y[j])
        # consume every tie on both sides before reading the gap
        while i < m and x[i] == v:
            i += 1
        while j < n and y[j] == v:
            j += 1
        D = max(D, abs(i / m - j / n))
    ne = m * n / (m + n)
    return KSResult(float(D), _p_value(D, ne), (m, n), ne)


def ks_one_sample(x, cdf) -> KSResult:
    x = np.sort(_clean(x, "x"))
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return KSResult(D, _p_value(D, n), (n,), float(n))


def moment_summary(x) -> dict:
    """Mean, unbiased variance, skewness, (non-excess) kurtosis and standard errors.

    se_var assumes Gaussian data; se_var_empirical uses the fourth central
    moment and is the one to use for heavy-tailed samples.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise SampleTooSmall(f"need at least 4 samples, got {n}")
    mean = float(np.mean(x))
    c = x - mean
    var = float(np.sum(c * c) / (n - 1))
    m2 = float(np.mean(c * c))
    m4 = float(np.mean(c ** 4))
    if m2 > 0.0:
        skew = float(np.mean(c ** 3) / m2 ** 1.5)
        kurt = m4 / (m2 * m2)
    else:
        skew = kurt = None
    se_var_emp = math.sqrt(max(m4 - (n - 3) / (n - 1) * m2 * m2, 0.0) / n)
    return {
        "n": n,
        "mean": mean,
        "variance": var,
        "skewness": skew,
        "kurtosis": kurt,
        "se_mean": math.sqrt(var / n),
        "se_var": var * math.sqrt(2.0 / (n - 1)),
        "se_var_empirical": se_var_emp,
    }


def decay_fit(n_list: Sequence[float], variance_list: Sequence[float]) -> DecayFit:
    n = np.asarray(n_list, dtype=float)
    v = np.asarray(variance_list, dtype=float)
    if n.size != v.size or n.size < 3:
        raise InsufficientData("decay fit needs at least 3 matching points")
    if np.any(v <= 0) or np.any(n <= 0):
        raise NonPositiveVariance("variances and n must be positive")
    A = np.vstack([np.log(n), np.ones_like(n)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
    resid = float(np.linalg.norm(A @ coef - np.log(v)))
    return DecayFit(float(coef[0]), float(coef[1]), resid, tuple(int(k) for k in n))
