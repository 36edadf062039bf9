"""Limit constants and closed-form models of the limit variance eta(t).

Two conventions are offered wherever they differ:

``printed``  the published closed forms (default)
``lattice``  the forms obtained by re-summing the discrete eta_n sums,
             which the eta_n^- tables converge to
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import InvalidParameters, NonConvergentSeries, UnsupportedKernel
from .kernels import CovarianceKernel, QuantileKernelSpec, quantile_profile
from .quadrature import integrate_cells

FORMS = ("printed", "lattice")
MAX_TERMS = 100_000_000
# shifts c in the m-th term (sqrt(c+1) - 2 sqrt(c) + sqrt(c-1))^2 with c = 2m + shift
_SHIFT = {"a": 0, "b1": 1, "b2": -1}
TWO_MINUS_ROOT2_SQ = (2.0 - math.sqrt(2.0)) ** 2


@dataclass(frozen=True)
class SeriesValue:
    value: float
    truncation_M: int
    tail_bound: float


def second_difference(c):
    """sqrt(c+1) - 2 sqrt(c) + sqrt(c-1) for c >= 1, free of cancellation."""
    c = np.asarray(c, dtype=float)
    p, m, z = np.sqrt(c + 1.0), np.sqrt(c - 1.0), np.sqrt(c)
    return -2.0 / ((p + m) * (p + z) * (z + m))


def tail_bound(M: int) -> float:
    """Upper bound for sum_{m > M} (2m - 1)^(-3)."""
    if M <= 0:
        return 7.0 * float(special.zeta(3.0)) / 8.0
    return 1.0 / (4.0 * (2.0 * M - 1.0) ** 2)


def terms_for(tol: float) -> int:
    if not tol > 0:
        raise InvalidParameters("tol must be positive")
    M = max(1, math.ceil((1.0 / (2.0 * math.sqrt(tol)) + 1.0) / 2.0))
    while tail_bound(M) > tol:
        M += 1
    if M > MAX_TERMS:
        raise NonConvergentSeries(f"tol {tol:g} needs {M} terms, above the cap {MAX_TERMS}")
    return M


@functools.lru_cache(maxsize=32)
def _series(kind: str, M: int) -> float:
    if M == 0:
        return 0.0
    m = np.arange(1, M + 1, dtype=float)
    terms = second_difference(2.0 * m + _SHIFT[kind]) ** 2
    # smallest terms first
    return float(np.sum(terms[::-1]))


def _series_value(kind, tol, M):
    if M is None:
        M = terms_for(tol)
    elif M < 0:
        raise InvalidParameters("M must be non-negative")
    return SeriesValue(value=_series(kind, int(M)), truncation_M=int(M), tail_bound=tail_bound(int(M)))


def series_a(tol: float = 1e-12, M: Optional[int] = None) -> SeriesValue:
    return _series_value("a", tol, M)


def series_b1(tol: float = 1e-12, M: Optional[int] = None) -> SeriesValue:
    return _series_value("b1", tol, M)


def series_b2(tol: float = 1e-12, M: Optional[int] = None) -> SeriesValue:
    return _series_value("b2", tol, M)


def _check_form(form):
    if form not in FORMS:
        raise InvalidParameters(f"form must be one of {FORMS}, got {form!r}")


def quantile_coefficient(tol: float = 1e-12, M: Optional[int] = None, form: str = "printed") -> float:
    _check_form(form)
    a = series_a(tol, M).value
    b2 = series_b2(tol, M).value
    if form == "lattice":
        return 2.0 + a - b2
    b1 = series_b1(tol, M).value
    return 2.0 + 4.0 * a - 2.0 * b1 - 2.0 * b2


def _check_K(K):
    if not (0.0 < K <= 1.0):
        raise InvalidParameters(f"K must lie in (0, 1], got {K}")


def c_k_plus(K: float) -> float:
    _check_K(K)
    return (2.0 + series_a().value) / 4.0 ** K


def c_k_minus(K: float, form: str = "printed") -> float:
    _check_K(K)
    _check_form(form)
    if form == "lattice":
        return series_b2().value / 4.0 ** K
    return TWO_MINUS_ROOT2_SQ / 2.0 ** (2.0 * K + 1.0) + series_b1().value / 4.0 ** K


def c_beta_plus(kappa: float) -> float:
    k2 = kappa * kappa
    return 8.0 * k2 + 4.0 * k2 * series_a().value


def c_beta_minus(kappa: float, form: str = "printed") -> float:
    _check_form(form)
    k2 = kappa * kappa
    if form == "lattice":
        return 4.0 * k2 * series_b2().value
    return 8.0 * k2 + 4.0 * k2 * series_b1().value


# ---------------------------------------------------------------------------
# eta models

@dataclass(frozen=True)
class EtaModel:
    """eta(t) = c t (linear), c t^2 (quadratic), or (c / pi) int_0^t theta^2."""

    form: str
    coefficient: float
    spec: Optional[QuantileKernelSpec] = None
    label: str = ""

    def __post_init__(self):
        if self.form not in ("zero", "linear", "quadratic", "integral"):
            raise InvalidParameters(f"unknown eta form {self.form!r}")
        if self.coefficient < 0:
            raise InvalidParameters("eta coefficient must be non-negative")
        if self.form == "integral" and self.spec is None:
            raise InvalidParameters("integral form needs a quantile spec")


def zero_eta_model() -> EtaModel:
    return EtaModel("zero", 0.0, label="zero")


def eta_model_for(kernel: CovarianceKernel, form: str = "printed") -> EtaModel:
    _check_form(form)
    if kernel.family == "bifbm":
        if not kernel.params.clt_valid:
            raise UnsupportedKernel(f"{kernel.name}: need H <= 1/2 and HK = 1/4")
        K = kernel.params.K
        return EtaModel("linear", 2.0 * (c_k_plus(K) - c_k_minus(K, form)), label=f"bifbm-{form}")
    if kernel.family == "phi":
        kappa = kernel.params.kappa
        return EtaModel("quadratic", c_beta_plus(kappa) - c_beta_minus(kappa, form), label=f"phi-{form}")
    coef = quantile_coefficient(form=form)
    return EtaModel("integral", coef, spec=kernel.params, label=f"quantile-{form}")


def eta_eval(model: EtaModel, t, tol: float = 1e-10):
    """Evaluate eta at a scalar or an array of times."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidParameters("t must be non-negative")
    c = model.coefficient
    if model.form == "zero":
        out = np.zeros_like(t_arr)
    elif model.form == "linear":
        out = c * t_arr
    elif model.form == "quadratic":
        out = c * t_arr * t_arr
    else:
        flat = t_arr.ravel()
        edges = np.unique(np.concatenate([[0.0], flat]))
        spec = model.spec

        def theta_sq(s):
            return quantile_profile(s, spec)[1] ** 2

        cells, _ = integrate_cells(theta_sq, edges, tol=tol * math.pi / max(c, 1e-300))
        cum = np.concatenate([[0.0], np.cumsum(cells)]) * (c / math.pi)
        out = cum[np.searchsorted(edges, flat)].reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out
