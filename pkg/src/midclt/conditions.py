"""Lattice audits of the covariance conditions and the eta_n partial sums."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameters, InvalidPartition
from .kernels import CovarianceKernel

MAX_LATTICE = 8192
GROWTH_LIMIT = 1.25


@dataclass(frozen=True)
class Partition:
    """Uniform grid t_j = j / n on [0, T]."""

    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidPartition(f"n must be a positive integer, got {self.n}")
        if not self.T > 0:
            raise InvalidPartition(f"T must be positive, got {self.T}")
        if self.M < 2:
            raise InvalidPartition(f"need at least two steps, floor(n*T) = {self.M}")

    @property
    def M(self) -> int:
        return int(math.floor(self.n * self.T + 1e-9))

    @property
    def mesh(self) -> float:
        return 1.0 / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) / self.n

    def index(self, t: float) -> int:
        """Largest j with j / n <= t."""
        self._check(t)
        return int(math.floor(self.n * t + 1e-9))

    def blocks(self, t: float) -> int:
        """Number of midpoint blocks floor(n t / 2)."""
        self._check(t)
        return int(math.floor(self.n * t / 2.0 + 1e-9))

    def _check(self, t):
        if t < 0 or t > self.T + 1e-12:
            raise InvalidPartition(f"t = {t} outside [0, {self.T}]")


@dataclass(frozen=True)
class ConditionExponents:
    alpha: float = 1.5
    beta: float = 0.0
    gamma: float = 0.5

    def __post_init__(self):
        if not (1.0 < self.alpha <= 1.5):
            raise InvalidParameters(f"alpha must lie in (1, 3/2], got {self.alpha}")
        if self.beta < 0 or abs(self.alpha + self.beta - 1.5) >= 1e-12:
            raise InvalidParameters("need beta >= 0 and alpha + beta = 3/2")
        if not self.gamma > 0:
            raise InvalidParameters("gamma must be positive")


def default_exponents(kernel: CovarianceKernel) -> ConditionExponents:
    if kernel.family == "bifbm" and kernel.params.K < 1.0:
        H = kernel.params.H
        return ConditionExponents(alpha=0.5 + 2.0 * H, beta=1.0 - 2.0 * H, gamma=0.5)
    # K = 1 has no position term, so any admissible pair works
    return ConditionExponents()


@dataclass
class ConditionReport:
    condition: str
    kernel: str
    grid_n: List[int]
    fitted: List[float]
    worst: List[dict]
    growth_ratio: float
    verdict: bool
    boundary_points: int = 0
    parts: Dict[str, List[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "kernel": self.kernel,
            "grid_n": list(self.grid_n),
            "fitted_constant": list(self.fitted),
            "worst_point": list(self.worst),
            "growth_ratio": self.growth_ratio,
            "verdict": "pass" if self.verdict else "fail",
            "boundary_points": self.boundary_points,
            "parts": {k: list(v) for k, v in self.parts.items()},
        }


@dataclass(frozen=True)
class EtaEstimate:
    n: int
    t: float
    eta_plus: float
    eta_minus: float

    @property
    def eta(self) -> float:
        return self.eta_plus - self.eta_minus


# ---------------------------------------------------------------------------
# covariance on the lattice

@functools.lru_cache(maxsize=6)
def lattice_cov(kernel: CovarianceKernel, n: int, M: int) -> np.ndarray:
    """Covariance matrix of (W_{j/n}) for j = 0..M, read-only."""
    if M > MAX_LATTICE:
        raise InvalidPartition(f"lattice size {M} exceeds the cap {MAX_LATTICE}")
    C = np.asarray(kernel.matrix(np.arange(M + 1) / n), dtype=float)
    C.setflags(write=False)
    return C


def increment_cov(kernel: CovarianceKernel, t, s, r):
    """E[(W_t - W_{t-s})(W_r - W_{r-s})]."""
    if np.any(np.asarray(s) > np.asarray(t)) or np.any(np.asarray(s) > np.asarray(r)):
        raise InvalidParameters("need s <= t and s <= r")
    c = kernel.cov
    return c(t, r) - c(t, r - s) - c(t - s, r) + c(t - s, r - s)


def beta_n(kernel: CovarianceKernel, n: int, j: int, k: int) -> float:
    if j < 0 or k < 0:
        raise InvalidParameters("indices must be non-negative")
    j, k = min(j, k), max(j, k)
    # lattice times as exact quotients: (j+1)/n - 1/n can miss j/n by an ulp,
    # which |t - s|^(2H) turns into a visible error
    c = kernel.cov
    a, b, x, y = j / n, (j + 1) / n, k / n, (k + 1) / n
    return float(c(b, y) - c(b, x) - c(a, y) + c(a, x))


def beta_table(kernel: CovarianceKernel, n: int, M: int) -> np.ndarray:
    """beta_n(j, k) for 0 <= j, k < M."""
    C = lattice_cov(kernel, n, M)
    B = C[1:, 1:] - C[1:, :-1] - C[:-1, 1:] + C[:-1, :-1]
    # exact symmetry regardless of rounding in the difference order
    return 0.5 * (B + B.T)


def eta_curves(kernel: CovarianceKernel, n: int, T: float = 1.0):
    """(N, eta_n^+, eta_n^-) for block counts N = 0..floor(nT/2)."""
    part = Partition(n, T)
    nmax = part.blocks(T)
    B = beta_table(kernel, n, part.M)[: 2 * nmax, : 2 * nmax]
    plus = B[1::2, 1::2] ** 2 + B[0::2, 0::2] ** 2
    minus = B[0::2, 1::2] ** 2 + B[1::2, 0::2] ** 2
    idx = np.arange(nmax)
    ep = np.concatenate([[0.0], np.cumsum(np.cumsum(plus, 0), 1)[idx, idx]])
    em = np.concatenate([[0.0], np.cumsum(np.cumsum(minus, 0), 1)[idx, idx]])
    return np.arange(nmax + 1), ep, em


def eta_estimate(kernel: CovarianceKernel, n: int, t: float, T: Optional[float] = None) -> EtaEstimate:
    T = t if T is None else T
    part = Partition(n, T)
    _, ep, em = eta_curves(kernel, n, T)
    N = part.blocks(t)
    return EtaEstimate(n=n, t=t, eta_plus=float(ep[N]), eta_minus=float(em[N]))


def eta_n_plus(kernel, n, t, T=None) -> float:
    return eta_estimate(kernel, n, t, T).eta_plus


def eta_n_minus(kernel, n, t, T=None) -> float:
    return eta_estimate(kernel, n, t, T).eta_minus


def beta_power_ratio(kernel: CovarianceKernel, n: int, t: float, r: float) -> float:
    """sum_{j,k < 2N} |beta_n(j,k)|^r divided by N n^(-r/2)."""
    part = Partition(n, t)
    N = part.blocks(t)
    B = beta_table(kernel, n, part.M)[: 2 * N, : 2 * N]
    return float(np.sum(np.abs(B) ** r) / (N * n ** (-r / 2.0)))


# ---------------------------------------------------------------------------
# condition audits

def _zero_floor(lhs, C):
    tol = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(C))))
    return np.where(np.abs(lhs) <= tol, 0.0, np.abs(lhs))


def _pairs(lo_i, hi_i, lo_k, hi_k):
    i = np.arange(lo_i, hi_i + 1)
    k = np.arange(lo_k, hi_k + 1)
    if i.size == 0 or k.size == 0:
        return np.empty(0, int), np.empty(0, int)
    I, K = np.meshgrid(i, k, indexing="ij")
    return I.ravel(), K.ravel()


def _part_ratios(which, C, n, d, ex):
    """Yield (part, ratio, t_idx, r_idx, case, boundary_mask) for step d."""
    M = C.shape[0] - 1
    s = d / n
    rs = math.sqrt(s)
    if which == "i":
        i = np.arange(d, M + 1)
        lhs = C[i, i] - 2 * C[i, i - d] + C[i - d, i - d]
        yield "i", _zero_floor(lhs, C) / rs, i, i, np.zeros(i.size, int), np.zeros(i.size, bool)
    elif which == "ii":
        i, k = _pairs(2 * d, M, 2 * d, M)
        keep = np.abs(i - k) >= 2 * d
        i, k = i[keep], k[keep]
        lhs = C[i, k] - C[i, k - d] - C[i - d, k] + C[i - d, k - d]
        gap = np.abs(i - k) / n
        low = (np.minimum(i, k) - d) / n
        shape = s * s * gap ** (-ex.alpha) * low ** (-ex.beta) + s * s * gap ** -1.5
        yield "ii", _zero_floor(lhs, C) / shape, i, k, np.zeros(i.size, int), np.zeros(i.size, bool)
    elif which == "iii":
        i, k = _pairs(1, M, d, M - d)
        lhs = C[i, k + d] - 2 * C[i, k] + C[i, k - d]
        near = (k < 2 * d) | (np.abs(i - k) < 2 * d)
        far_k = np.where(near, 2 * d, k)
        gap = np.where(near, 2 * d, np.abs(i - k)) / n
        far = s * s * (((far_k - d) / n) ** -1.5 + gap ** -1.5)
        shape = np.where(near, rs, far)
        bnd = (k == 2 * d) | (np.abs(i - k) == 2 * d)
        yield "iii", _zero_floor(lhs, C) / shape, i, k, np.where(near, 0, 1), bnd
    elif which == "iv":
        i = np.arange(d, M - d + 1)
        lhs = C[i, i + d] - C[i, i - d]
        near = i < 2 * d
        shape = np.where(near, rs, s / np.sqrt(np.maximum(i - d, d) / n))
        yield "iv.a", _zero_floor(lhs, C) / shape, i, i, np.where(near, 0, 1), i == 2 * d
        i, k = _pairs(d, M - d, d, M)
        lhs = C[k, i + d] - C[k, i - d]
        near = (i < 2 * d) | (np.abs(i - k) < 2 * d)
        t_s = np.maximum(i - d, d) / n
        gap = np.where(near, 2 * d, np.abs(i - k)) / n
        shape = np.where(near, rs, s / np.sqrt(t_s) + s / np.sqrt(gap))
        bnd = (i == 2 * d) | (np.abs(i - k) == 2 * d)
        yield "iv.b", _zero_floor(lhs, C) / shape, i, k, np.where(near, 0, 1), bnd
        i = np.arange(2 * d + 1, M + 1)
        lhs = C[d, i] - C[d, i - d]
        g = ex.gamma
        shape = s ** (0.5 + g) * ((i - 2 * d) / n) ** (-g)
        yield "iv.c", _zero_floor(lhs, C) / shape, i, np.full(i.size, d), np.zeros(i.size, int), np.zeros(i.size, bool)
    else:
        raise InvalidParameters(f"unknown condition {which!r}")


def _growth(a: float, b: float) -> float:
    if a <= 0.0:
        return 1.0 if b <= 0.0 else math.inf
    return b / a


def audit_condition(
    kernel: CovarianceKernel,
    which: str,
    exponents: Optional[ConditionExponents] = None,
    grid_n: Sequence[int] = (64, 128),
    T: float = 1.0,
    s_steps: Sequence[int] = (1,),
) -> ConditionReport:
    """Fit the constant of one bound condition on successively finer lattices.

    The fitted constant is max |lhs| / bound-shape over the audited points,
    with every free constant of the bound set to 1.  ``s_steps`` lists the
    increment lengths s = d / n to audit (default: s = 1/n only).
    """
    if len(grid_n) < 2:
        raise InvalidParameters("need at least two grid resolutions")
    ex = exponents or default_exponents(kernel)
    grid_n = sorted(int(n) for n in grid_n)
    fitted, worst = [], []
    parts: Dict[str, List[float]] = {}
    boundary = 0
    for n in grid_n:
        part = Partition(n, T)
        C = lattice_cov(kernel, n, part.M)
        best, where = 0.0, None
        part_best: Dict[str, float] = {}
        boundary = 0
        for d in s_steps:
            # (i) only needs s <= t; the others compare two increments of length s
            if d > part.M or (which != "i" and 2 * d > part.M):
                continue
            for name, ratio, ti, ri, case, bnd in _part_ratios(which, C, n, d, ex):
                boundary += int(bnd.sum())
                if ratio.size == 0:
                    continue
                j = int(np.argmax(ratio))
                part_best[name] = max(part_best.get(name, 0.0), float(ratio[j]))
                if ratio[j] > best or where is None:
                    best = float(ratio[j])
                    where = {"s": d / n, "t": float(ti[j] / n), "r": float(ri[j] / n), "part": name, "case": int(case[j])}
        fitted.append(best)
        worst.append(where)
        for name, v in part_best.items():
            parts.setdefault(name, []).append(v)
    g = _growth(fitted[-2], fitted[-1])
    return ConditionReport(
        condition=which,
        kernel=kernel.name,
        grid_n=grid_n,
        fitted=fitted,
        worst=worst,
        growth_ratio=g,
        verdict=bool(np.isfinite(g) and g <= GROWTH_LIMIT),
        boundary_points=boundary,
        parts=parts,
    )


def audit_all(kernel, grid_n=(64, 128), T=1.0, exponents=None) -> List[ConditionReport]:
    return [audit_condition(kernel, w, exponents, grid_n, T) for w in ("i", "ii", "iii", "iv")]


def eta_shape_check(kernel: CovarianceKernel, n: int, T: float = 1.0, points: int = 20) -> dict:
    """Nonnegativity and monotonicity of t -> eta_n^+ - eta_n^- on a coarse grid.

    The slack is three times the discretisation error estimated from the
    difference between resolutions n and 2n.
    """
    ts = np.linspace(T / points, T, points)
    diff = []
    for m in (n, 2 * n):
        part = Partition(m, T)
        _, ep, em = eta_curves(kernel, m, T)
        diff.append(np.array([ep[part.blocks(t)] - em[part.blocks(t)] for t in ts]))
    eta, fine = diff
    slack = 3.0 * np.abs(fine - eta)
    steps = np.diff(eta)
    slack_steps = slack[1:] + slack[:-1]
    return {
        "t": ts,
        "eta": eta,
        "slack": slack,
        "nonnegative": bool(np.all(eta >= -slack)),
        "nondecreasing": bool(np.all(steps >= -slack_steps)),
    }
