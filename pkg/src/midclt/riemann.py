"""Midpoint sums, their Taylor decomposition and the limit-law sampler.

Paths are arrays whose last axis is the grid j / n, j = 0..M; leading axes
index paths.  Block j (1-based) uses a = W_{(2j-2)/n}, m = W_{(2j-1)/n},
b = W_{2j/n}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .conditions import Partition
from .constants import EtaModel
from .errors import GridMismatch, InvalidParameters, QuadratureFailure, UnsupportedFunction
from .kernels import CovarianceKernel
from .simulate import LIMIT_PATHS, PATHS, make_sampler, sample_correction, sample_paths


@dataclass(frozen=True)
class TestFunction:
    """f with its first three derivatives.

    ``exact_remainder(x, y)`` returns J(x, y) = int_x^y (y - u)^2 f'''(u) du
    in closed form when available.
    """

    __test__ = False  # not a pytest class

    label: str
    f: Callable
    f1: Callable
    f2: Callable
    f3: Callable
    exact_remainder: Optional[Callable] = None

    def remainder(self, x, y):
        if self.exact_remainder is not None:
            return self.exact_remainder(np.asarray(x, float), np.asarray(y, float))
        return _gl_remainder(self.f3, x, y)

    def derivative_errors(self, probes=None, h=1e-5) -> List[float]:
        """Max scaled mismatch between each derivative and a centred difference."""
        x = np.linspace(-3.0, 3.0, 100) if probes is None else np.asarray(probes, float)
        out = []
        for lo, hi in ((self.f, self.f1), (self.f1, self.f2), (self.f2, self.f3)):
            fd = (lo(x + h) - lo(x - h)) / (2 * h)
            d = hi(x) * np.ones_like(x)
            out.append(float(np.max(np.abs(d - fd) / (1.0 + np.abs(d)))))
        return out


_GL_LO = np.polynomial.legendre.leggauss(20)
_GL_HI = np.polynomial.legendre.leggauss(40)


def _gl_panel(f3, x, y, d, a, b, rule):
    nodes, weights = rule
    v = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights
    u = x[..., None] + v * d[..., None]
    return np.sum(w * (1.0 - v) ** 2 * f3(u), axis=-1)


def _gl_remainder(f3, x, y, tol=1e-12, max_panels=1024):
    """J(x, y) by composite Gauss-Legendre on v in [0, 1] with u = x + v (y - x)."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    d = y - x
    panels = 1
    while panels <= max_panels:
        edges = np.linspace(0.0, 1.0, panels + 1)
        lo = sum(_gl_panel(f3, x, y, d, edges[i], edges[i + 1], _GL_LO) for i in range(panels))
        hi = sum(_gl_panel(f3, x, y, d, edges[i], edges[i + 1], _GL_HI) for i in range(panels))
        scale = np.abs(d) ** 3
        if np.all(np.abs(hi - lo) * scale <= tol * (1.0 + np.abs(hi) * scale)):
            return hi * d ** 3
        panels *= 2
    raise QuadratureFailure("remainder integral did not converge")


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


TEST_FUNCTIONS: Dict[str, TestFunction] = {
    "linear": TestFunction(
        "linear", lambda x: np.asarray(x, float), lambda x: np.ones_like(np.asarray(x, float)),
        lambda x: np.zeros_like(np.asarray(x, float)), lambda x: np.zeros_like(np.asarray(x, float)), _zero,
    ),
    "quadratic": TestFunction(
        "quadratic", lambda x: 0.5 * np.asarray(x, float) ** 2, lambda x: np.asarray(x, float),
        lambda x: np.ones_like(np.asarray(x, float)), lambda x: np.zeros_like(np.asarray(x, float)), _zero,
    ),
    "cubic": TestFunction(
        "cubic", lambda x: np.asarray(x, float) ** 3, lambda x: 3.0 * np.asarray(x, float) ** 2,
        lambda x: 6.0 * np.asarray(x, float), lambda x: np.full(np.shape(x), 6.0),
        lambda x, y: 2.0 * (y - x) ** 3,
    ),
    "sin": TestFunction("sin", np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
}


def test_function(label: str) -> TestFunction:
    try:
        return TEST_FUNCTIONS[label]
    except KeyError:
        raise UnsupportedFunction(f"unknown test function {label!r}; choose from {sorted(TEST_FUNCTIONS)}") from None


test_function.__test__ = False


def _blocks(values, t, n):
    values = np.asarray(values, dtype=float)
    M = values.shape[-1] - 1
    if t < 0 or t > M / n + 1e-12:
        raise InvalidParameters(f"t = {t} outside the path grid")
    N = int(math.floor(n * t / 2.0 + 1e-9))
    a = values[..., 0 : 2 * N - 1 : 2] if N else values[..., :0]
    m = values[..., 1 : 2 * N : 2]
    b = values[..., 2 : 2 * N + 1 : 2]
    return values, N, a, m, b


def phi_n(values, tf: TestFunction, t: float, n: int):
    """sum_j f'(W_{(2j-1)/n}) (W_{2j/n} - W_{(2j-2)/n})."""
    _, _, a, m, b = _blocks(values, t, n)
    return np.sum(tf.f1(m) * (b - a), axis=-1)


def psi_n(values, tf: TestFunction, t: float, n: int):
    """sum_j f''(W_mid) ((W_{2j/n} - W_mid)^2 - (W_mid - W_{(2j-2)/n})^2)."""
    _, _, a, m, b = _blocks(values, t, n)
    return np.sum(tf.f2(m) * ((b - m) ** 2 - (m - a) ** 2), axis=-1)


def taylor_remainder(values, tf: TestFunction, t: float, n: int):
    """R_n(t) = sum_j (R_1 - R_0) with R_0 = J(mid, b)/2 and R_1 = J(mid, a)/2."""
    _, _, a, m, b = _blocks(values, t, n)
    return 0.5 * np.sum(tf.remainder(m, a) - tf.remainder(m, b), axis=-1)


@dataclass
class BlockDecomposition:
    phi_n: np.ndarray
    psi_n: np.ndarray
    r_n: np.ndarray
    f_t: np.ndarray
    f_0: np.ndarray
    boundary_value: np.ndarray

    @property
    def delta_n(self):
        return self.f_t - self.f_0 - 0.5 * self.psi_n + self.r_n

    @property
    def delta_boundary(self):
        return self.boundary_value - self.f_0 - 0.5 * self.psi_n + self.r_n

    @property
    def identity_residual(self):
        return self.phi_n - self.delta_boundary


def delta_n(values, tf: TestFunction, t: float, n: int) -> BlockDecomposition:
    values, N, _, _, _ = _blocks(values, t, n)
    k = int(math.floor(n * t + 1e-9))
    return BlockDecomposition(
        phi_n=phi_n(values, tf, t, n),
        psi_n=psi_n(values, tf, t, n),
        r_n=taylor_remainder(values, tf, t, n),
        f_t=tf.f(values[..., k]),
        f_0=tf.f(values[..., 0]),
        boundary_value=tf.f(values[..., 2 * N]),
    )


def limit_law_sample(values, increments, tf: TestFunction, t: float, n: int):
    """f(W_t) - f(W_0) - 1/2 sum_{t_k < t} f''(W_{t_k}) dB_k."""
    values = np.asarray(values, dtype=float)
    increments = np.asarray(increments, dtype=float)
    if increments.shape[-1] != values.shape[-1] - 1 or increments.shape[:-1] != values.shape[:-1]:
        raise GridMismatch(f"paths {values.shape} and increments {increments.shape} disagree")
    k = int(math.floor(n * t + 1e-9))
    corr = np.sum(tf.f2(values[..., :k]) * increments[..., :k], axis=-1)
    return tf.f(values[..., k]) - tf.f(values[..., 0]) - 0.5 * corr


# ---------------------------------------------------------------------------
# experiment driver

@dataclass
class MeshSamples:
    """Per-path statistics at one mesh; columns follow t_list."""

    n: int
    phi: np.ndarray
    w: np.ndarray
    psi: np.ndarray
    r: np.ndarray
    identity_residual: np.ndarray
    boundary_diff: np.ndarray
    jitter_used: float = 0.0


@dataclass
class CLTResult:
    kernel_name: str
    test_function: str
    eta_model: EtaModel
    n_list: List[int]
    t_list: List[float]
    T: float
    num_paths: int
    seed: int
    correction_scale: float = 1.0
    meshes: Dict[int, MeshSamples] = field(default_factory=dict)
    limit: Optional[np.ndarray] = None
    limit_w: Optional[np.ndarray] = None


def clt_experiment(
    kernel: CovarianceKernel,
    tf: TestFunction,
    eta_model: EtaModel,
    n_list: Sequence[int],
    num_paths: int,
    t_list: Sequence[float],
    seed: int,
    T: Optional[float] = None,
    threads: Optional[int] = None,
    correction_scale: float = 1.0,
) -> CLTResult:
    """Phi_n samples for every n plus an independent limit-law sample at the finest n.

    ``correction_scale`` multiplies the variance of the correction process B
    (1 reproduces E[B_t^2] = eta(t)).
    """
    n_list = [int(n) for n in n_list]
    if not n_list or sorted(n_list) != n_list:
        raise InvalidParameters("n_list must be non-empty and ascending")
    t_list = [float(t) for t in t_list]
    T = max(t_list) if T is None else float(T)
    if any(t <= 0 or t > T for t in t_list):
        raise InvalidParameters("every t must lie in (0, T]")
    res = CLTResult(kernel.name, tf.label, eta_model, n_list, t_list, T, int(num_paths), int(seed), correction_scale)
    L = len(t_list)
    for n in n_list:
        grid = Partition(n, T)
        batch = sample_paths(make_sampler(kernel, grid), num_paths, seed, PATHS, threads)
        cols = [delta_n(batch.values, tf, t, n) for t in t_list]
        idx = [grid.index(t) for t in t_list]

        def stack(get):
            return np.stack([get(c) for c in cols], axis=-1) if cols else np.empty((num_paths, 0))

        res.meshes[n] = MeshSamples(
            n=n,
            phi=stack(lambda c: c.phi_n),
            w=batch.values[:, idx].reshape(num_paths, L),
            psi=stack(lambda c: c.psi_n),
            r=stack(lambda c: c.r_n),
            identity_residual=stack(lambda c: c.identity_residual),
            boundary_diff=stack(lambda c: c.f_t - c.boundary_value),
            jitter_used=batch.jitter_used,
        )
    nf = n_list[-1]
    grid = Partition(nf, T)
    lim = sample_paths(make_sampler(kernel, grid), num_paths, seed, LIMIT_PATHS, threads)
    cor = sample_correction(eta_model, grid, num_paths, seed, threads, scale=correction_scale)
    res.limit = np.stack(
        [limit_law_sample(lim.values, cor.increments, tf, t, nf) for t in t_list], axis=-1
    ).reshape(num_paths, L)
    res.limit_w = lim.values[:, [grid.index(t) for t in t_list]].reshape(num_paths, L)
    return res
