"""Exact Gaussian path sampling on a uniform partition.

Every path draws its normals from its own Philox stream keyed by
(seed, purpose, n, path index), so batches are reproducible in any
execution order and W / B independence holds by construction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conditions import MAX_LATTICE, Partition
from .constants import EtaModel, eta_eval
from .errors import InvalidParameters, InvalidPartition, NonMonotoneEta, NotPositiveDefinite
from .kernels import CovarianceKernel

PATHS = 1
LIMIT_PATHS = 2
CORRECTION = 3

JITTER_SCHEDULE = (0.0, 1e-14, 1e-12, 1e-10)
THREADS_ENV = "MIDCLT_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def stream(seed: int, purpose: int, n: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(n), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def normals(seed, purpose, n, num_paths, width, threads=None) -> np.ndarray:
    """(num_paths, width) standard normals, row i from stream i."""
    out = np.empty((num_paths, width))
    if num_paths == 0 or width == 0:
        return out

    def fill(rows):
        for i in rows:
            out[i] = stream(seed, purpose, n, i).standard_normal(width)

    workers = min(threads or default_threads(), num_paths)
    if workers <= 1:
        fill(range(num_paths))
    else:
        chunks = np.array_split(np.arange(num_paths), workers)
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(fill, chunks))
    return out


def sample_times(kernel: CovarianceKernel, grid: Partition) -> np.ndarray:
    """Grid times carrying randomness: t_1..t_M, plus t_0 for a random start."""
    t = grid.times
    return t if kernel.random_start else t[1:]


def build_cov_matrix(kernel: CovarianceKernel, grid: Partition) -> np.ndarray:
    if grid.M > MAX_LATTICE:
        raise InvalidPartition(f"grid size {grid.M} exceeds the cap {MAX_LATTICE}")
    C = np.asarray(kernel.matrix(sample_times(kernel, grid)), dtype=float)
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class Factor:
    L: np.ndarray
    jitter_used: float


def factorize(matrix, jitter_schedule=JITTER_SCHEDULE) -> Factor:
    """Cholesky factor of matrix + jitter * max(diag) * I for the first jitter that works."""
    A = np.asarray(matrix, dtype=float)
    if A.size == 0:
        return Factor(np.zeros((0, 0)), 0.0)
    scale = float(np.max(np.diag(A)))
    eye = np.eye(A.shape[0])
    for j in jitter_schedule:
        jit = j * scale
        try:
            return Factor(np.linalg.cholesky(A + jit * eye), jit)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("Cholesky failed at every jitter level")


@dataclass(frozen=True)
class Sampler:
    kernel_name: str
    grid: Partition
    factor: Factor
    random_start: bool


def make_sampler(kernel: CovarianceKernel, grid: Partition, jitter_schedule=JITTER_SCHEDULE) -> Sampler:
    return Sampler(kernel.name, grid, factorize(build_cov_matrix(kernel, grid), jitter_schedule), kernel.random_start)


@dataclass(frozen=True)
class PathBatch:
    grid: Partition
    values: np.ndarray
    kernel_name: str
    seed: int
    jitter_used: float

    @property
    def num_paths(self) -> int:
        return self.values.shape[0]


def sample_paths(sampler: Sampler, num_paths: int, seed: int, purpose: int = PATHS, threads=None) -> PathBatch:
    grid = sampler.grid
    L = sampler.factor.L
    m = L.shape[0]
    z = normals(seed, purpose, grid.n, num_paths, m, threads)
    vals = np.zeros((num_paths, grid.M + 1))
    if num_paths:
        body = z @ L.T
        if sampler.random_start:
            vals[:] = body
        else:
            vals[:, 1:] = body
    return PathBatch(grid, vals, sampler.kernel_name, int(seed), sampler.factor.jitter_used)


@dataclass(frozen=True)
class CorrectionBatch:
    grid: Partition
    increments: np.ndarray
    eta_model: EtaModel
    seed: int


def eta_steps(eta_model: EtaModel, grid: Partition) -> np.ndarray:
    d = np.diff(np.asarray(eta_eval(eta_model, grid.times), dtype=float))
    if np.any(d < -1e-12):
        raise NonMonotoneEta(f"eta decreases by {-float(d.min()):.3e} on the grid")
    return np.maximum(d, 0.0)


def sample_correction(
    eta_model: EtaModel, grid: Partition, num_paths: int, seed: int, threads=None, scale: float = 1.0
) -> CorrectionBatch:
    """Increments of B with Var = scale * (eta(t_{k+1}) - eta(t_k))."""
    if scale < 0:
        raise InvalidParameters("scale must be non-negative")
    var = scale * eta_steps(eta_model, grid)
    z = normals(seed, CORRECTION, grid.n, num_paths, grid.M, threads)
    return CorrectionBatch(grid, z * np.sqrt(var)[None, :], eta_model, int(seed))


# ---------------------------------------------------------------------------
# CSV round trip

def write_paths_csv(batch: PathBatch, path) -> None:
    header = ",".join(f"t_{j}" for j in range(batch.grid.M + 1))
    np.savetxt(path, batch.values, fmt="%.17g", delimiter=",", header=header, comments="")


def read_paths_csv(path) -> np.ndarray:
    vals = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return vals
