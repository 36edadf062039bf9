import math

import numpy as np
import pytest

from midclt import riemann as R
from midclt.conditions import Partition, eta_estimate
from midclt.constants import EtaModel, zero_eta_model
from midclt.errors import GridMismatch, InvalidParameters, UnsupportedFunction
from midclt.kernels import bifbm_kernel, brownian_kernel
from midclt.simulate import make_sampler, sample_paths
from midclt.stats import moment_summary

HAND = np.array([0.0, 1.0, 2.0])
QUAD, CUBIC, SIN, LIN = (R.test_function(k) for k in ("quadratic", "cubic", "sin", "linear"))


def fbm_paths(n, num, seed=7):
    return sample_paths(make_sampler(bifbm_kernel(0.25), Partition(n, 1.0)), num, seed).values


def test_registry():
    assert set(R.TEST_FUNCTIONS) >= {"quadratic", "cubic", "sin"}
    with pytest.raises(UnsupportedFunction):
        R.test_function("exp")


@pytest.mark.parametrize("label", sorted(R.TEST_FUNCTIONS))
def test_derivatives_consistent(label):
    assert max(R.test_function(label).derivative_errors()) <= 1e-6


def test_phi_n_examples():
    assert R.phi_n(HAND, QUAD, 1.0, 2) == 2.0
    assert R.phi_n(HAND, CUBIC, 1.0, 2) == 6.0
    paths = fbm_paths(16, 5)
    for t in (0.5, 0.8, 1.0):
        N = math.floor(16 * t / 2)
        assert R.phi_n(paths, LIN, t, 16) == pytest.approx(paths[:, 2 * N] - paths[:, 0], abs=1e-14)
    assert np.all(R.phi_n(paths, CUBIC, 0.1, 16) == 0.0)
    with pytest.raises(InvalidParameters):
        R.phi_n(paths, CUBIC, 1.5, 16)


def test_psi_n_examples():
    assert R.psi_n(HAND, CUBIC, 1.0, 2) == 0.0
    paths = fbm_paths(16, 5)
    assert np.all(R.psi_n(paths, LIN, 1.0, 16) == 0.0)
    sym = np.array([0.0, 0.4, 0.8, 0.1, -0.6])
    assert R.psi_n(sym, CUBIC, 1.0, 4)[()] == pytest.approx(6 * 0.1 * ((-0.6 - 0.1) ** 2 - (0.1 - 0.8) ** 2), abs=1e-15)


def test_taylor_remainder_examples():
    assert R.taylor_remainder(HAND, CUBIC, 1.0, 2) == -2.0
    paths = fbm_paths(16, 5)
    assert np.all(R.taylor_remainder(paths, QUAD, 1.0, 16) == 0.0)
    a, m, b = paths[:, 0:16:2], paths[:, 1:16:2], paths[:, 2:17:2]
    expect = np.sum(-(m - a) ** 3 - (b - m) ** 3, axis=1)
    assert R.taylor_remainder(paths, CUBIC, 1.0, 16) == pytest.approx(expect, abs=1e-13)


def test_sin_remainder_matches_taylor_form():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = x + rng.uniform(-2, 2, size=200)
    taylor = 2 * (np.sin(y) - np.sin(x) - np.cos(x) * (y - x) + 0.5 * np.sin(x) * (y - x) ** 2)
    assert SIN.remainder(x, y) == pytest.approx(taylor, abs=1e-12)


@pytest.mark.parametrize("tf", [LIN, QUAD, CUBIC, SIN], ids=lambda f: f.label)
def test_pathwise_identity(tf):
    paths = fbm_paths(32, 50)
    for t in (0.3, 0.5, 1.0):
        d = R.delta_n(paths, tf, t, 32)
        assert np.all(np.abs(d.identity_residual) <= 1e-10 * (1 + np.abs(d.phi_n)))


def test_delta_examples():
    paths = fbm_paths(16, 5)
    d = R.delta_n(paths, LIN, 1.0, 16)
    assert np.allclose(d.delta_boundary, d.phi_n, rtol=0, atol=1e-15)
    d = R.delta_n(paths, CUBIC, 0.1, 16)
    assert np.all(d.delta_boundary == 0.0)
    d = R.delta_n(paths, CUBIC, 0.99, 16)
    assert np.array_equal(d.f_t, paths[:, 15] ** 3)
    assert np.array_equal(d.boundary_value, paths[:, 14] ** 3)


def test_limit_law_examples():
    paths = fbm_paths(8, 6)
    rng = np.random.default_rng(1)
    inc = rng.normal(size=(6, 8))
    assert R.limit_law_sample(paths, inc, LIN, 1.0, 8) == pytest.approx(paths[:, -1] - paths[:, 0], abs=1e-15)
    assert R.limit_law_sample(paths, np.zeros((6, 8)), CUBIC, 1.0, 8) == pytest.approx(paths[:, -1] ** 3, abs=1e-14)
    one = np.array([[0.3, 1.1]])
    got = R.limit_law_sample(one, np.array([[0.4]]), QUAD, 1.0, 1)
    assert got[0] == pytest.approx(1.1 ** 2 / 2 - 0.3 ** 2 / 2 - 0.5 * 0.4, abs=1e-15)
    with pytest.raises(GridMismatch):
        R.limit_law_sample(paths, inc[:, :5], CUBIC, 1.0, 8)


def test_clt_experiment_empty():
    res = R.clt_experiment(bifbm_kernel(0.25), CUBIC, zero_eta_model(), [8, 16], 0, [0.5, 1.0], 3)
    assert res.meshes[16].phi.shape == (0, 2)
    assert res.limit.shape == (0, 2)


def test_clt_experiment_validation():
    with pytest.raises(InvalidParameters):
        R.clt_experiment(bifbm_kernel(0.25), CUBIC, zero_eta_model(), [16, 8], 1, [1.0], 3)
    with pytest.raises(InvalidParameters):
        R.clt_experiment(bifbm_kernel(0.25), CUBIC, zero_eta_model(), [8], 1, [0.0], 3)


def test_clt_experiment_shapes_and_determinism():
    kw = dict(kernel=bifbm_kernel(0.25), tf=CUBIC, eta_model=EtaModel("linear", 1.0), n_list=[8, 16],
              num_paths=20, t_list=[0.5, 1.0], seed=9)
    a, b = R.clt_experiment(**kw), R.clt_experiment(**kw)
    assert a.meshes[8].phi.shape == (20, 2)
    assert np.array_equal(a.meshes[16].phi, b.meshes[16].phi)
    assert np.array_equal(a.limit, b.limit)
    # limit paths come from their own streams
    assert not np.array_equal(a.limit_w, a.meshes[16].w)


def test_brownian_quadratic_exact_decomposition():
    # for Brownian motion Phi_n(1) = W_1^2 / 2 - Psi_n / 2 path by path
    n = 64
    W = sample_paths(make_sampler(brownian_kernel(), Partition(n, 1.0)), 200, 5).values
    d = R.delta_n(W, QUAD, 1.0, n)
    assert d.phi_n == pytest.approx(W[:, -1] ** 2 / 2 - d.psi_n / 2, abs=1e-12)


def test_fbm_quadratic_moments():
    n, N = 16, 40000
    d = R.delta_n(fbm_paths(n, N, seed=21), QUAD, 1.0, n)
    s = moment_summary(d.phi_n)
    # E[W_1^2 / 2] = 1/2 and E[Psi_n] = 0 by stationary increments
    assert abs(s["mean"] - 0.5) <= 4 * s["se_mean"]
    e = eta_estimate(bifbm_kernel(0.25), n, 1.0)
    sp = moment_summary(d.psi_n)
    # Cov(X^2, Y^2) = 2 Cov(X, Y)^2 gives Var(Psi_n) = 2 (eta_n^+ - eta_n^-)
    assert abs(sp["variance"] - 2 * e.eta) <= 4 * sp["se_var_empirical"]
