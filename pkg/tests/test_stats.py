import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats as sst

from midclt.errors import EmptySample, InsufficientData, NonPositiveVariance, SampleTooSmall
from midclt.stats import decay_fit, kolmogorov_q, ks_one_sample, ks_two_sample, moment_summary


def brute_D(x, y):
    pts = np.concatenate([x, y])
    ex = np.array([np.mean(np.asarray(x) <= p) for p in pts])
    ey = np.array([np.mean(np.asarray(y) <= p) for p in pts])
    return float(np.max(np.abs(ex - ey)))


def test_ks_two_sample_examples():
    x = np.array([0.3, 1.2, -0.5, 2.0])
    r = ks_two_sample(x, x.copy())
    assert r.statistic == 0.0 and r.p_value == 1.0
    assert ks_two_sample([1, 2, 3], [4, 5]).statistic == 1.0
    r = ks_two_sample([1, 2], [1.5, 2.5])
    assert r.statistic == 0.5 == brute_D([1, 2], [1.5, 2.5])
    assert r.sizes == (2, 2) and r.effective_n == 1.0


def test_ks_two_sample_matches_scipy():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=700), rng.normal(0.1, 1.1, size=900)
    ours = ks_two_sample(x, y)
    ref = sst.ks_2samp(x, y, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=0.1)


def test_ks_errors():
    with pytest.raises(EmptySample):
        ks_two_sample([], [1.0])
    with pytest.raises(EmptySample):
        ks_one_sample([], sst.norm.cdf)
    with pytest.raises(ValueError):
        ks_two_sample([np.nan], [1.0])


small_ints = st.lists(st.integers(-3, 3), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(small_ints, small_ints)
def test_ks_d_matches_brute_force_with_ties(x, y):
    assert ks_two_sample(x, y).statistic == pytest.approx(brute_D(x, y), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30),
       st.randoms())
def test_ks_permutation_invariance_and_symmetry(x, y, rnd):
    d = ks_two_sample(x, y)
    xs = list(x)
    rnd.shuffle(xs)
    assert ks_two_sample(xs, y).statistic == d.statistic
    assert ks_two_sample(y, x).statistic == d.statistic
    assert 0.0 <= d.statistic <= 1.0 and 0.0 <= d.p_value <= 1.0


def test_p_value_monotone_in_D():
    rng = np.random.default_rng(8)
    base = rng.normal(size=300)
    res = [ks_two_sample(base, base + s) for s in np.linspace(0, 1, 25)]
    res.sort(key=lambda r: r.statistic)
    assert all(b.p_value <= a.p_value for a, b in zip(res, res[1:]))


def test_kolmogorov_q():
    lam = np.linspace(0.2, 3, 60)
    ours = np.array([kolmogorov_q(v) for v in lam])
    assert ours == pytest.approx(special.kolmogorov(lam), abs=1e-12)
    assert kolmogorov_q(1e-9) == 1.0 and kolmogorov_q(0.0) == 1.0
    assert kolmogorov_q(40.0) == 0.0
    assert np.all(np.diff(ours) <= 0)


def test_ks_one_sample_examples():
    r = ks_one_sample([0.0], sst.norm.cdf)
    assert r.statistic == 0.5
    assert ks_one_sample([-1e6], sst.norm.cdf).statistic == pytest.approx(1.0)
    x = np.random.default_rng(2024).normal(size=5000)
    r = ks_one_sample(x, sst.norm.cdf)
    assert r.p_value > 0.001
    assert r.statistic == pytest.approx(sst.kstest(x, "norm").statistic, abs=1e-15)


def test_moment_summary_examples():
    s = moment_summary([-1.0, 1.0, -1.0, 1.0])
    assert s["mean"] == 0.0 and s["variance"] == pytest.approx(4 / 3)
    s = moment_summary([-1.0, 1.0] * 500)
    assert s["variance"] == pytest.approx(1000 / 999)
    c = moment_summary([2.5] * 10)
    assert c["variance"] == 0.0 and c["skewness"] is None and c["kurtosis"] is None
    assert s["se_mean"] == pytest.approx(math.sqrt(s["variance"] / 1000))
    assert s["se_var"] == pytest.approx(s["variance"] * math.sqrt(2 / 999))
    with pytest.raises(SampleTooSmall):
        moment_summary([-1.0, 1.0])


def test_moment_summary_normal_kurtosis():
    x = np.random.default_rng(6).normal(size=1_000_000)
    s = moment_summary(x)
    assert s["kurtosis"] == pytest.approx(3.0, abs=0.05)
    assert abs(s["skewness"]) < 0.01
    assert s["se_var_empirical"] == pytest.approx(s["se_var"], rel=0.02)


def test_decay_fit_examples():
    n = np.array([64, 128, 256, 512])
    f = decay_fit(n, 3.0 * n ** -0.5)
    assert f.slope == pytest.approx(-0.5, abs=1e-12) and f.residual_norm <= 1e-12
    assert f.n_values == (64, 128, 256, 512)
    assert decay_fit(n, np.full(4, 2.0)).slope == pytest.approx(0.0, abs=1e-12)
    noise = np.random.default_rng(1).normal(size=4)
    f = decay_fit(n, 3.0 * n ** -0.5 * (1 + 0.05 * noise))
    assert -0.6 <= f.slope <= -0.4
    with pytest.raises(InsufficientData):
        decay_fit([1, 2], [1, 2])
    with pytest.raises(NonPositiveVariance):
        decay_fit([1, 2, 3], [1, 0, 2])
