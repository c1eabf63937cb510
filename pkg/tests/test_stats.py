import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from lctails.distributions import (
    DistributionSpec,
    binomial_moment,
    exponential_onesided_tail,
    orderstat_median_exact,
    sample,
)
from lctails.stats import (
    bootstrap_mean_ci,
    clopper_pearson,
    conditional_heavy_count,
    conditional_tail_sum,
    empirical_N_moment,
    empirical_median_orderstat,
    empirical_tail,
    exceedance_count,
    kth_largest_abs,
    lr_norm,
    median_ci,
    order_statistics,
    paley_zygmund_check,
    tail_from_counts,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = st.lists(finite, min_size=1, max_size=12).map(np.array)


# -- observables -------------------------------------------------------------

def test_order_statistics_examples():
    assert order_statistics([3, -1, 2]).tolist() == [3, 2, 1]
    assert order_statistics([0, 0, 0]).tolist() == [0, 0, 0]
    assert order_statistics([-5, 4, -4, 1]).tolist() == [5, 4, 4, 1]


def test_exceedance_examples():
    assert exceedance_count([0.5, 2.0, -3.0], 1) == 1
    assert exceedance_count([0.5, 2.0, -3.0], -1e9) == 3
    assert exceedance_count([1, 1, 1], 1) == 3


def test_lr_norm_examples():
    assert lr_norm([3, 4], 2) == pytest.approx(5)
    assert lr_norm([3, 4], math.inf) == 4
    assert lr_norm([1, 1, 1, 1], 4) == pytest.approx(4 ** 0.25)
    with pytest.raises(ValueError):
        lr_norm([1, 2], 0.5)


def test_lr_norm_no_overflow():
    assert lr_norm([1e300, 1e300], 4) == pytest.approx(1e300 * 2 ** 0.25)
    assert lr_norm([0.0, 0.0], 3) == 0.0


@settings(max_examples=200)
@given(vectors)
def test_order_statistics_monotone(x):
    o = order_statistics(x)
    assert np.all(np.diff(o) <= 0)
    assert o[0] == np.max(np.abs(x)) and o[-1] == np.min(np.abs(x))
    for k in range(1, x.size + 1):
        assert kth_largest_abs(x[None, :], k)[0] == o[k - 1]


@settings(max_examples=200)
@given(vectors, finite, finite)
def test_exceedance_monotone_in_t(x, s, t):
    lo, hi = sorted((s, t))
    assert exceedance_count(x, lo) >= exceedance_count(x, hi)


@settings(max_examples=200)
@given(vectors, st.floats(0, 1e6))
def test_two_sided_reduction(x, t):
    two = int(np.count_nonzero(np.abs(x) >= t))
    plus, minus = exceedance_count(x, t), exceedance_count(-x, t)
    assert plus + minus >= two
    if t > 0:
        assert plus + minus == two
    o = order_statistics(x)
    for k in range(1, x.size + 1):
        if o[k - 1] >= t:
            assert plus >= k / 2 or minus >= k / 2


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12).map(np.array),
       st.floats(1, 50), st.floats(1, 50))
def test_lr_norm_nonincreasing_in_r(x, r1, r2):
    lo, hi = sorted((r1, r2))
    assert lr_norm(x, hi) <= lr_norm(x, lo) * (1 + 1e-12)
    assert lr_norm(x, math.inf) <= lr_norm(x, hi) * (1 + 1e-12)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12).map(np.array), st.floats(1, 2))
def test_holder_step(x, r):
    n = x.size
    assert lr_norm(x, r) <= n ** (1 / r - 0.5) * lr_norm(x, 2) * (1 + 1e-12) + 1e-300


# -- tails and intervals ---------------------------------------------------------

def test_empirical_tail_examples():
    e = empirical_tail([1, 2, 3], 2.5, 0.95)
    assert e.point == pytest.approx(1 / 3) and e.ci_low <= 1 / 3 <= e.ci_high
    e = empirical_tail([1, 2, 3], 10)
    assert e.point == 0 and e.ci_low == 0
    e = empirical_tail(np.zeros(10), 1.0, 0.95)
    assert e.ci_high == pytest.approx(1 - 0.025 ** 0.1, rel=1e-12)
    assert e.ci_high == pytest.approx(0.3085, abs=1e-4)
    with pytest.raises(ValueError):
        empirical_tail([], 1.0)


def test_clopper_pearson_matches_beta_quantiles():
    lo, hi = clopper_pearson(7, 50, 0.99)
    assert lo == pytest.approx(sps.beta.ppf(0.005, 7, 44))
    assert hi == pytest.approx(sps.beta.ppf(0.995, 8, 43))
    assert clopper_pearson(50, 50, 0.9)[1] == 1.0


def test_clopper_pearson_coverage():
    rng = np.random.default_rng(17)
    hits = 0
    for q in np.linspace(0.02, 0.98, 10):
        for k in rng.binomial(60, q, size=100):
            lo, hi = clopper_pearson(int(k), 60, 0.95)
            hits += lo <= q <= hi
    assert hits >= 930


@settings(max_examples=200)
@given(st.integers(1, 10_000), st.data(), st.floats(0.5, 0.999))
def test_tail_estimate_ordering(m, data, level):
    k = data.draw(st.integers(0, m))
    e = tail_from_counts(k, m, level)
    assert 0 <= e.ci_low <= e.point <= e.ci_high <= 1


def test_tail_estimate_flags_rare_events():
    e = tail_from_counts(0, 1000, 0.99)
    assert e.rare
    assert e.resolution == pytest.approx(1 - 0.005 ** (1 / 1000))
    assert not tail_from_counts(5, 1000).rare


# -- bootstrap and moments -------------------------------------------------------

def test_bootstrap_matches_index_resampling():
    rng = np.random.default_rng(2)
    v = rng.poisson(3, size=3000).astype(float)
    est = bootstrap_mean_ci(v, 2000, 0.95, seed=5)
    idx = rng.integers(0, v.size, size=(2000, v.size))
    ref = np.quantile(v[idx].mean(axis=1), [0.025, 0.975])
    assert est.ci_low == pytest.approx(ref[0], abs=0.02)
    assert est.ci_high == pytest.approx(ref[1], abs=0.02)


def test_bootstrap_constant_values():
    est = bootstrap_mean_ci(np.full(10, 2.0))
    assert est.point == est.ci_low == est.ci_high == 2.0


def test_N_moment_zero_when_no_exceedance():
    b = sample(DistributionSpec.cube(4), 1000, seed=1)
    assert empirical_N_moment(b, 2.0, 3).point == 0


@pytest.fixture(scope="module")
def exp64():
    return sample(DistributionSpec.exponential(64), 100_000, seed=20)


def test_N_moment_mean_exponential(exp64):
    q = exponential_onesided_tail(1.0)
    exact = 64 * q
    assert exact == pytest.approx(32 * math.exp(-math.sqrt(2)))
    est = empirical_N_moment(exp64, 1.0, 1, seed=3)
    assert est.ci_low <= exact <= est.ci_high


def test_N_moment_second_exponential(exp64):
    t = 1.5
    exact = t ** 4 * binomial_moment(64, exponential_onesided_tail(t), 2)
    est = empirical_N_moment(exp64, t, 2, seed=4)
    assert est.ci_low <= exact <= est.ci_high


# -- Paley-Zygmund ---------------------------------------------------------

def test_paley_zygmund_examples():
    pz = paley_zygmund_check(np.full(5, 3.0), 0.5)
    assert pz.lhs == 1 and pz.rhs == 0.25 and pz.holds
    pz = paley_zygmund_check([0.0, 2.0], 0.5)
    assert pz.lhs == 0.5 and pz.rhs == pytest.approx(1 / 8) and pz.holds
    assert paley_zygmund_check([0.0, 2.0, 5.0], 1 - 1e-9).rhs < 1e-15
    with pytest.raises(ValueError):
        paley_zygmund_check([0.0, 0.0], 0.5)


@settings(max_examples=300)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=40).filter(lambda v: max(v) > 1e-100),
       st.floats(0.01, 0.99))
def test_paley_zygmund_always_holds(values, theta):
    assert paley_zygmund_check(values, theta).holds


# -- conditioning ---------------------------------------------------------------

def test_conditional_unrestricted(exp64):
    res = conditional_tail_sum(exp64, lambda x: np.ones(len(x), bool), 1.0, seed=1)
    assert res.pA.point == 1
    assert res.total.point == pytest.approx(exceedance_count(exp64.data, 1.0).mean())


def test_conditional_empty():
    b = sample(DistributionSpec.exponential(3), 100, seed=1)
    res = conditional_tail_sum(b, lambda x: np.zeros(len(x), bool), 1.0)
    assert res.insufficient and res.pA.point == 0


def test_conditional_factorization(exp64):
    a, t = 0.5, 1.2
    res = conditional_tail_sum(exp64, lambda x: x[:, 0] >= a, t, level=0.99, seed=2)
    pa = exponential_onesided_tail(a)
    exact = pa * (exponential_onesided_tail(max(a, t)) / pa + 63 * exponential_onesided_tail(t))
    assert res.total.ci_low <= exact <= res.total.ci_high


def test_heavy_count():
    b = sample(DistributionSpec.exponential(8), 20_000, seed=3)
    k = conditional_heavy_count(b, lambda x: x[:, 0] >= 1.0, 1.0, 1.0)
    # P(X_1 >= 1 | A) = 1, others about 0.12 < e^{-1}
    assert k == 1


# -- medians -----------------------------------------------------------------

def test_median_single_coordinate():
    m = empirical_median_orderstat(1, 1, DistributionSpec.exponential(1), 100_000, seed=5)
    med, lo, hi = median_ci(np.abs(sample(DistributionSpec.exponential(1), 100_000, seed=5).data[:, 0]), 0.997)
    assert m == med
    assert lo <= math.log(2) / math.sqrt(2) <= hi


def test_median_monotone_in_k():
    spec = DistributionSpec.gaussian(2)
    assert empirical_median_orderstat(2, 2, spec, 5000, 1) <= empirical_median_orderstat(2, 1, spec, 5000, 1)


def test_median_large_n_matches_oracle():
    x = sample(DistributionSpec.exponential(1024), 20_000, seed=6).data
    med, lo, hi = median_ci(kth_largest_abs(x, 1), 0.99)
    assert lo <= orderstat_median_exact(1024, 1) <= hi


def test_median_k_bounds():
    with pytest.raises(ValueError):
        empirical_median_orderstat(3, 4, DistributionSpec.exponential(3), 10, 0)
