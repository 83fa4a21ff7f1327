import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from mixlab import geometry as geo
from mixlab import statistics as st
from mixlab.errors import DegenerateVariance, InsufficientSamples, ZeroMeanProduct
from mixlab.inducing import InducedSystem, harvest_ensemble

TWIST = InducedSystem(geo.make_system("linked_twist"))


def const(c, name="c"):
    return st.Observable(name, "constant", value=c)


def state_one():
    return st.Observable("state1", "indicator", (0.5, 1.5, -1.0, 1.0))


# ---------------------------------------------------------------- correlations

@settings(max_examples=15)
@given(hs.floats(-5, 5), hs.floats(-5, 5), hs.integers(0, 2 ** 32 - 1))
def test_constants_are_exactly_uncorrelated(c1, c2, seed):
    corr = st.estimate_correlation(TWIST, const(c1), const(c2), [0, 1, 5, 20], 3000, seed,
                                   burn_in=10)
    assert np.all(corr.estimates == 0.0)
    assert corr.mean_f == c1 and corr.mean_g == c2


def test_lag_zero_is_the_empirical_variance():
    rng = np.random.default_rng(0)
    x = rng.random(5000)
    f = st.Observable("u", "coordinate", coord=0)
    corr = st.estimate_correlation(st.SeriesSource(x), f, f, [0], 5000, 0)
    assert corr.estimates[0] == pytest.approx(np.var(x), rel=1e-12)
    assert corr.estimates[0] >= 0 and np.all(corr.stderr >= 0)


def test_two_state_chain_matches_eigenvalue_law():
    P = np.array([[0.9, 0.1], [0.1, 0.9]])
    # oracle: eigen-decomposition of P gives C_n = pi1 (1 - pi1) lambda_2^n
    w, _ = np.linalg.eig(P)
    lam2 = sorted(w)[0]
    lags = np.arange(0, 21)
    exact = 0.25 * lam2 ** lags
    corr = st.estimate_correlation(st.FiniteChainSource(P), state_one(), state_one(), lags,
                                   10 ** 6, seed=3, n_orbits=10)
    assert lam2 == pytest.approx(0.8)
    assert np.all(np.abs(corr.estimates - exact) <= 3 * corr.stderr)
    assert np.all(corr.counts > 0)


def test_merged_accumulators_equal_single_pass():
    rng = np.random.default_rng(5)
    chunks = [rng.random(3000) for _ in range(4)]
    lags = [0, 1, 7, 30]
    single = st.CorrelationAccumulator(lags, 500)
    parts = []
    for c in chunks:
        single.add(c, c[::-1].copy())
        a = st.CorrelationAccumulator(lags, 500)
        a.add(c, c[::-1].copy())
        parts.append(a)
    merged = parts[0].merge(parts[1]).merge(parts[2].merge(parts[3]))
    for x, y in zip(single.totals(), merged.totals()):
        np.testing.assert_array_equal(x, y)
    s1, s2 = single.series(), merged.series()
    np.testing.assert_array_equal(s1.estimates, s2.estimates)
    np.testing.assert_array_equal(s1.stderr, s2.stderr)


def test_correlation_run_is_worker_invariant():
    f = st.square_in_M()
    args = (st.SystemSource(TWIST, 100), [(f, f)], [0, 4, 16], 60_000, 9, 6)
    a = st.correlation_run(*args, workers=1)[0]
    b = st.correlation_run(*args, workers=3)[0]
    np.testing.assert_array_equal(a.series.estimates, b.series.estimates)
    np.testing.assert_array_equal(a.return_hist, b.return_hist)


def test_insufficient_samples():
    f = const(1.0)
    with pytest.raises(InsufficientSamples):
        st.estimate_correlation(TWIST, f, f, [0], 999, 0)
    acc = st.CorrelationAccumulator([0], 10)
    acc.add(np.ones(50), np.ones(50))
    with pytest.raises(InsufficientSamples):
        acc.series()


def test_correlation_csv(tmp_path):
    corr = st.CorrelationSeries(np.array([1, 2]), np.array([0.5, 0.25]), np.array([0.1, 0.1]),
                                np.array([10, 10]))
    st.write_correlation_csv(tmp_path / "c.csv", corr)
    assert (tmp_path / "c.csv").read_text().splitlines() == [
        "lag,estimate,stderr,count", "1,0.5,0.1,10", "2,0.25,0.1,10"]


# ---------------------------------------------------------------- tails

def test_tail_examples():
    t = st.tail_distribution(np.array([1, 1, 2, 4]), [0, 1, 2, 3, 4])
    np.testing.assert_allclose(t.tail_M, [1, 0.5, 0.25, 0.25, 0])
    # length-biased: 8 excursion states; those still R > n number 8, 4, 2, 1, 0
    np.testing.assert_allclose(t.tail, [1, 0.5, 0.25, 0.125, 0])
    np.testing.assert_allclose(t.level, [0, 0.5, 0.25, 0, 0.25])
    assert t.mean_return == 2.0
    ones = st.tail_distribution(np.ones(1000, dtype=int), [1, 2, 10])
    assert np.all(ones.tail_M == 0) and ones.mean_return == 1.0


@given(hs.lists(hs.integers(1, 200), min_size=1, max_size=300))
def test_tail_tables_are_monotone(times):
    t = st.tail_distribution(np.array(times), np.arange(0, 250))
    assert np.all(np.diff(t.tail_M) <= 0) and np.all(np.diff(t.tail) <= 0)
    assert np.all((t.tail_M >= 0) & (t.tail_M <= 1)) and np.all((t.tail >= 0) & (t.tail <= 1))
    # the whole-space identity: mu(R > n) = mu(M) sum_{k >= n} mu_M(R > k)
    mu_M = 1.0 / np.mean(times)
    np.testing.assert_allclose(t.tail[:-1], mu_M * np.cumsum(t.tail_M[::-1])[::-1][:-1],
                               atol=1e-12)


def test_tail_from_merged_series_matches_concatenation():
    series = harvest_ensemble(TWIST, 4000, 4, seed=2)
    grid = np.arange(1, 64)
    a = st.tail_distribution(series, grid)
    b = st.tail_distribution(np.concatenate([s.return_times for s in series]), grid)
    np.testing.assert_array_equal(a.tail, b.tail)
    np.testing.assert_array_equal(a.counts, b.counts)


def test_level_exponent_linked_twist():
    series = harvest_ensemble(TWIST, 200_000, 4, seed=8)
    slope, err, _ = st.level_exponent(series, 8, 128)
    assert -3.3 <= slope <= -2.7


def test_tail_csv(tmp_path):
    st.write_tail_csv(tmp_path / "t.csv", st.tail_distribution(np.array([1, 2]), [1]))
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "n,tail_M,tail,level,count"


# ---------------------------------------------------------------- C_{n,b}, B_n

def test_psi():
    assert st.psi(100, 2.0) == 84
    assert all(st.psi(n, 2.0) >= 1 for n in range(3, 200))


def test_single_return_is_not_in_cnb(monkeypatch):
    counts = np.array([0, 1, 2, 84, 85] * 200)
    monkeypatch.setattr(st, "_entry_counts", lambda sys, starts, n: counts)
    est = st.cnb_fraction(TWIST, 100, 2.0, budget=1000, start_in_M=True)
    assert est.psi == 84
    assert est.fraction == pytest.approx(0.4)  # only counts 2 and 84 qualify
    assert est.mu_C_and_M == pytest.approx(0.4 / 3)


def test_cnb_contract():
    with pytest.raises(ValueError):
        st.cnb_fraction(TWIST, 2, 2.0, 1000)
    with pytest.raises(InsufficientSamples):
        st.cnb_fraction(TWIST, 10, 2.0, 999)
    est = st.cnb_fraction(TWIST, 64, 2.0, 5000, start_in_M=False, seed=1)
    assert 0.0 <= est.fraction <= 1.0 and 0.0 <= est.mu_C_and_M <= est.fraction


def test_bn_measure():
    mu_B0, _ = st.bn_measure(TWIST, 0, budget=200_000, seed=4)
    se = math.sqrt(2 / 9 / 200_000)
    assert abs(mu_B0 - 2 / 3) <= 3 * se
    # residual mu(B_n) - mu(R > n) = -mu(M and R > n) ~ n^-2 on the cell-measure scale
    series = harvest_ensemble(TWIST, 200_000, 4, seed=6)
    slope, _, icpt = st.level_exponent(series, 8, 128)
    C = math.exp(icpt)  # mu_M(M_n) ~ C n^slope
    n = 32
    _, resid = st.bn_measure(TWIST, n, budget=200_000, seed=7)
    assert abs(resid) < 3 * C * n ** -2.0


# ---------------------------------------------------------------- ratio and gap diagnostics

def _synthetic(lags, values, se):
    lags = np.asarray(lags)
    return st.CorrelationSeries(lags, np.asarray(values, float), np.full(lags.size, se),
                                np.full(lags.size, 1000))


def test_ratio_is_one_on_exact_inputs():
    lags = np.arange(8, 64)
    tails = st.tail_distribution(np.arange(1, 400), lags)
    corr = _synthetic(lags, tails.tail * 0.3 * 0.2, 1e-6)
    r, _ = st.theorem2_ratio(corr, tails, 0.3, 0.2)
    np.testing.assert_allclose(r, 1.0, rtol=1e-12)
    assert st.window_average(r, lags, 10, 50) == pytest.approx(1.0)
    with pytest.raises(ZeroMeanProduct):
        st.theorem2_ratio(corr, tails, 0.0, 0.2)


def test_fastzero_gap_on_synthetic_laws():
    lags = np.arange(8, 129)
    tails = st.TailTable(lags, lags ** -2.0, lags ** -1.0, lags ** -3.0, lags, 10, 1.0)
    corr = _synthetic(lags, 5 * lags ** -3.0, 1e-9)
    c_exp, t_exp, gap, used = st.fastzero_gap(corr, tails, 8, 128)
    assert c_exp == pytest.approx(-3.0) and t_exp == pytest.approx(-1.0)
    assert gap == pytest.approx(2.0) and used.size == lags.size


# ---------------------------------------------------------------- CLT

def test_green_kubo_truncation():
    c = np.array([1.0, 0.5, 0.25, 0.1, 0, 0, 0, 0, 0, 0.3, 0.3])
    corr = _synthetic(np.arange(c.size), c, 0.01)
    var, lag = st.green_kubo(corr)
    assert var == pytest.approx(1.0 + 2 * 0.85)
    assert lag == 3


def test_iid_coin_flips_pass_ks():
    rng = np.random.default_rng(12)
    n, samples, budget = 1000, 1000, 200_000
    x = rng.choice([-1.0, 1.0], budget + samples * (n + 1))
    f = st.Observable("u", "coordinate", coord=0)
    res = st.clt_statistic(st.SeriesSource(x), f, n, samples, seed=0, corr_budget=budget,
                           max_lag=10, n_orbits=10)
    assert res.ks < 1.63 / math.sqrt(samples)
    assert res.sigma_green_kubo == pytest.approx(1.0, abs=0.02)


def test_coboundary_is_flagged():
    rng = np.random.default_rng(13)
    n, samples, budget = 1000, 500, 200_000
    hh = rng.random(budget + samples * (n + 1) + 1)
    x = hh[:-1] - hh[1:]  # f = h - h o T: partial sums telescope
    f = st.Observable("u", "coordinate", coord=0)
    try:
        res = st.clt_statistic(st.SeriesSource(x), f, n, samples, seed=0, corr_budget=budget,
                               max_lag=10, n_orbits=10)
    except DegenerateVariance:
        return
    assert not res.passed


def test_degenerate_variance():
    f = st.Observable("zero", "constant", value=0.0)
    with pytest.raises(DegenerateVariance):
        st.clt_statistic(TWIST, f, 100, 100, seed=0, corr_budget=20_000, max_lag=10,
                         n_orbits=2, burn_in=10)


def test_observable_catalog():
    traj = st.Trajectory(np.array([0.1, 0.5, 1.5]), np.array([0.5, 0.5, 0.5]),
                         np.array([True, True, False]))
    ind = st.Observable("i", "indicator", (0.0, 1.0, 0.0, 1.0), support="M", center=0.25)
    np.testing.assert_allclose(ind(traj), [0.75, 0.75, 0.0])
    sm = st.Observable("s", "smooth_indicator", (0.0, 1.0, 0.0, 1.0), width=0.2)
    np.testing.assert_allclose(sm(traj), [0.5, 1.0, 0.0])
    assert ind.bound == 0.75 and sm.bound == 1.0
    assert ind.at(TWIST, geo.TorusPoint(0.3, 0.3)) == 0.75
    assert st.square_in_M().centered_on_M(0.25).center == 0.25
