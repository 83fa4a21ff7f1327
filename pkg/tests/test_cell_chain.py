import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs
from scipy import integrate, special, stats

from mixlab import cell_chain as cc
from mixlab.errors import EmptyRange

STADIUM = cc.KernelFamily.named("stadium", 10 ** 6)
CUSPS = cc.KernelFamily.named("cusps")
SEMI = cc.KernelFamily.named("semidispersing")
TWIST = cc.KernelFamily.named("linked_twist", 10 ** 6)
POINT = cc.KernelFamily.named("point_mass", 10 ** 6)


def test_hurwitz_matches_scipy():
    for s in (1.5, 2.0, 7 / 3, 3.0):
        for a in (1.0, 7.0, 1e4, 1e7):
            assert cc.hurwitz(s, a) == pytest.approx(special.zeta(s, a), rel=1e-12)


def test_stadium_row_continuum_mass():
    row = cc.kernel_row(STADIUM, 300)
    assert (row.lo, row.hi) == (100, 900)
    # closed form: integral of 3m/(8k^2) over [m/3, 3m] is 3/8 (3 - 1/3) = 1
    assert 0.98 <= row.normalizer <= 1.02


@pytest.mark.parametrize("fam", [STADIUM, TWIST, CUSPS, SEMI, POINT],
                         ids=["stadium", "twist", "cusps", "semi", "point"])
@given(m=hs.integers(1, 3000))
def test_rows_sum_to_one(fam, m):
    row = cc.kernel_row(fam, m)
    probs = row.probs(fam)
    assert abs(probs.sum() - 1.0) <= 1e-12
    # the compiled normalizer agrees with direct summation of the weights
    assert row.normalizer == pytest.approx(fam.weight(m, row.support()).sum(), rel=1e-12)
    assert np.all(probs > 0)


def test_twist_row_range_and_normalization():
    row = cc.kernel_row(TWIST, 100)
    beta = cc.BETA_TWIST
    assert row.lo == math.ceil(100 / beta) and row.hi == math.floor(100 * beta)
    rep = cc.twist_normalization(100)
    assert rep["continuum_c0"] == pytest.approx(0.5)
    assert rep["stated_c0"] == pytest.approx(2.0)
    assert rep["numeric_c0"] == pytest.approx(0.5, abs=0.01)


def test_cusps_range_is_sqrt_to_square():
    row = cc.kernel_row(CUSPS, 400)
    assert (row.lo, row.hi) == (20, 160_000)


def test_empty_range():
    fam = cc.KernelFamily("narrow", m_max=50, range_cap=5, rule=cc.RATIO, beta=1.5,
                          terms=((1.0, 1.0, 2.0),))
    with pytest.raises(EmptyRange):
        cc.kernel_row(fam, 40)


def test_sampler_matches_row_pmf():
    m = 200
    paths = cc.sample_paths(STADIUM, m, 40_000, 1, seed=3)
    k = paths[:, 1]
    row = cc.kernel_row(STADIUM, m)
    assert k.min() >= row.lo and k.max() <= row.hi
    edges = np.linspace(row.lo, row.hi + 1, 9).astype(int)
    obs = np.histogram(k, edges)[0]
    pmf = row.pmf(STADIUM, np.arange(row.lo, row.hi + 1))
    exp = np.add.reduceat(pmf, edges[:-1] - row.lo) * k.size
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_power_sampler_far_tail():
    # rows reaching 10^8 use the inverse-CDF branch; compare a tail probability exactly
    m = 10_000
    paths = cc.sample_paths(CUSPS, m, 50_000, 1, seed=4)
    thr = m ** 1.2
    p = cc.exact_exceedance(CUSPS, m, thr)
    frac = (paths[:, 1] > thr).mean()
    assert abs(frac - p) <= 4 * math.sqrt(p * (1 - p) / 50_000)


def test_sample_chain_contract():
    assert list(cc.sample_chain(STADIUM, 500, 0, 1).indices) == [500]
    a = cc.sample_chain(STADIUM, 10_000, 50, 7)
    b = cc.sample_chain(STADIUM, 10_000, 50, 7)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert len(a) == 51 and a.base_time[-1] == a.indices.sum()
    for m, k in zip(a.indices[:-1], a.indices[1:]):
        lo, hi = STADIUM.bounds(m)
        assert lo <= k <= hi
    assert set(cc.sample_chain(POINT, 77, 30, 1).indices) == {77}


def test_sample_paths_worker_invariant():
    a = cc.sample_paths(SEMI, 1000, 2500, 5, seed=1, workers=1)
    b = cc.sample_paths(SEMI, 1000, 2500, 5, seed=1, workers=3)
    np.testing.assert_array_equal(a, b)


def test_stadium_mean_log_step_drift():
    paths = cc.sample_paths(STADIUM, 10_000, 20_000, 1, seed=2)
    mc = np.log(paths[:, 1] / 10_000).mean()
    assert mc == pytest.approx(cc.expected_log_ratio(STADIUM, 10_000), abs=0.01)


def test_stadium_drift():
    assert cc.STADIUM_DRIFT == pytest.approx(-0.37327, abs=1e-5)
    for m in range(10, 400, 7):
        assert cc.expected_log_ratio(STADIUM, m) < 0
    for m in (100, 1000, 10_000):
        assert abs(cc.expected_log_ratio(STADIUM, m) - cc.STADIUM_DRIFT) < 0.02
    assert cc.expected_log_ratio(POINT, 123) == 0.0


def test_stadium_drift_continuum_integral():
    # with u = k/m the row density is 3/(8u^2) on [1/3, 3] (unit mass); E[ln u] = 1 - (5/4) ln 3
    assert integrate.quad(lambda u: 3 / (8 * u * u), 1 / 3, 3)[0] == pytest.approx(1.0)
    val, _ = integrate.quad(lambda u: math.log(u) * 3 / (8 * u * u), 1 / 3, 3)
    assert val == pytest.approx(1 - 1.25 * math.log(3), abs=1e-12)


def test_cusps_drift_against_quadrature():
    m = 10 ** 4
    lo, hi = math.sqrt(m), float(m) ** 2  # u = k/m over [m^-1/2, m]
    dens = lambda k: k ** (-7 / 3)  # noqa: E731
    num = integrate.quad(lambda lk: math.log(math.exp(lk) / m) * dens(math.exp(lk)) * math.exp(lk),
                         math.log(lo), math.log(hi), limit=200)[0]
    den = integrate.quad(lambda lk: dens(math.exp(lk)) * math.exp(lk),
                         math.log(lo), math.log(hi), limit=200)[0]
    continuum = num / den
    got = cc.expected_log_ratio(CUSPS, m)
    # discrete sum against the continuum: the lattice matters only near k = sqrt(m) = 100
    assert got == pytest.approx(continuum, abs=0.02)
    assert got < 0


def test_stationary_invariance_and_exponent():
    res = cc.chain_stationary(cc.KernelFamily.named("stadium", 20_000), tol=1e-12)
    fam = cc.KernelFamily.named("stadium", 20_000)
    again = cc.apply_kernel(fam, res.pi)
    again /= again.sum()
    assert 0.5 * np.abs(again - res.pi).sum() < 1e-11
    assert -3.2 <= res.exponent <= -2.8
    assert not res.reducible and res.pi.sum() == pytest.approx(1.0)


def test_apply_kernel_matches_dense_matrix():
    fam = cc.KernelFamily.named("linked_twist", 300)
    rng = np.random.default_rng(0)
    pi = rng.random(300)
    P = np.zeros((300, 300))
    for m in range(1, 301):
        row = cc.kernel_row(fam, m)
        P[m - 1, row.lo - 1:row.hi] = row.probs(fam)
    np.testing.assert_allclose(cc.apply_kernel(fam, pi), pi @ P, rtol=1e-12, atol=1e-15)


def test_point_mass_is_reducible():
    res = cc.chain_stationary(POINT, 1000)
    assert res.reducible and math.isnan(res.exponent)
    rep = cc.verify_conditions(cc.KernelFamily.named("point_mass", 10 ** 4), [100, 1000],
                               samples=200)
    assert rep.reducible and not rep.a1["pass"]


def test_verify_conditions_stadium():
    rep = cc.verify_conditions(STADIUM, [1000, 10_000], b=1.0, samples=2000, seed=1)
    assert rep.a1["pass"] and rep.h2a["pass"]
    assert abs(rep.a1["rate_geometric"] / rep.a1["exp_eta_bar"] - 1) <= 0.15
    assert rep.a1["jensen_gap"] > 0
    d = rep.to_dict()
    assert d["family"] == "stadium" and len(d["per_n"]) == 2


def test_exact_exceedance_bounds():
    assert cc.exact_exceedance(STADIUM, 300, 0) == pytest.approx(1.0)
    assert cc.exact_exceedance(STADIUM, 300, 900) == 0.0


def test_vector_csv(tmp_path):
    cc.write_vector_csv(tmp_path / "v.csv", [0.5, 0.25])
    assert (tmp_path / "v.csv").read_text().splitlines() == ["m,value", "1,0.5", "2,0.25"]
