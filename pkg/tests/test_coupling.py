import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from mixlab import coupling as cp
from mixlab.errors import InvalidBand
from mixlab.renewal import point_mass_p


def random_budget(seed, N=60, eps=1e-5, c0=0.4, symmetric=False):
    rng = np.random.default_rng(seed)
    p = np.concatenate(([0.0], rng.random(N)))
    p /= p.sum()
    a1 = rng.random(N + 1) * (rng.random(N + 1) < 0.5)
    a1[0] += 0.5
    a1 /= a1.sum()
    a2 = a1.copy() if symmetric else rng.random(N + 1)
    a2 /= a2.sum()
    return cp.CouplingBudget(p, a1, a2, eps, c0, seed)


def test_symmetric_exact_couples_fraction_c0():
    b = cp.default_budget(N=300, c0=0.4)
    tr = cp.simulate_coupling(b, "exact")
    np.testing.assert_array_equal(tr.s1, tr.s2)
    np.testing.assert_allclose(tr.d[tr.s1 > 0], 0.4, rtol=1e-15)


def test_geometric_cascade():
    b = cp.geometric_budget(40, 0.5)
    tr = cp.simulate_coupling(b, "exact")
    np.testing.assert_allclose(tr.s1, 0.5 ** np.arange(41), rtol=1e-15)
    np.testing.assert_allclose(tr.s1[2:], 0.5 * tr.s1[1:-1], rtol=1e-15)
    np.testing.assert_allclose(tr.tail1, cp.geometric_oracle(0.5, 40), atol=1e-12)


@given(hs.floats(0.1, 0.9))
def test_geometric_oracle_any_c0(c0):
    tr = cp.simulate_coupling(cp.geometric_budget(80, c0), "exact")
    np.testing.assert_allclose(tr.tail1, cp.geometric_oracle(c0, 80), atol=1e-12)


def test_geometric_trace_is_classified_exponential():
    rep = cp.verify_coupling_bounds(cp.simulate_coupling(cp.geometric_budget(400, 0.4)), 2.0)
    assert rep["tail_shape"] == "exponential"
    assert not rep["power_law_applicable"] and not rep["tail_pass"]


@settings(max_examples=40)
@given(hs.integers(0, 2 ** 32 - 1), hs.sampled_from(cp.MODES), hs.floats(0.1, 0.9))
def test_mass_telescopes(seed, mode, c0):
    b = random_budget(seed, c0=c0, eps=1e-5)
    tr = cp.simulate_coupling(b, mode)
    for fam, a in ((1, b.a1), (2, b.a2)):
        assert np.abs(cp.mass_balance(tr, a.sum(), fam)).max() <= 1e-12
    assert np.all((tr.d1 >= 0) & (tr.d1 <= 1)) and np.all((tr.d2 >= 0) & (tr.d2 <= 1))
    assert np.all(tr.s1 >= 0) and np.all(tr.s2 >= 0)


@settings(max_examples=40)
@given(hs.integers(0, 2 ** 32 - 1))
def test_band_modes_bracket_exact(seed):
    b = random_budget(seed, eps=1e-3)
    lo, ex, hi = (cp.simulate_coupling(b, m) for m in ("low", "exact", "high"))
    for attr in ("s1", "s2"):
        x, y, z = getattr(lo, attr), getattr(ex, attr), getattr(hi, attr)
        assert np.all(x <= y * (1 + 1e-12)) and np.all(y <= z * (1 + 1e-12))


@settings(max_examples=40)
@given(hs.integers(0, 2 ** 32 - 1), hs.sampled_from(("exact", "random")))
def test_uncoupled_tail_nonincreasing(seed, mode):
    tr = cp.simulate_coupling(random_budget(seed), mode)
    assert np.all(np.diff(tr.tail1) <= 1e-15) and np.all(np.diff(tr.tail2) <= 1e-15)


def test_pointwise_eta_can_drop_when_c0_grows():
    # with p a unit delay, eta_k = c0 (1 - c0)^k: a larger c0 front-loads the coupling
    lo = cp.simulate_coupling(cp.geometric_budget(10, 0.5))
    hi = cp.simulate_coupling(cp.geometric_budget(10, 0.9))
    assert hi.eta1[2] < lo.eta1[2]
    assert np.all(np.cumsum(hi.eta1) >= np.cumsum(lo.eta1))


@settings(max_examples=40)
@given(hs.integers(0, 2 ** 32 - 1), hs.floats(0.1, 0.8), hs.floats(0.01, 0.1))
def test_cumulative_coupling_monotone_in_c0(seed, c0, dc):
    b = random_budget(seed, symmetric=True, c0=c0)
    b2 = cp.CouplingBudget(b.p, b.a1, b.a2, b.eps_d, c0 + dc, b.seed)
    e1 = np.cumsum(cp.simulate_coupling(b, "exact").eta1)
    e2 = np.cumsum(cp.simulate_coupling(b2, "exact").eta1)
    assert np.all(e2 >= e1 - 1e-14)


def test_invalid_band():
    b = cp.CouplingBudget(point_mass_p(1, 5), np.eye(6)[0], np.eye(6)[0], 1.0, 0.5)
    with pytest.raises(InvalidBand):
        cp.simulate_coupling(b)
    with pytest.raises(InvalidBand):
        cp.CouplingBudget(point_mass_p(1, 5), np.eye(6)[0], np.eye(6)[0], -0.1, 0.5)


def test_alpha0_two_budget_bounds():
    tr = cp.simulate_coupling(cp.default_budget(2.0, 3000, seed=1), "random")
    rep = cp.verify_coupling_bounds(tr, 2.0)
    assert rep["s_pass"] and rep["d_pass"] and rep["tail_pass"], rep
    assert rep["tail_shape"] == "power"


def test_corrupted_d_raises_fail_flag():
    tr = cp.simulate_coupling(cp.default_budget(2.0, 1000, seed=1), "random")
    assert cp.verify_coupling_bounds(tr, 2.0)["d_pass"]
    tr.d1[500] = 1e-6
    rep = cp.verify_coupling_bounds(tr, 2.0)
    assert not rep["d_pass"] and not rep["pass"]


def test_shifted_budget_is_asymmetric():
    b = cp.default_budget(N=200, shifted=True)
    assert b.a2[0] == 0.3 and b.a2.sum() == pytest.approx(1.0)


def test_trace_csv(tmp_path):
    tr = cp.simulate_coupling(cp.geometric_budget(3, 0.5))
    cp.write_trace_csv(tmp_path / "t.csv", tr)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "k,s1,s2,d,eta1,eta2,uncoupled_tail"
    assert lines[1] == "0,1.0,1.0,0.5,0.5,0.5,0.5"
