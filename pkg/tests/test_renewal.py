import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs
from hypothesis.extra.numpy import arrays

from mixlab import renewal as rn
from mixlab.errors import LengthMismatch


def long_division(p, alpha, N):
    """Coefficients of 1 / (1 - alpha p(z)) by polynomial long division."""
    den = -alpha * np.asarray(p, dtype=float)[:N + 1].copy()
    den[0] += 1.0
    rem = np.zeros(N + 1)
    rem[0] = 1.0
    q = np.zeros(N + 1)
    for n in range(N + 1):
        q[n] = rem[n] / den[0]
        rem[n:] -= q[n] * den[:N + 1 - n]
    return q


def unit_p(draw_vals):
    p = np.concatenate(([0.0], draw_vals))
    return p / p.sum()


prob_vectors = arrays(np.float64, hs.integers(2, 40), elements=hs.floats(0.0, 1.0)).filter(
    lambda v: v.sum() > 1e-3)


def test_delta_hand_unrolled():
    seq = rn.RenewalSequence(np.array([0, 0.5, 0.5]), np.array([1.0, 0, 0]), 0.5)
    np.testing.assert_allclose(rn.renewal_recursion(seq), [1.0, 0.25, 0.3125], atol=1e-15)


def test_single_step_renewal_is_geometric():
    N = 60
    alpha = 1 - 1e-9
    seq = rn.RenewalSequence(rn.point_mass_p(1, N), np.eye(N + 1)[0], alpha)
    d = rn.renewal_recursion(seq)
    np.testing.assert_allclose(d, alpha ** np.arange(N + 1), rtol=1e-13)


def test_q_first_terms_and_point_mass():
    p = np.array([0, 0.3, 0.2, 0.5])
    a = 0.7
    q = rn.inverse_series(p, a)
    assert q[0] == 1.0
    assert q[1] == pytest.approx(a * 0.3)
    assert q[2] == pytest.approx(a ** 2 * 0.09 + a * 0.2)
    np.testing.assert_allclose(rn.inverse_series(rn.point_mass_p(1, 20), 0.5),
                               0.5 ** np.arange(21), rtol=1e-15)


def test_q_matches_long_division_random_512():
    rng = np.random.default_rng(9)
    p = unit_p(rng.random(512))
    q = rn.inverse_series(p, 0.7)
    np.testing.assert_allclose(q, long_division(p, 0.7, 512), atol=1e-12, rtol=0)


@given(prob_vectors, hs.floats(0.05, 0.99))
def test_q_long_division_property(w, alpha):
    p = unit_p(w)
    N = p.size - 1
    np.testing.assert_allclose(rn.inverse_series(p, alpha), long_division(p, alpha, N),
                               atol=1e-12, rtol=0)


@given(prob_vectors, hs.floats(0.05, 0.99), hs.integers(0, 2 ** 32 - 1))
def test_convolution_identity_property(w, alpha, seed):
    p = unit_p(w)
    a = np.random.default_rng(seed).random(p.size)
    seq = rn.RenewalSequence(p, a, alpha)
    d = rn.renewal_recursion(seq)
    q = rn.inverse_series(p, alpha)
    assert rn.convolution_check(q, a, d) <= 1e-12 * max(1.0, np.abs(d).max())


@given(prob_vectors, hs.floats(0.05, 0.99))
def test_delta_equals_q_for_unit_atom(w, alpha):
    p = unit_p(w)
    a = np.eye(p.size)[0]
    np.testing.assert_allclose(rn.renewal_recursion(rn.RenewalSequence(p, a, alpha)),
                               rn.inverse_series(p, alpha), atol=1e-15, rtol=1e-13)


@given(prob_vectors, hs.floats(0.05, 0.99), hs.integers(0, 2 ** 32 - 1))
def test_monotone_in_a_and_sandwich(w, alpha, seed):
    p = unit_p(w)
    rng = np.random.default_rng(seed)
    a = rng.random(p.size)
    bump = a + rng.random(p.size) * (rng.random(p.size) < 0.3)
    d0 = rn.renewal_recursion(rn.RenewalSequence(p, a, alpha))
    d1 = rn.renewal_recursion(rn.RenewalSequence(p, bump, alpha))
    assert np.all(d1 >= d0 - 1e-15)
    q = rn.inverse_series(p, alpha)
    assert np.all(q[1:] >= alpha * p[1:] * (1 - 1e-12))
    assert rn.sandwich_report(p, q, alpha, 2.0)["lower_bound_holds"]


def test_convolution_length_mismatch():
    with pytest.raises(LengthMismatch):
        rn.convolution_check(np.ones(3), np.ones(4), np.ones(3))


def test_unit_circle_sweep():
    assert rn.unit_circle_sweep(rn.point_mass_p(2, 4), 1000) == pytest.approx(0.0, abs=1e-12)
    assert rn.unit_circle_sweep(np.array([0, 0.5, 0.5]), 1000) > 0
    p, _ = rn.power_law_p(2.0, 1000)
    assert rn.unit_circle_sweep(p, 4000) > 0
    # the modulus vanishes linearly at theta = 0, so refinement is compared away from it
    coarse = rn.unit_circle_sweep(p, 4000, exclude=np.pi / 8)
    fine = rn.unit_circle_sweep(p, 8000, exclude=np.pi / 8)
    assert coarse > 0
    assert f"{coarse:.3g}" == f"{fine:.3g}"


def test_power_law_envelope():
    seq = rn.power_law_sequence(2.0, 10_000, 0.5)
    assert seq.discarded_mass < 1e-3
    res = rn.analyze(seq, alpha0=2.0)
    assert -2.15 <= res.exponent <= -1.85
    assert res.convolution_deviation <= 1e-10
    assert 0 < res.c1 and res.c1 * 0.5 <= res.c2


def test_sequence_validation():
    with pytest.raises(ValueError):
        rn.RenewalSequence(np.array([0.1, 0.5]), np.array([1.0, 0.0]), 0.5)
    with pytest.raises(ValueError):
        rn.RenewalSequence(np.array([0.0, 0.7, 0.7]), np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        rn.RenewalSequence(np.array([0.0, 1.0]), np.zeros(2), 0.0)


def test_series_csv_roundtrip(tmp_path):
    v = np.array([1.0, 0.1, 1e-300])
    rn.write_series_csv(tmp_path / "d.csv", v)
    np.testing.assert_array_equal(rn.read_series_csv(tmp_path / "d.csv"), v)
