import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from mixlab.errors import DegenerateFit
from mixlab.fitting import fit_power_law, log_bins


def test_exact_power_law():
    x = np.arange(1, 50, dtype=float)
    slope, err, icpt = fit_power_law(x, x ** -2.0)
    assert slope == pytest.approx(-2.0, abs=1e-12)
    assert err == pytest.approx(0.0, abs=1e-10)
    assert icpt == pytest.approx(0.0, abs=1e-10)


def test_noisy_cubic_law():
    rng = np.random.default_rng(4)
    x = np.geomspace(1, 1000, 40)
    y = 5 * x ** -3.0 * (1 + 0.01 * rng.standard_normal(x.size))
    slope = fit_power_law(x, y)[0]
    assert -3.1 <= slope <= -2.9


def test_degenerate_inputs():
    with pytest.raises(DegenerateFit):
        fit_power_law([1, 2], [1, 0.5])
    with pytest.raises(DegenerateFit):
        fit_power_law([1, 2, 3, 4], [1, 0, 1, 1])
    with pytest.raises(DegenerateFit):
        fit_power_law([2, 2, 2, 2], [1, 2, 3, 4])


@given(hs.floats(-5, 5), hs.floats(0.1, 10))
def test_recovers_any_exponent(a, c):
    x = np.geomspace(1, 100, 10)
    assert fit_power_law(x, c * x ** a)[0] == pytest.approx(a, abs=1e-9)


def test_log_bins_are_increasing_integers():
    e = log_bins(8, 128, 2)
    assert e[0] == 8 and e[-1] == 128 and np.all(np.diff(e) > 0)
