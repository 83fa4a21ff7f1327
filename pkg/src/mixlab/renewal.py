"""Renewal sequences: the delta recursion, the inverse series of 1 - alpha p(z),
the convolution identity linking them, and the unit-circle sweep of p(z).

Series are indexed from 0.  ``p[0]`` is always 0 (a renewal needs at least one
step); ``a[0]`` is the initial mass and equals ``delta[0]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .fitting import fit_power_law


@dataclass(frozen=True)
class RenewalSequence:
    p: np.ndarray
    a: np.ndarray
    alpha: float
    discarded_mass: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if p.shape != a.shape or p.ndim != 1:
            raise LengthMismatch("p and a must be 1-d arrays of equal length")
        if p[0] != 0.0:
            raise ValueError("p[0] must be 0")
        if (p < 0).any() or (a < 0).any():
            raise ValueError("p and a must be nonnegative")
        if p.sum() > 1.0 + 1e-12:
            raise ValueError("total mass of p exceeds 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "a", a)

    @property
    def N(self) -> int:
        return self.p.size - 1


@dataclass
class RenewalResult:
    delta: np.ndarray
    q: np.ndarray
    exponent: float
    exponent_stderr: float
    c1: float
    c2: float
    convolution_deviation: float


def power_law_p(alpha0: float, N: int) -> tuple[np.ndarray, float]:
    """``p_k`` proportional to ``k^-(1+alpha0)`` on 1..N, unit mass.

    Also returns the mass the untruncated family puts beyond N.
    """
    from scipy.special import zeta

    k = np.arange(1, N + 1, dtype=float)
    w = k ** (-(1.0 + alpha0))
    total = zeta(1.0 + alpha0, 1)
    p = np.zeros(N + 1)
    p[1:] = w / w.sum()
    return p, float(zeta(1.0 + alpha0, N + 1) / total)


def point_mass_p(k: int, N: int) -> np.ndarray:
    p = np.zeros(N + 1)
    p[k] = 1.0
    return p


def power_law_a(alpha0: float, N: int, a0: float = 0.5) -> np.ndarray:
    """``a_k`` proportional to ``k^-alpha0`` for k >= 1 with total mass 1."""
    k = np.arange(1, N + 1, dtype=float)
    w = k ** (-alpha0)
    a = np.empty(N + 1)
    a[0] = a0
    a[1:] = (1.0 - a0) * w / w.sum()
    return a


def power_law_sequence(alpha0: float = 2.0, N: int = 10_000, alpha: float = 0.5) -> RenewalSequence:
    p, lost = power_law_p(alpha0, N)
    return RenewalSequence(p, power_law_a(alpha0, N), alpha, lost)


def renewal_recursion(seq: RenewalSequence) -> np.ndarray:
    """delta_n = a_n + alpha * sum_{l=1..n} p_l delta_{n-l}."""
    p, a, alpha = seq.p, seq.a, seq.alpha
    delta = np.empty_like(a)
    delta[0] = a[0]
    for n in range(1, a.size):
        # np.sum is pairwise, keeping the O(N^2) convolution well conditioned
        delta[n] = a[n] + alpha * np.sum(p[1:n + 1] * delta[n - 1::-1])
    return delta


def inverse_series(p, alpha: float, N: int | None = None) -> np.ndarray:
    """Coefficients of ``1 / (1 - alpha p(z))`` up to degree N."""
    p = np.asarray(p, dtype=float)
    N = p.size - 1 if N is None else N
    pp = np.zeros(N + 1)
    m = min(N, p.size - 1)
    pp[1:m + 1] = p[1:m + 1]
    q = np.empty(N + 1)
    q[0] = 1.0
    for n in range(1, N + 1):
        q[n] = alpha * np.sum(pp[n:0:-1] * q[:n])
    return q


def sandwich_report(p, q, alpha: float, alpha0: float) -> dict:
    """Checks ``alpha p_n <= q_n`` and reports the range of ``q_n n^(1+alpha0)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = np.arange(1, q.size)
    lower_ok = bool(np.all(q[1:] >= alpha * p[1:q.size] * (1 - 1e-12)))
    pos = p[1:q.size] > 0
    with np.errstate(over="ignore"):
        ratio = q[1:][pos] / p[1:q.size][pos]
    scaled = q[1:] * n ** (1.0 + alpha0)
    return {
        "lower_bound_holds": lower_ok,
        "min_q_over_p": float(ratio.min()) if ratio.size else float("nan"),
        "max_q_over_p": float(ratio.max()) if ratio.size else float("nan"),
        "min_q_scaled": float(scaled.min()),
        "max_q_scaled": float(scaled.max()),
    }


def convolution_check(q, a, delta) -> float:
    """max_n |delta_n - sum_{k<=n} q_{n-k} a_k|."""
    q, a, delta = (np.asarray(v, dtype=float) for v in (q, a, delta))
    if not (q.size == a.size == delta.size):
        raise LengthMismatch(f"lengths {q.size}, {a.size}, {delta.size} differ")
    dev = 0.0
    for n in range(q.size):
        dev = max(dev, abs(delta[n] - np.sum(q[n::-1] * a[:n + 1])))
    return float(dev)


def unit_circle_sweep(p, grid_size: int = 4096, exclude: float = 0.0) -> float:
    """min over theta_j = 2 pi j / grid_size, j >= 1, of |1 - p(e^{i theta_j})|.

    ``exclude`` drops grid angles within that circular distance of 0.  For
    aperiodic p the modulus vanishes linearly as theta -> 0, so only the
    minimum over a fixed set away from 0 is stable under grid refinement.
    """
    p = np.asarray(p, dtype=float)
    k = np.arange(p.size)
    theta = 2.0 * np.pi * np.arange(1, grid_size) / grid_size
    theta = theta[np.minimum(theta, 2.0 * np.pi - theta) >= exclude]
    best = np.inf
    for chunk in np.array_split(theta, max(1, theta.size * p.size // 2_000_000 + 1)):
        vals = np.exp(1j * np.outer(chunk, k)) @ p
        best = min(best, float(np.abs(1.0 - vals).min()))
    return best


def envelope_fit(delta, alpha0: float | None = None, window: tuple[int, int] | None = None):
    """Power-law fit of ``delta_n`` over ``window`` (default [N/100, N]).

    Returns (exponent, stderr, c1, c2) with c1, c2 the min and max of
    ``delta_n n^alpha0`` over the window; alpha0 defaults to minus the fitted
    exponent.
    """
    delta = np.asarray(delta, dtype=float)
    N = delta.size - 1
    lo, hi = window or (max(1, N // 100), N)
    n = np.unique(np.round(np.geomspace(lo, hi, 60)).astype(int))
    slope, err, _ = fit_power_law(n, delta[n])
    a0 = -slope if alpha0 is None else alpha0
    nn = np.arange(lo, hi + 1)
    scaled = delta[lo:hi + 1] * nn ** a0
    return slope, err, float(scaled.min()), float(scaled.max())


def analyze(seq: RenewalSequence, alpha0: float | None = None) -> RenewalResult:
    delta = renewal_recursion(seq)
    q = inverse_series(seq.p, seq.alpha)
    slope, err, c1, c2 = envelope_fit(delta, alpha0)
    # the lower bound reads c1 * alpha * n^-alpha0
    return RenewalResult(delta, q, slope, err, c1 / seq.alpha, c2,
                         convolution_check(q, seq.a, delta))


def write_series_csv(path, values, header=("index", "value")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, v in enumerate(values):
            w.writerow((i, repr(float(v))))


def read_series_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[1]) for r in rows[1:]])
