"""Markov chains on cell indices.

A kernel row is a sum of separable terms ``c_j m^{a_j} k^{-s_j}`` on an integer
range ``[lo(m), hi(m)]``.  Row masses come from Hurwitz zeta differences, so
rows spanning 10^8 indices never have to be materialized.  Sampling is exact:
a short table scan for ``k < K0`` and inverse-CDF rejection from the continuous
power law above it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import EmptyRange, InsufficientSamples, NoConvergence
from .fitting import fit_power_law
from .inducing import _ordered_map

BETA_TWIST = 1.0 + math.sqrt(2.0)
K0 = 64

# range rules
RATIO, SQRT_SQUARE, POINT = 0, 1, 2

FAMILIES = ("stadium", "linked_twist", "cusps", "semidispersing", "point_mass")


@dataclass(frozen=True)
class KernelFamily:
    """Transition kernel ``w(m, k) = sum_j c_j m^{a_j} k^{-s_j}`` on the admissible range.

    ``m_max`` truncates the index space; ``range_cap`` additionally caps the
    upper end of each row (the square-law families would otherwise reach m^2).
    """

    family: str
    m_max: int = 10 ** 6
    range_cap: int = 10 ** 8
    rule: int = RATIO
    beta: float = 3.0
    terms: tuple = ((0.375, 1.0, 2.0),)

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")

    @classmethod
    def named(cls, family: str, m_max: int | None = None, range_cap: int = 10 ** 8):
        if family == "stadium":
            return cls(family, m_max or 10 ** 6, range_cap, RATIO, 3.0, ((0.375, 1.0, 2.0),))
        if family == "linked_twist":
            return cls(family, m_max or 10 ** 6, range_cap, RATIO, BETA_TWIST, ((1.0, 1.0, 2.0),))
        if family == "cusps":
            return cls(family, m_max or range_cap, range_cap, SQRT_SQUARE, 0.0,
                       ((1.0, 2.0 / 3.0, 7.0 / 3.0),))
        if family == "semidispersing":
            return cls(family, m_max or range_cap, range_cap, SQRT_SQUARE, 0.0,
                       ((1.0, 1.0, 3.0), (1.0, 0.0, 2.0)))
        if family == "point_mass":
            return cls(family, m_max or 10 ** 6, range_cap, POINT, 1.0, ((1.0, 0.0, 0.0),))
        raise ValueError(f"unknown kernel family {family!r}; choose from {FAMILIES}")

    @property
    def coef(self) -> np.ndarray:
        return np.array([t[0] for t in self.terms])

    @property
    def mexp(self) -> np.ndarray:
        return np.array([t[1] for t in self.terms])

    @property
    def kexp(self) -> np.ndarray:
        return np.array([t[2] for t in self.terms])

    @property
    def upper(self) -> int:
        return min(self.m_max, self.range_cap)

    def bounds(self, m: int) -> tuple[int, int]:
        return _bounds(self.rule, self.beta, int(m), self.upper)

    def weight(self, m: int, k):
        k = np.asarray(k, dtype=float)
        return sum(c * m ** a * k ** (-s) for c, a, s in self.terms)


# --------------------------------------------------------------------------
# compiled helpers
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _bounds(rule, beta, m, upper):
    if rule == RATIO:
        lo = max(1, int(math.ceil(m / beta)))
        hi = int(math.floor(beta * m))
    elif rule == SQRT_SQUARE:
        # ceil(sqrt(m)) with the float estimate corrected in integers
        r = int(math.sqrt(m))
        while r * r < m:
            r += 1
        while r > 1 and (r - 1) * (r - 1) >= m:
            r -= 1
        lo = max(1, r)
        hi = m * m
    else:
        lo = m
        hi = m
    return lo, min(hi, upper)


@nb.njit(cache=True)
def hurwitz(s, a):
    """Hurwitz zeta ``sum_{k>=0} (a+k)^-s`` for s > 1, a >= 1 (Euler-Maclaurin)."""
    total = 0.0
    x = a
    while x < 32.0:
        total += x ** (-s)
        x += 1.0
    tail = x ** (1.0 - s) / (s - 1.0) + 0.5 * x ** (-s)
    t = s * x ** (-s - 1.0)
    tail += t / 12.0
    t *= (s + 1.0) * (s + 2.0) / (x * x)
    tail -= t / 720.0
    t *= (s + 3.0) * (s + 4.0) / (x * x)
    tail += t / 30240.0
    return total + tail


@nb.njit(cache=True)
def power_sum(s, lo, hi):
    """``sum_{k=lo..hi} k^-s``."""
    if hi < lo:
        return 0.0
    if s == 0.0:
        return float(hi - lo + 1)
    if hi - lo < 64:
        acc = 0.0
        for k in range(hi, lo - 1, -1):
            acc += float(k) ** (-s)
        return acc
    return hurwitz(s, float(lo)) - hurwitz(s, float(hi + 1))


@nb.njit(cache=True)
def _cell_mass(s, k):
    """``int_{k-1}^{k} x^-s dx`` computed without cancellation."""
    if s == 1.0:
        return -math.log1p(-1.0 / k)
    return float(k) ** (1.0 - s) * math.expm1((1.0 - s) * math.log1p(-1.0 / k)) / (s - 1.0)


@nb.njit(cache=True)
def _sample_power(s, lo, hi):
    """Exact draw from ``k^-s`` on the integers [lo, hi]."""
    if lo == hi:
        return lo
    if s == 0.0:
        return lo + int(np.random.random() * (hi - lo + 1))
    top = min(hi, K0 - 1)
    head = power_sum(s, lo, top) if lo < K0 else 0.0
    tail = power_sum(s, max(lo, K0), hi) if hi >= K0 else 0.0
    u = np.random.random() * (head + tail)
    if u < head:
        acc = 0.0
        for k in range(lo, top + 1):
            acc += float(k) ** (-s)
            if u < acc:
                return k
        return top
    a = float(max(lo, K0) - 1)
    b = float(hi)
    pa = a ** (1.0 - s)
    pb = b ** (1.0 - s)
    while True:
        v = np.random.random()
        x = (pa - v * (pa - pb)) ** (1.0 / (1.0 - s))
        k = int(math.floor(x)) + 1
        if k > hi:
            k = hi
        if k <= max(lo, K0) - 1:
            k = max(lo, K0)
        if np.random.random() * _cell_mass(s, k) <= float(k) ** (-s):
            return k


@nb.njit(cache=True)
def _row_masses(rule, beta, upper, coef, mexp, kexp, m, out):
    lo, hi = _bounds(rule, beta, m, upper)
    total = 0.0
    for j in range(coef.size):
        out[j] = coef[j] * float(m) ** mexp[j] * power_sum(kexp[j], lo, hi)
        total += out[j]
    return lo, hi, total


@nb.njit(cache=True)
def _next(rule, beta, upper, coef, mexp, kexp, m, buf):
    lo, hi, total = _row_masses(rule, beta, upper, coef, mexp, kexp, m, buf)
    if hi < lo:
        return -1
    u = np.random.random() * total
    j = 0
    acc = buf[0]
    while u >= acc and j < coef.size - 1:
        j += 1
        acc += buf[j]
    return _sample_power(kexp[j], lo, hi)


@nb.njit(cache=True, nogil=True)
def _paths(rule, beta, upper, coef, mexp, kexp, m0, steps, seed):
    np.random.seed(seed)
    out = np.empty((m0.size, steps + 1), np.int64)
    buf = np.empty(coef.size)
    for i in range(m0.size):
        m = m0[i]
        out[i, 0] = m
        for t in range(steps):
            m = _next(rule, beta, upper, coef, mexp, kexp, m, buf)
            if m < 0:
                out[i, t + 1:] = -1
                break
            out[i, t + 1] = m
    return out


def _args(fam: KernelFamily):
    return (fam.rule, float(fam.beta), fam.upper, fam.coef, fam.mexp, fam.kexp)


# --------------------------------------------------------------------------
# rows
# --------------------------------------------------------------------------

@dataclass
class KernelRow:
    m: int
    lo: int
    hi: int
    normalizer: float          # unnormalized mass on the truncated range
    truncated_mass: float      # share of the untruncated row mass cut off by hi
    term_masses: np.ndarray

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def probs(self, fam: KernelFamily, limit: int = 10 ** 7) -> np.ndarray:
        if self.size > limit:
            raise MemoryError(f"row of {self.size} entries exceeds materialization limit")
        w = fam.weight(self.m, self.support())
        return w / w.sum()

    def pmf(self, fam: KernelFamily, k):
        k = np.asarray(k)
        inside = (k >= self.lo) & (k <= self.hi)
        return np.where(inside, fam.weight(self.m, np.maximum(k, 1)) / self.normalizer, 0.0)


def kernel_row(fam: KernelFamily, m: int) -> KernelRow:
    """Row of the kernel at index m with its normalizer and truncated share."""
    m = int(m)
    if not 1 <= m <= fam.m_max:
        raise ValueError(f"m = {m} outside [1, {fam.m_max}]")
    masses = np.empty(len(fam.terms))
    lo, hi, total = _row_masses(*_args(fam), m, masses)
    if hi < lo or total <= 0.0:
        raise EmptyRange(f"truncation removed the admissible range of row {m}")
    if fam.rule == POINT:
        lost = 0.0
    else:
        full_hi = int(math.floor(fam.beta * m)) if fam.rule == RATIO else m * m
        lost_abs = sum(c * m ** a * power_sum(s, hi + 1, full_hi) for c, a, s in fam.terms
                       ) if full_hi > hi else 0.0
        lost = lost_abs / (total + lost_abs)
    return KernelRow(m, lo, hi, float(total), float(lost), masses)


def twist_normalization(m: int = 100) -> dict:
    """Numerical normalizing constant of the linked-twist row against ``beta - 1/beta``."""
    fam = KernelFamily.named("linked_twist")
    row = kernel_row(fam, m)
    return {"m": m, "numeric_c0": 1.0 / row.normalizer,
            "continuum_c0": 1.0 / (BETA_TWIST - 1.0 / BETA_TWIST),
            "stated_c0": BETA_TWIST - 1.0 / BETA_TWIST}


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

@dataclass
class ChainPath:
    indices: np.ndarray

    @property
    def base_time(self) -> np.ndarray:
        return np.cumsum(self.indices)

    def __len__(self):
        return int(self.indices.size)


def _seed32(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint32)[0])


def sample_chain(fam: KernelFamily, m0: int, steps: int, seed: int) -> ChainPath:
    if not 1 <= m0 <= fam.m_max:
        raise ValueError("start index outside the truncated index space")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    kernel_row(fam, m0)
    out = _paths(*_args(fam), np.array([m0], np.int64), steps,
                 _seed32(np.random.SeedSequence(seed)))[0]
    if (out < 0).any():
        raise EmptyRange("chain reached a row with an empty admissible range")
    return ChainPath(out)


def sample_paths(fam: KernelFamily, m0: int, samples: int, steps: int, seed: int,
                 replica: int = 1000, workers: int = 1) -> np.ndarray:
    """``samples x (steps + 1)`` independent paths from m0.

    Paths are generated in replicas of fixed size with spawned seeds, so the
    result does not depend on ``workers``.
    """
    sizes = [min(replica, samples - i) for i in range(0, samples, replica)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = _args(fam)

    def one(i):
        return _paths(*args, np.full(sizes[i], m0, np.int64), steps, _seed32(seeds[i]))

    out = np.concatenate(_ordered_map(one, range(len(sizes)), workers))
    if (out < 0).any():
        raise EmptyRange("chain reached a row with an empty admissible range")
    return out


# --------------------------------------------------------------------------
# drift
# --------------------------------------------------------------------------

def _log_sum(s, lo, hi, m, split=10 ** 6):
    """``sum_{k=lo..hi} k^-s ln(k/m)``; explicit to ``split``, Euler-Maclaurin above."""
    top = min(hi, split)
    k = np.arange(lo, top + 1, dtype=float)
    acc = float(np.sum(k ** (-s) * np.log(k / m)))
    if hi <= split:
        return acc
    a, b = float(top + 1), float(hi)

    def F(x):
        return x ** (1 - s) / (1 - s) * (math.log(x / m) - 1.0 / (1 - s))

    def f(x):
        return x ** (-s) * math.log(x / m)

    def df(x):
        return x ** (-s - 1) * (1.0 - s * math.log(x / m))

    return acc + F(b) - F(a) + 0.5 * (f(a) + f(b)) + (df(b) - df(a)) / 12.0


def expected_log_ratio(fam: KernelFamily, m: int) -> float:
    """``E[ln(k/m)]`` under the row at m."""
    row = kernel_row(fam, m)
    if fam.rule == POINT:
        return 0.0
    acc = sum(c * m ** a * _log_sum(s, row.lo, row.hi, m) for c, a, s in fam.terms)
    return float(acc / row.normalizer)


STADIUM_DRIFT = 1.0 - 1.25 * math.log(3.0)


# --------------------------------------------------------------------------
# conditions
# --------------------------------------------------------------------------

@dataclass
class ConditionReport:
    family: str
    b: float
    q_h2a: float
    q_h2b: float
    per_n: list = field(default_factory=list)
    a1: dict = field(default_factory=dict)
    h2a: dict = field(default_factory=dict)
    h2b: dict = field(default_factory=dict)
    reducible: bool = False

    def to_dict(self) -> dict:
        return {"family": self.family, "b": self.b, "q_h2a": self.q_h2a, "q_h2b": self.q_h2b,
                "per_n": self.per_n, "a1": self.a1, "h2a": self.h2a, "h2b": self.h2b,
                "reducible": self.reducible}


def _geom_rate(values, t) -> float:
    """exp of the least-squares slope of ln(values) against t."""
    y = np.log(values)
    tt = np.asarray(t, dtype=float)
    return float(math.exp(np.polyfit(tt, y, 1)[0]))


def exact_exceedance(fam: KernelFamily, m: int, threshold: float) -> float:
    """``P(k > threshold)`` under the row at m, from the row masses."""
    row = kernel_row(fam, m)
    cut = max(row.lo, int(math.floor(threshold)) + 1)
    if cut > row.hi:
        return 0.0
    mass = sum(c * m ** a * power_sum(s, cut, row.hi) for c, a, s in fam.terms)
    return float(mass / row.normalizer)


def verify_conditions(fam: KernelFamily, n_grid, b: float = 1.0, samples: int = 10_000,
                      seed: int = 0, q_h2a: float = 0.25, q_h2b: float = 0.45,
                      fit_steps: int = 8, workers: int = 1) -> ConditionReport:
    """Monte Carlo check of (A1), (H2)(a) and (H2)(b) along chains started at each n.

    (A1) reports two per-step rates of ``m_t / n``: the arithmetic-mean rate of
    ``E[m_t]/n`` and the geometric-mean rate ``exp(E[ln(m_t/n)]/t)``; the
    latter is the quantity ``exp(eta_bar)`` predicts, the former exceeds it by
    the Jensen gap.
    """
    if samples < 100:
        raise InsufficientSamples("verify_conditions needs at least 100 samples per n")
    n_grid = [int(n) for n in n_grid]
    rep = ConditionReport(fam.family, b, q_h2a, q_h2b)
    rep.reducible = fam.rule == POINT
    seeds = np.random.SeedSequence(seed).spawn(len(n_grid))
    arith, geom, h2a_rates, h2b_mc, h2b_exact = [], [], [], [], []
    for n, ss in zip(n_grid, seeds):
        T = max(1, int(math.floor((b * math.log(n)) ** 2)))
        paths = sample_paths(fam, n, samples, T, _seed32(ss), workers=workers)
        ratio = paths[:, 1:] / n
        t = np.arange(1, T + 1)
        mean_ratio = ratio.mean(axis=0)
        mean_log = np.log(ratio).mean(axis=0)
        rho = q_h2a / (b * math.log(n))
        exceed = (paths[:, 1:] > np.exp(-rho * t) * n).mean(axis=0)
        h2b_p = float((paths[:, 1] > n ** (1.0 - q_h2b)).mean())
        h2b_x = exact_exceedance(fam, n, n ** (1.0 - q_h2b))
        k = min(fit_steps, T)
        arith.append(_geom_rate(mean_ratio[:k], t[:k]))
        geom.append(float(math.exp(np.polyfit(t[:k], mean_log[:k], 1)[0])) if k > 1
                    else float(math.exp(mean_log[0])))
        pos = exceed[:k] > 0
        h2a_rates.append(_geom_rate(exceed[:k][pos], t[:k][pos]) if pos.sum() > 1 else 0.0)
        h2b_mc.append(h2b_p)
        h2b_exact.append(h2b_x)
        rep.per_n.append({
            "n": n, "steps": T, "mean_ratio": mean_ratio[:k].tolist(),
            "mean_log_ratio": mean_log[:k].tolist(), "exceed_h2a": exceed[:k].tolist(),
            "p_h2b": h2b_p, "p_h2b_exact": h2b_x,
        })
    eta_bar = expected_log_ratio(fam, n_grid[-1])
    rate_a = float(np.mean(arith))
    rate_g = float(np.mean(geom))
    rep.a1 = {"rate_arithmetic": rate_a, "rate_geometric": rate_g,
              "exp_eta_bar": math.exp(eta_bar), "jensen_gap": rate_a - rate_g,
              "pass": bool(rate_a < 1.0 - 1e-9 and rate_g < 1.0 - 1e-9)}
    eta0 = float(np.max(h2a_rates))
    rep.h2a = {"eta0": eta0, "rates": h2a_rates, "pass": bool(eta0 < 1.0 - 1e-9)}
    rep.h2b = {"probabilities": h2b_mc, "probabilities_exact": h2b_exact,
               "p": _decay_exponent(n_grid, h2b_mc), "p_exact": _decay_exponent(n_grid, h2b_exact)}
    rep.h2b["pass"] = bool(rep.h2b["p"] > 1.0)
    return rep


def _decay_exponent(ns, probs) -> float:
    ns = np.asarray(ns, dtype=float)
    pr = np.asarray(probs, dtype=float)
    keep = pr > 0
    if keep.sum() < 2:
        return float("inf")
    return float(-np.polyfit(np.log(ns[keep]), np.log(pr[keep]), 1)[0])


# --------------------------------------------------------------------------
# stationary law
# --------------------------------------------------------------------------

@dataclass
class StationaryResult:
    pi: np.ndarray             # pi[m - 1] for m = 1..m_max
    exponent: float
    exponent_stderr: float
    iterations: int
    tv_increment: float
    reducible: bool

    @property
    def m(self) -> np.ndarray:
        return np.arange(1, self.pi.size + 1)


def _row_tables(fam: KernelFamily, m_max: int):
    m = np.arange(1, m_max + 1)
    J = len(fam.terms)
    lo = np.empty(m_max, np.int64)
    hi = np.empty(m_max, np.int64)
    w = np.empty((J, m_max))
    buf = np.empty(J)
    args = (fam.rule, float(fam.beta), m_max, fam.coef, fam.mexp, fam.kexp)
    _tables(*args, lo, hi, w, buf)
    return m, lo, hi, w


@nb.njit(cache=True)
def _tables(rule, beta, upper, coef, mexp, kexp, lo, hi, w, buf):
    for i in range(lo.size):
        m = i + 1
        a, b, total = _row_masses(rule, beta, upper, coef, mexp, kexp, m, buf)
        lo[i] = a
        hi[i] = b
        for j in range(coef.size):
            w[j, i] = coef[j] * float(m) ** mexp[j] / total


def apply_kernel(fam: KernelFamily, pi: np.ndarray, tables=None) -> np.ndarray:
    """One step ``pi -> pi P`` in O(m_max) using prefix sums over source rows."""
    m_max = pi.size
    m, lo, hi, w = tables or _row_tables(fam, m_max)
    k = m
    # sources m with lo(m) <= k <= hi(m) form an interval since lo, hi are monotone
    first = np.searchsorted(hi, k, side="left")
    last = np.searchsorted(lo, k, side="right")
    out = np.zeros(m_max)
    for j, (_, _, s) in enumerate(fam.terms):
        cs = np.concatenate(([0.0], np.cumsum(pi * w[j])))
        out += (cs[last] - cs[first]) * k.astype(float) ** (-s)
    return out


def chain_stationary(fam: KernelFamily, m_max: int | None = None, tol: float = 1e-12,
                     max_iter: int = 100_000, fit_range=None) -> StationaryResult:
    """Stationary distribution of the kernel truncated to [1, m_max] by power iteration."""
    m_max = int(m_max or fam.m_max)
    if fam.m_max != m_max:
        fam = KernelFamily(fam.family, m_max, fam.range_cap, fam.rule, fam.beta, fam.terms)
    tables = _row_tables(fam, m_max)
    pi = np.full(m_max, 1.0 / m_max)
    if fam.rule == POINT:
        return StationaryResult(pi, float("nan"), float("nan"), 0, 0.0, True)
    tv = math.inf
    for it in range(1, max_iter + 1):
        new = apply_kernel(fam, pi, tables)
        new /= new.sum()
        tv = 0.5 * float(np.abs(new - pi).sum())
        pi = new
        if tv < tol:
            break
    else:
        raise NoConvergence(f"power iteration stalled at TV increment {tv:.3e}")
    lo, hi = fit_range or (30, max(31, m_max // 10))
    pts = np.unique(np.round(np.geomspace(lo, hi, 80)).astype(int))
    slope, err, _ = fit_power_law(pts, pi[pts - 1])
    return StationaryResult(pi, slope, err, it, tv, False)


def write_vector_csv(path, values, header=("m", "value"), start: int = 1):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, v in enumerate(np.asarray(values).tolist()):
            w.writerow((i + start, repr(float(v))))
