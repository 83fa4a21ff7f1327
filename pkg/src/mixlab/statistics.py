"""Monte Carlo estimators: correlations, return-time tails, the slow-coupling
sets C_{n,b}, the B_n decomposition, power-law fits and the CLT diagnostic.

Estimators are built from block accumulators.  Each orbit is cut into blocks
of ``block_length`` base times; blocks are kept in orbit order, so merging
accumulators from several workers reproduces a single-pass run exactly.
Error bars are delete-one-block jackknife estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import stats as sps

from . import geometry as geo
from .errors import (DegenerateVariance, InsufficientSamples, ZeroMeanProduct)
from .fitting import fit_power_law, log_bins
from .inducing import (InducedSystem, ReturnSeries, Trajectory, _ordered_map,
                       first_hitting_time, in_M, stationary_in_M, stationary_state,
                       trajectory, twist_entry_counts, twist_hitting_times)

__all__ = [
    "Observable", "CorrelationSeries", "CorrelationAccumulator", "TailTable", "CnbEstimate",
    "estimate_correlation", "tail_distribution", "cnb_fraction", "bn_measure",
    "fit_power_law", "clt_statistic", "theorem2_ratio", "fastzero_gap", "psi",
]

MIN_PAIRS = 100


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Bounded observable from a small closed catalog.

    kinds: ``constant`` (``value``), ``indicator`` of the rectangle
    ``rect = (u0, u1, v0, v1)``, ``smooth_indicator`` (the same rectangle with
    linear ramps of width ``width``, Lipschitz constant ``1/width``) and
    ``coordinate`` (``coord`` 0 or 1).  With ``support="M"`` the value is zeroed
    off the inducing set, and ``center`` is subtracted on the support.
    """

    name: str
    kind: str = "indicator"
    rect: tuple = (0.0, 1.0, 0.0, 1.0)
    width: float = 0.0
    coord: int = 0
    value: float = 0.0
    support: str = "all"
    center: float = 0.0

    def raw(self, u, v):
        if self.kind == "constant":
            return np.full(np.shape(u), self.value)
        if self.kind == "coordinate":
            return np.asarray(u if self.coord == 0 else v, dtype=float).copy()
        u0, u1, v0, v1 = self.rect
        if self.kind == "indicator":
            return ((u >= u0) & (u < u1) & (v >= v0) & (v < v1)).astype(float)
        if self.kind == "smooth_indicator":
            h = self.width
            ru = np.clip(np.minimum(u - u0, u1 - u) / h, 0.0, 1.0)
            rv = np.clip(np.minimum(v - v0, v1 - v) / h, 0.0, 1.0)
            return ru * rv
        raise ValueError(f"unknown observable kind {self.kind!r}")

    def __call__(self, traj: Trajectory) -> np.ndarray:
        out = self.raw(traj.u, traj.v) - self.center
        if self.support == "M":
            out = np.where(traj.in_M, out, 0.0)
        return out

    def at(self, sys: InducedSystem, s) -> float:
        if sys.kind == geo.LINKED_TWIST:
            u, v = s.x, s.y
        else:
            u, v = s.r, s.phi
        t = Trajectory(np.array([u]), np.array([v]), np.array([in_M(sys, s)]))
        return float(self(t)[0])

    @property
    def bound(self) -> float:
        if self.kind == "constant":
            return abs(self.value - self.center)
        if self.kind == "coordinate":
            return 2.0 * math.pi + abs(self.center)
        return max(abs(1.0 - self.center), abs(self.center))

    @property
    def reference(self) -> float:
        """Shift applied before accumulation; covariance does not depend on it."""
        return self.value - self.center if self.kind == "constant" else 0.0

    def centered_on_M(self, mean_on_M: float) -> "Observable":
        return Observable(self.name + "_centered", self.kind, self.rect, self.width,
                          self.coord, self.value, "M", mean_on_M)


def square_in_M(lo: float = 0.25, hi: float = 0.75) -> Observable:
    return Observable(f"ind[{lo},{hi})^2", "indicator", (lo, hi, lo, hi), support="M")


# --------------------------------------------------------------------------
# correlation accumulators
# --------------------------------------------------------------------------

@dataclass
class CorrelationSeries:
    lags: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    mean_f: float = float("nan")
    mean_g: float = float("nan")

    def rows(self):
        for row in zip(self.lags.tolist(), self.estimates.tolist(),
                       self.stderr.tolist(), self.counts.tolist()):
            yield row


@nb.njit(cache=True, nogil=True)
def _lagged_products(f, g, lags, block_length, out):
    """out[b, j] += sum over base times t of block b of g[t] * f[t + lags[j]]."""
    maxl = lags.max()
    for t in range(f.size - maxl):
        gt = g[t]
        if gt != 0.0:
            b = t // block_length
            for j in range(lags.size):
                out[b, j] += gt * f[t + lags[j]]


class CorrelationAccumulator:
    """Block sums for ``C_n = E[f(x_{t+n}) g(x_t)] - E[f] E[g]``."""

    def __init__(self, lags, block_length: int = 1000):
        self.lags = np.asarray(lags, dtype=np.int64)
        if self.lags.ndim != 1 or self.lags.size == 0 or (self.lags < 0).any():
            raise ValueError("lags must be a nonempty list of nonnegative integers")
        self.block_length = max(int(block_length), 1)
        self.fg: list[np.ndarray] = []
        self.f: list[np.ndarray] = []
        self.g: list[np.ndarray] = []
        self.n: list[np.ndarray] = []
        self.f_total = 0.0
        self.g_total = 0.0
        self.points = 0

    def add(self, fv: np.ndarray, gv: np.ndarray):
        fv = np.ascontiguousarray(fv, dtype=float)
        gv = np.ascontiguousarray(gv, dtype=float)
        maxl = int(self.lags.max())
        base = fv.size - maxl
        if base <= 0:
            return
        B = self.block_length
        nblk = -(-base // B)
        fg = np.zeros((nblk, self.lags.size))
        _lagged_products(fv, gv, self.lags, B, fg)
        starts = np.arange(nblk) * B
        ends = np.minimum(starts + B, base)
        cf = np.concatenate(([0.0], np.cumsum(fv)))
        cg = np.concatenate(([0.0], np.cumsum(gv)))
        sf = cf[ends[:, None] + self.lags[None, :]] - cf[starts[:, None] + self.lags[None, :]]
        self.fg.append(fg)
        self.f.append(sf)
        self.g.append(cg[ends] - cg[starts])
        self.n.append((ends - starts).astype(np.int64))
        self.f_total += float(fv.sum())
        self.g_total += float(gv.sum())
        self.points += fv.size

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if not np.array_equal(self.lags, other.lags) or self.block_length != other.block_length:
            raise ValueError("cannot merge accumulators with different layouts")
        out = CorrelationAccumulator(self.lags, self.block_length)
        for name in ("fg", "f", "g", "n"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.f_total = self.f_total + other.f_total
        out.g_total = self.g_total + other.g_total
        out.points = self.points + other.points
        return out

    def blocks(self):
        if not self.fg:
            raise InsufficientSamples("no complete lag windows accumulated")
        return (np.concatenate(self.fg), np.concatenate(self.f),
                np.concatenate(self.g), np.concatenate(self.n))

    def totals(self):
        fg, f, g, n = self.blocks()
        return fg.sum(axis=0), f.sum(axis=0), g.sum(), int(n.sum())

    def series(self, shift_f: float = 0.0, shift_g: float = 0.0) -> CorrelationSeries:
        fg, f, g, n = self.blocks()
        N = int(n.sum())
        if N < MIN_PAIRS:
            raise InsufficientSamples(f"only {N} lagged pairs (< {MIN_PAIRS})")

        def est(sfg, sf, sg, cnt):
            return sfg / cnt - (sf / cnt) * (sg / cnt)

        Sfg, Sf, Sg = fg.sum(axis=0), f.sum(axis=0), g.sum()
        c = est(Sfg, Sf, Sg, N)
        nb_ = n.size
        if nb_ > 1:
            loo = est(Sfg[None, :] - fg, Sf[None, :] - f, (Sg - g)[:, None],
                      (N - n)[:, None].astype(float))
            se = np.sqrt((nb_ - 1) / nb_ * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
        else:
            se = np.full(c.shape, np.inf)
        mean_f = self.f_total / self.points + shift_f
        mean_g = self.g_total / self.points + shift_g
        return CorrelationSeries(self.lags.copy(), c, se, np.full(c.shape, N), mean_f, mean_g)


# --------------------------------------------------------------------------
# orbit sources
# --------------------------------------------------------------------------

class SystemSource:
    """Stationary orbit segments of an induced system."""

    def __init__(self, sys: InducedSystem, burn_in: int = 10_000):
        self.sys = sys
        self.burn_in = burn_in
        self.discarded = 0

    def __call__(self, rng: np.random.Generator, length: int) -> Trajectory:
        traj, bad = trajectory(self.sys, rng, length, self.burn_in)
        self.discarded += bad
        return traj


class FiniteChainSource:
    """Stationary finite-state Markov chain; ``u`` holds the state index."""

    def __init__(self, P, in_M_states=()):
        self.P = np.asarray(P, dtype=float)
        w, v = np.linalg.eig(self.P.T)
        pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
        self.pi = pi / pi.sum()
        self.in_M_states = tuple(in_M_states)
        self.discarded = 0

    def __call__(self, rng: np.random.Generator, length: int) -> Trajectory:
        cum = np.cumsum(self.P, axis=1)
        u = rng.random(length)
        states = np.empty(length, dtype=np.int64)
        states[0] = np.searchsorted(np.cumsum(self.pi), u[0])
        _chain_walk(cum, u, states)
        s = states.astype(float)
        return Trajectory(s, np.zeros(length), np.isin(states, self.in_M_states))


@nb.njit(cache=True)
def _chain_walk(cum, u, states):
    for t in range(1, u.size):
        row = cum[states[t - 1]]
        k = 0
        while k < row.size - 1 and u[t] >= row[k]:
            k += 1
        states[t] = k


class SeriesSource:
    """Replays a fixed value array as the ``u`` coordinate of the orbit."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.pos = 0
        self.discarded = 0

    def __call__(self, rng, length):
        seg = self.values[self.pos:self.pos + length]
        self.pos += length
        return Trajectory(seg, np.zeros(seg.size), np.ones(seg.size, dtype=bool))


def _split(budget: int, n_orbits: int):
    return [budget // n_orbits + (i < budget % n_orbits) for i in range(n_orbits)]


@dataclass
class CorrelationRun:
    series: CorrelationSeries
    return_hist: np.ndarray
    accumulator: CorrelationAccumulator
    discarded: int = 0


def _merge_hist(hists) -> np.ndarray:
    out = np.zeros(max((h.size for h in hists), default=1), dtype=np.int64)
    for h in hists:
        out[:h.size] += h
    return out


def correlation_run(source, pairs, lags, budget: int, seed: int, n_orbits: int = 1,
                    block_length: int = 1000, workers: int = 1) -> list[CorrelationRun]:
    """Correlations for several ``(f, g)`` pairs sharing the same orbits.

    A pair may carry its own lags as a third element.  Return times to M
    seen along the orbits (interior excursions only, so they sample the
    stationary law on M) are collected as a histogram.
    """
    pairs = [(pr[0], pr[1], np.asarray(pr[2] if len(pr) > 2 else lags, dtype=np.int64))
             for pr in pairs]
    blocks = [max(block_length, 2 * int(pl.max())) for _, _, pl in pairs]
    lengths = _split(budget, n_orbits)
    seeds = np.random.SeedSequence(seed).spawn(n_orbits)

    def one(i):
        rng = np.random.default_rng(seeds[i])
        traj = source(rng, lengths[i])
        accs = []
        for (f, g, pl), bl in zip(pairs, blocks):
            acc = CorrelationAccumulator(pl, bl)
            acc.add(f(traj) - f.reference, g(traj) - g.reference)
            accs.append(acc)
        return accs, np.bincount(np.diff(np.flatnonzero(traj.in_M)))

    parts = _ordered_map(one, range(n_orbits), workers)
    hist = _merge_hist([p[1] for p in parts])
    runs = []
    for k, (f, g, _) in enumerate(pairs):
        acc = parts[0][0][k]
        for p in parts[1:]:
            acc = acc.merge(p[0][k])
        runs.append(CorrelationRun(acc.series(f.reference, g.reference), hist, acc,
                                   getattr(source, "discarded", 0)))
    return runs


def estimate_correlation(sys, f: Observable, g: Observable, lags, budget: int, seed: int,
                         n_orbits: int = 1, burn_in: int = 10_000, block_length: int = 1000,
                         workers: int = 1) -> CorrelationSeries:
    """Long-orbit estimate of ``C_n(f, g)``; ``sys`` may also be an orbit source."""
    if budget < 1000:
        raise InsufficientSamples("budget must be at least 1000 samples")
    source = SystemSource(sys, burn_in) if isinstance(sys, InducedSystem) else sys
    return correlation_run(source, [(f, g)], lags, budget, seed, n_orbits,
                           block_length, workers)[0].series


def write_correlation_csv(path, corr: CorrelationSeries):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("lag", "estimate", "stderr", "count"))
        for lag, e, s, c in corr.rows():
            w.writerow((lag, repr(e), repr(s), c))


# --------------------------------------------------------------------------
# return-time tails
# --------------------------------------------------------------------------

@dataclass
class TailTable:
    n: np.ndarray
    tail_M: np.ndarray       # mu_M(R > n)
    tail: np.ndarray         # mu(R > n) on the whole space
    level: np.ndarray        # mu_M(M_n) = mu_M(R = n)
    counts: np.ndarray       # records with R > n
    records: int
    mean_return: float

    def rows(self):
        return zip(self.n.tolist(), self.tail_M.tolist(), self.tail.tolist(),
                   self.level.tolist(), self.counts.tolist())


def return_histogram(series) -> np.ndarray:
    """``h[r]`` = number of records with return time r."""
    if isinstance(series, ReturnSeries):
        return np.bincount(series.return_times)
    if isinstance(series, np.ndarray):
        return np.bincount(series.astype(np.int64))
    items = list(series)
    if items and isinstance(items[0], ReturnSeries):
        return _merge_hist([np.bincount(s.return_times) for s in items])
    return np.bincount(np.asarray(items, dtype=np.int64))


def tail_distribution(series, grid) -> TailTable:
    """Tail laws from return records (a series, a list of series, or raw times).

    The whole-space tail uses the length-biased identity: a record of return
    time m stands for m states of the excursion, max(m - n, 0) of which still
    need more than n steps to reach M.
    """
    return tail_from_histogram(return_histogram(series), grid)


def tail_from_histogram(hist, grid) -> TailTable:
    h = np.asarray(hist, dtype=np.int64)
    grid = np.asarray(grid, dtype=np.int64)
    N = int(h.sum())
    if N == 0:
        raise InsufficientSamples("no return records")
    r = np.arange(h.size, dtype=np.int64)
    # suffix sums in integers: count and total length of records with R > n
    cnt = np.concatenate((np.cumsum(h[::-1])[::-1], [0]))
    tot = np.concatenate((np.cumsum((h * r)[::-1])[::-1], [0]))
    idx = np.clip(grid + 1, 0, h.size)
    counts = cnt[idx]
    excess = tot[idx] - counts * grid
    level = np.where(grid < h.size, h[np.clip(grid, 0, h.size - 1)], 0) / N
    return TailTable(grid, counts / N, excess / tot[0], level, counts, N, tot[0] / N)


def write_tail_csv(path, table: TailTable):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n", "tail_M", "tail", "level", "count"))
        for n, tm, t, lv, c in table.rows():
            w.writerow((n, repr(tm), repr(t), repr(lv), c))


def level_density(series, lo: int, hi: int, per_octave: int = 1):
    """Log-binned density of ``mu_M(M_n)``.

    Returns (bin geometric centers, densities per unit n, counts per bin).
    """
    return _binned(return_histogram(series), lo, hi, per_octave)


def _binned(h, lo, hi, per_octave):
    edges = log_bins(lo, hi, per_octave)
    cum = np.concatenate(([0], np.cumsum(h)))
    e = np.clip(np.ceil(edges).astype(np.int64), 0, h.size)
    counts = cum[e[1:]] - cum[e[:-1]]
    width = np.diff(e).astype(float)
    centers = np.sqrt(e[:-1] * (e[1:] - 1.0))
    return centers, counts / (h.sum() * width), counts


def level_exponent(series=None, lo: int = 8, hi: int = 128, per_octave: int = 1, hist=None):
    """Power-law exponent of ``mu_M(M_n)`` over [lo, hi), Poisson weighted.

    Bins are integer ranges ``[e_i, e_{i+1})``; each bin's density is
    attributed to the geometric mean of its first and last integer.
    """
    h = return_histogram(series) if hist is None else np.asarray(hist, dtype=np.int64)
    x, dens, counts = _binned(h, lo, hi, per_octave)
    keep = counts > 0
    return fit_power_law(x[keep], dens[keep], counts[keep])


# --------------------------------------------------------------------------
# C_{n,b} and B_n
# --------------------------------------------------------------------------

def _start_arrays(sys: InducedSystem, budget: int, seed: int, start_in_M: bool):
    """Stationary starts; arrays ``(x, y)`` for the twist, a state list otherwise."""
    rng = np.random.default_rng(seed)
    if sys.kind == geo.LINKED_TWIST:
        if start_in_M:
            u = rng.random((budget, 2))
            return u[:, 0].copy(), u[:, 1].copy()
        return geo.sample_twist_uniform(rng, budget)
    draw = stationary_in_M if start_in_M else stationary_state
    return [draw(sys, rng) for _ in range(budget)]


def _entry_counts(sys: InducedSystem, starts, n: int) -> np.ndarray:
    if sys.kind == geo.LINKED_TWIST:
        return twist_entry_counts(starts[0], starts[1], n)
    out = np.empty(len(starts), dtype=np.int64)
    for i, s in enumerate(starts):
        k = 0
        for _ in range(n):
            s = sys.base.step(s)
            k += in_M(sys, s)
        out[i] = k
    return out


def _starts_in_M(sys: InducedSystem, starts) -> np.ndarray:
    if sys.kind == geo.LINKED_TWIST:
        return (starts[0] < 1.0) & (starts[1] < 1.0)
    return np.array([in_M(sys, s) for s in starts])


def psi(n: int, b: float) -> int:
    return int(math.floor((b * math.log(n)) ** 2))


@dataclass
class CnbEstimate:
    n: int
    b: float
    psi: int
    fraction: float      # mu(C_{n,b}), or mu(C_{n,b} | M) when start_in_M
    stderr: float
    count: int
    samples: int
    start_in_M: bool
    mu_C_and_M: float    # mu(C_{n,b} cap M)


def cnb_fraction(sys: InducedSystem, n: int, b: float = 2.0, budget: int = 100_000,
                 start_in_M: bool = False, seed: int = 0) -> CnbEstimate:
    """Share of stationary starts whose n-step orbit enters M k times, 1 < k <= psi(n)."""
    if n < 3 or b <= 0:
        raise ValueError("need n >= 3 and b > 0")
    if budget < 1000:
        raise InsufficientSamples("cnb_fraction needs at least 1000 starts")
    p = psi(n, b)
    starts = _start_arrays(sys, budget, seed, start_in_M)
    k = _entry_counts(sys, starts, n)
    hit = (k > 1) & (k <= p)
    frac = float(hit.mean())
    se = math.sqrt(max(frac * (1 - frac), 0.0) / budget)
    mu_M = sys.measure_of_M()
    if start_in_M:
        both = frac * mu_M if mu_M is not None else float("nan")
    else:
        both = float((hit & _starts_in_M(sys, starts)).mean())
    return CnbEstimate(n, b, p, frac, se, int(hit.sum()), budget, start_in_M, both)


def bn_measure(sys: InducedSystem, n: int, budget: int = 100_000, seed: int = 0):
    """``(mu(B_n), mu(B_n) - mu(R > n))`` with B_n the states off M with R > n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if sys.kind == geo.LINKED_TWIST:
        x, y = geo.sample_twist_uniform(rng, budget)
        R = twist_hitting_times(x, y, n + 1)
        inm = (x < 1.0) & (y < 1.0)
    else:
        starts = [stationary_state(sys, rng) for _ in range(budget)]
        capped = InducedSystem(sys.base, cap=n + 1)
        R = np.empty(budget, dtype=np.int64)
        for i, s in enumerate(starts):
            try:
                R[i] = first_hitting_time(capped, s)
            except Exception:
                R[i] = n + 2
        inm = np.array([in_M(sys, s) for s in starts])
    long_ = R > n
    mu_B = float((long_ & ~inm).mean())
    return mu_B, mu_B - float(long_.mean())


# --------------------------------------------------------------------------
# correlation-to-tail ratio and mean-zero gap
# --------------------------------------------------------------------------

def theorem2_ratio(corr: CorrelationSeries, tails: TailTable, mean_f: float, mean_g: float):
    """``r_n = C_n / (mu(R > n) mu(f) mu(g))`` per lag, with stderr.

    ``tails`` must be tabulated on the lags of ``corr``.
    """
    prod = mean_f * mean_g
    if abs(prod) < 1e-15:
        raise ZeroMeanProduct("ratio form needs mu(f) mu(g) != 0")
    if not np.array_equal(np.asarray(tails.n), np.asarray(corr.lags)):
        raise ValueError("tail table and correlations use different lags")
    denom = tails.tail * prod
    return corr.estimates / denom, corr.stderr / np.abs(denom)


def window_average(values, lags, lo: int, hi: int) -> float:
    lags = np.asarray(lags)
    w = (lags >= lo) & (lags <= hi)
    return float(np.mean(np.asarray(values)[w]))


def fastzero_gap(corr: CorrelationSeries, tails: TailTable, lo: int, hi: int,
                 min_signal: float = 3.0):
    """Fitted decay of |C_n| for mean-zero pairs against the tail exponent.

    Only lags in [lo, hi] whose estimate exceeds ``min_signal`` standard
    errors enter the correlation fit.  Returns (corr exponent, tail exponent,
    gap = tail exponent - corr exponent, lags used).
    """
    lags = corr.lags
    w = (lags >= lo) & (lags <= hi)
    sig = w & (np.abs(corr.estimates) > min_signal * corr.stderr)
    x = lags[sig]
    y = np.abs(corr.estimates[sig])
    rel = corr.stderr[sig] / y
    c_exp = fit_power_law(x, y, 1.0 / rel ** 2)[0]
    tw = w & (tails.tail > 0)
    t_exp = fit_power_law(tails.n[tw], tails.tail[tw])[0]
    return c_exp, t_exp, t_exp - c_exp, x


# --------------------------------------------------------------------------
# central limit theorem
# --------------------------------------------------------------------------

@dataclass
class CLTResult:
    ks: float
    sigma_empirical: float
    sigma_green_kubo: float
    truncation_lag: int
    samples: int
    passed: bool
    sums: np.ndarray | None = None
    correlations: CorrelationSeries | None = None


def green_kubo(corr: CorrelationSeries, run: int = 5) -> tuple[float, int]:
    """``C_0 + 2 sum C_n`` truncated before ``run`` consecutive insignificant lags."""
    lags, c, se = corr.lags, corr.estimates, corr.stderr
    if lags[0] != 0 or np.any(np.diff(lags) != 1):
        raise ValueError("Green-Kubo sum needs consecutive lags starting at 0")
    small = np.abs(c) < 2.0 * se
    cut = lags.size
    streak = 0
    for i in range(1, lags.size):
        streak = streak + 1 if small[i] else 0
        if streak == run:
            cut = i - run + 1
            break
    return float(c[0] + 2.0 * c[1:cut].sum()), int(lags[cut - 1])


def ks_normal(z) -> float:
    return float(sps.kstest(np.asarray(z), "norm").statistic)


def clt_from_sums(sums, n: int, sigma: float) -> float:
    """KS distance of ``S_n / (sigma sqrt(n))`` to the standard normal."""
    return ks_normal(np.asarray(sums) / (sigma * math.sqrt(n)))


def partial_sums(source, f: Observable, n: int, samples: int, seed: int,
                 workers: int = 1) -> np.ndarray:
    """``S_n = sum_{k=1..n} f(F^k x)`` over independent stationary starts."""
    seeds = np.random.SeedSequence(seed).spawn(samples)

    def one(i):
        traj = source(np.random.default_rng(seeds[i]), n + 1)
        return float(f(traj)[1:].sum())

    return np.array(_ordered_map(one, range(samples), workers))


def clt_statistic(sys, f: Observable, n: int, samples: int, seed: int,
                  corr_budget: int = 10_000_000, max_lag: int = 200, n_orbits: int = 10,
                  burn_in: int = 10_000, workers: int = 1, ks_max: float = 0.05,
                  sigma_tol: float = 0.10) -> CLTResult:
    """KS distance of normalized Birkhoff sums, with the Green-Kubo sigma.

    ``sys`` is an induced system or an orbit source (for injected series).
    ``passed`` requires KS < ks_max and the two sigmas within sigma_tol.
    """
    source = SystemSource(sys, burn_in) if isinstance(sys, InducedSystem) else sys
    corr = estimate_correlation(source, f, f, np.arange(max_lag + 1), corr_budget,
                                seed + 1, n_orbits=n_orbits,
                                block_length=max(1000, corr_budget // (10 * n_orbits)),
                                workers=workers)
    var, cut = green_kubo(corr)
    if var < 1e-12:
        raise DegenerateVariance(f"Green-Kubo variance {var:.3e} is degenerate")
    sigma = math.sqrt(var)
    source = SystemSource(sys, 0) if isinstance(sys, InducedSystem) else source
    sums = partial_sums(source, f, n, samples, seed, workers)
    ks = clt_from_sums(sums, n, sigma)
    emp = float(np.std(sums) / math.sqrt(n))
    ok = ks < ks_max and abs(sigma - emp) <= sigma_tol * emp
    return CLTResult(ks, emp, sigma, cut, samples, bool(ok), sums, corr)
