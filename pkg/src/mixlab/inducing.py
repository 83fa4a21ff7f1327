"""Inducing scheme: membership in M, first hitting times and the induced map.

The generic functions work for any ``SystemModel`` one step at a time.  The
linked-twist map also has compiled bulk kernels, which the statistics module
uses for the large Monte Carlo runs.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np

from . import geometry as geo
from .errors import CornerHit, EmptySeries, GrazingCollision, Overflow
from .geometry import BoundaryState, PhaseState, SystemModel, TorusPoint

DEFAULT_CAP = 10 ** 6


@dataclass(frozen=True)
class InducedSystem:
    base: SystemModel
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("cap must be >= 1")

    @property
    def kind(self) -> str:
        return self.base.kind

    def measure_of_M(self) -> float | None:
        """Exact invariant measure of M when known from the geometry."""
        if self.kind == geo.LINKED_TWIST:
            return 1.0 / 3.0
        if self.kind == geo.SEMIDISPERSING:
            # cos(phi) measure is uniform in r, so mu(M) is the obstacle share of the perimeter
            obs = sum(c.length for c in self.base.components if c.kind == geo.DISPERSING)
            return obs / self.base.perimeter
        return None


@dataclass(frozen=True)
class ReturnRecord:
    state_before: PhaseState
    return_time: int
    state_after: PhaseState

    @property
    def cell(self) -> int:
        return self.return_time


@dataclass
class ReturnSeries:
    """Chained returns of one orbit.

    ``records`` is kept for the step-by-step path; bulk kernels only fill
    ``return_times``.
    """

    return_times: np.ndarray
    origin: PhaseState | None = None
    discarded: int = 0
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.return_times.size)

    def chained(self) -> bool:
        return all(a.state_after == b.state_before for a, b in zip(self.records, self.records[1:]))


def in_M(sys: InducedSystem, s: PhaseState) -> bool:
    if sys.kind == geo.LINKED_TWIST:
        return s.x < 1.0 and s.y < 1.0
    comp = sys.base.components[s.component]
    if comp.kind == geo.DISPERSING:
        return True
    if comp.kind == geo.FOCUSING:
        # first collision with this arc: the previous curved collision was elsewhere
        return s.last_curved != s.component
    return False


def first_hitting_time(sys: InducedSystem, s: PhaseState) -> int:
    step = sys.base.step
    for n in range(1, sys.cap + 1):
        s = step(s)
        if in_M(sys, s):
            return n
    raise Overflow(f"no entry into M within {sys.cap} steps")


def induced_step(sys: InducedSystem, s: PhaseState) -> ReturnRecord:
    if not in_M(sys, s):
        raise ValueError("induced_step needs a state in M")
    step = sys.base.step
    x = s
    for n in range(1, sys.cap + 1):
        x = step(x)
        if in_M(sys, x):
            return ReturnRecord(s, n, x)
    raise Overflow(f"no return to M within {sys.cap} steps")


def project_to_M(sys: InducedSystem, s: PhaseState) -> PhaseState:
    if in_M(sys, s):
        return s
    step = sys.base.step
    for _ in range(sys.cap):
        s = step(s)
        if in_M(sys, s):
            return s
    raise Overflow("start state never enters M")


def harvest_returns(sys: InducedSystem, s0: PhaseState, count: int) -> ReturnSeries:
    """``count`` chained induced steps from ``s0``, truncated on failure."""
    if count < 1:
        raise ValueError("count must be >= 1")
    try:
        s = project_to_M(sys, s0)
        first = induced_step(sys, s)
    except (Overflow, GrazingCollision, CornerHit) as exc:
        raise EmptySeries(f"first record failed: {exc}") from exc
    records = [first]
    discarded = 0
    while len(records) < count:
        try:
            records.append(induced_step(sys, records[-1].state_after))
        except (Overflow, GrazingCollision, CornerHit):
            discarded += 1
            break
    times = np.array([r.return_time for r in records], dtype=np.int64)
    return ReturnSeries(times, s0, discarded, records)


def with_history(model: SystemModel, s: BoundaryState, cap: int = 10_000) -> BoundaryState:
    """Fills ``last_curved`` by running the reversed dynamics backwards."""
    t = geo.reverse(s)
    for _ in range(cap):
        t = geo.billiard_step(model, t)
        if model.components[t.component].is_arc:
            return BoundaryState(s.r, s.phi, s.component, t.component)
    raise Overflow("no curved collision in the backward orbit")


# --------------------------------------------------------------------------
# compiled linked-twist kernels
# --------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def twist_return_times(x, y, count, cap):
    """Return times of ``count`` induced steps from ``(x, y)``.

    Returns ``(times, x, y, n_done)``; ``n_done < count`` signals overflow.
    """
    out = np.empty(count, np.int64)
    for i in range(count):
        n = 0
        while True:
            x, y = geo._twist(x, y)
            n += 1
            if x < 1.0 and y < 1.0:
                break
            if n >= cap:
                return out[:i], x, y, i
        out[i] = n
    return out, x, y, count


@nb.njit(cache=True, nogil=True)
def twist_hitting_times(xs, ys, cap):
    """First hitting time of M for every start point, ``cap + 1`` on overflow."""
    out = np.empty(xs.size, np.int64)
    for i in range(xs.size):
        x, y = xs[i], ys[i]
        n = 0
        while n <= cap:
            x, y = geo._twist(x, y)
            n += 1
            if x < 1.0 and y < 1.0:
                break
        out[i] = n
    return out


@nb.njit(cache=True, nogil=True)
def twist_entry_counts(xs, ys, n):
    """Number of ``1 <= i <= n`` with ``H^i(x) in M`` for each start."""
    out = np.empty(xs.size, np.int64)
    for j in range(xs.size):
        x, y = xs[j], ys[j]
        k = 0
        for _ in range(n):
            x, y = geo._twist(x, y)
            if x < 1.0 and y < 1.0:
                k += 1
        out[j] = k
    return out


def harvest_twist(sys: InducedSystem, start: TorusPoint, count: int) -> ReturnSeries:
    p = project_to_M(sys, start)
    times, _, _, done = twist_return_times(p.x, p.y, count, sys.cap)
    if done == 0:
        raise EmptySeries("first record overflowed")
    return ReturnSeries(times.copy(), start, int(done < count))


def harvest_ensemble(sys: InducedSystem, count: int, n_orbits: int, seed: int,
                     workers: int = 1) -> list[ReturnSeries]:
    """Independent induced orbits started from the stationary law on M."""
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_orbits)]
    starts = [stationary_in_M(sys, rng) for rng in rngs]
    per = [count // n_orbits + (i < count % n_orbits) for i in range(n_orbits)]

    def one(i):
        if sys.kind == geo.LINKED_TWIST:
            return harvest_twist(sys, starts[i], per[i])
        return harvest_returns(sys, starts[i], per[i])

    return _ordered_map(one, range(n_orbits), workers)


def stationary_in_M(sys: InducedSystem, rng: np.random.Generator) -> PhaseState:
    """One draw from the invariant measure conditioned on M."""
    if sys.kind == geo.LINKED_TWIST:
        x, y = rng.random(2)
        return TorusPoint(x, y)
    while True:
        s = stationary_state(sys, rng)
        if in_M(sys, s):
            return s


def stationary_state(sys: InducedSystem, rng: np.random.Generator) -> PhaseState:
    model = sys.base
    if sys.kind == geo.LINKED_TWIST:
        x, y = geo.sample_twist_uniform(rng, 1)
        return TorusPoint(x[0], y[0])
    while True:
        r, phi = geo.sample_boundary_uniform(model, rng, 1)
        s = model.state_at(float(r[0]), float(phi[0]))
        try:
            return with_history(model, s) if sys.kind == geo.STADIUM else s
        except (GrazingCollision, CornerHit, Overflow):
            continue


def _ordered_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# trajectories for the estimators
# --------------------------------------------------------------------------

class Trajectory(NamedTuple):
    """Orbit ``x_0, x_1, ...`` in coordinates ``(u, v)`` with M-membership."""

    u: np.ndarray
    v: np.ndarray
    in_M: np.ndarray


def twist_trajectory(x0: float, y0: float, length: int, burn_in: int = 0) -> Trajectory:
    xs, ys = geo.twist_orbit(x0, y0, length, burn_in)
    return Trajectory(xs, ys, (xs < 1.0) & (ys < 1.0))


def billiard_trajectory(sys: InducedSystem, s: BoundaryState, length: int,
                        burn_in: int = 0) -> Trajectory:
    model = sys.base
    for _ in range(burn_in):
        s = model.step(s)
    u = np.empty(length)
    v = np.empty(length)
    m = np.empty(length, dtype=bool)
    for k in range(length):
        u[k], v[k], m[k] = s.r, s.phi, in_M(sys, s)
        s = model.step(s)
    return Trajectory(u, v, m)


def trajectory(sys: InducedSystem, rng: np.random.Generator, length: int,
               burn_in: int = 0, max_tries: int = 100) -> tuple[Trajectory, int]:
    """Stationary orbit segment; failed billiard orbits are redrawn and counted."""
    if sys.kind == geo.LINKED_TWIST:
        x, y = geo.sample_twist_uniform(rng, 1)
        return twist_trajectory(x[0], y[0], length, burn_in), 0
    for tries in range(max_tries):
        s = stationary_state(sys, rng)
        try:
            return billiard_trajectory(sys, s, length, burn_in), tries
        except (GrazingCollision, CornerHit):
            continue
    raise Overflow("too many singular orbits")


def write_returns_csv(path, series: list[ReturnSeries]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("orbit_id", "step", "return_time"))
        for oid, s in enumerate(series):
            for k, r in enumerate(s.return_times.tolist()):
                w.writerow((oid, k, r))


def kac_product(sys: InducedSystem, series) -> float:
    """Mean return time times the exact measure of M (1 by Kac's lemma)."""
    times = np.concatenate([s.return_times for s in series])
    return float(times.mean()) * sys.measure_of_M()


__all__ = [
    "InducedSystem", "ReturnRecord", "ReturnSeries", "Trajectory",
    "in_M", "first_hitting_time", "induced_step", "harvest_returns",
    "harvest_ensemble", "stationary_state", "stationary_in_M", "trajectory",
    "twist_hitting_times", "twist_entry_counts", "twist_return_times",
]
