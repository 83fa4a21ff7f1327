"""Base maps: the linked-twist torus map and two billiard collision maps.

Billiard states use the usual collision-space coordinates ``(r, phi)``: ``r`` is
arc length along the boundary and ``phi`` is the angle between the outgoing
velocity and the inward normal.  Every boundary component is oriented so that
the inward normal is the tangent rotated by +90 degrees, hence the outgoing
velocity is ``cos(phi) * n + sin(phi) * t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numba as nb
import numpy as np

from .errors import CornerHit, GrazingCollision

TWO_PI = 2.0 * math.pi
GRAZING_TOL = 1e-12
CORNER_TOL = 1e-10
SHIFT = 1e-12

LINKED_TWIST = "linked_twist"
STADIUM = "stadium"
SEMIDISPERSING = "semidispersing"
SYSTEM_KINDS = (LINKED_TWIST, STADIUM, SEMIDISPERSING)

FLAT, FOCUSING, DISPERSING = "flat", "focusing", "dispersing"


def mod2(v: float) -> float:
    """Reduce ``v`` into [0, 2); an exact 2.0 produced by rounding maps to 0."""
    r = math.fmod(v, 2.0)
    if r < 0.0:
        r += 2.0
    if r >= 2.0:
        r = 0.0
    return r


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", mod2(float(self.x)))
        object.__setattr__(self, "y", mod2(float(self.y)))


@dataclass(frozen=True)
class BoundaryState:
    """Collision on the table boundary.

    ``last_curved`` is the component id of the most recent earlier collision on
    a curved (non-flat) component, ``-1`` when unknown.  The stadium inducing set
    needs it.
    """

    r: float
    phi: float
    component: int
    last_curved: int = -1

    def __post_init__(self):
        if abs(self.phi) > math.pi / 2 + 1e-15:
            raise ValueError(f"phi={self.phi} outside [-pi/2, pi/2]")


PhaseState = Union[TorusPoint, BoundaryState]


# --------------------------------------------------------------------------
# linked-twist map
# --------------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _mod2(v):
    r = v % 2.0
    if r >= 2.0:
        r = 0.0
    return r


@nb.njit(cache=True, inline="always")
def _twist(x, y):
    # F shears the horizontal annulus P = {y < 1}, then G the vertical Q = {x < 1}
    if y < 1.0:
        x = _mod2(x + 2.0 * y)
    if x < 1.0:
        y = _mod2(y + 2.0 * x)
    return x, y


@nb.njit(cache=True)
def _twist_n(x, y, n):
    for _ in range(n):
        x, y = _twist(x, y)
    return x, y


def linked_twist_step(p: TorusPoint) -> TorusPoint:
    x, y = p.x, p.y
    if y < 1.0:
        x = mod2(x + 2.0 * y)
    if x < 1.0:
        y = mod2(y + 2.0 * x)
    return TorusPoint(x, y)


@nb.njit(cache=True, nogil=True)
def twist_orbit(x0, y0, length, burn_in):
    """Orbit ``H^k(x0, y0)`` for ``k = burn_in .. burn_in + length - 1``."""
    x, y = _twist_n(x0, y0, burn_in)
    xs = np.empty(length)
    ys = np.empty(length)
    for k in range(length):
        xs[k] = x
        ys[k] = y
        x, y = _twist(x, y)
    return xs, ys


def sample_twist_uniform(rng: np.random.Generator, size: int):
    """Uniform points of the union of the two annuli (the invariant measure)."""
    # union = three unit squares: [0,1)^2, [1,2)x[0,1), [0,1)x[1,2)
    u = rng.random((size, 2))
    which = rng.integers(0, 3, size)
    x = u[:, 0] + (which == 1)
    y = u[:, 1] + (which == 2)
    return x, y


# --------------------------------------------------------------------------
# billiard tables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    kind: str
    start: float  # arc-length offset of the component on the boundary
    length: float
    # segment data
    p0: tuple = (0.0, 0.0)
    d: tuple = (1.0, 0.0)
    # arc data
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    theta0: float = 0.0
    sense: float = 1.0

    @property
    def is_arc(self) -> bool:
        return self.kind != FLAT

    def point(self, s: float):
        if not self.is_arc:
            return (self.p0[0] + s * self.d[0], self.p0[1] + s * self.d[1])
        th = self.theta0 + self.sense * s / self.radius
        return (self.center[0] + self.radius * math.cos(th),
                self.center[1] + self.radius * math.sin(th))

    def frame(self, s: float):
        """Unit tangent and inward normal at local arc length ``s``."""
        if not self.is_arc:
            t = self.d
        else:
            th = self.theta0 + self.sense * s / self.radius
            t = (-self.sense * math.sin(th), self.sense * math.cos(th))
        return t, (-t[1], t[0])

    def local_param(self, q):
        if not self.is_arc:
            return (q[0] - self.p0[0]) * self.d[0] + (q[1] - self.p0[1]) * self.d[1]
        th = math.atan2(q[1] - self.center[1], q[0] - self.center[0])
        dth = (self.sense * (th - self.theta0)) % TWO_PI
        s = dth * self.radius
        # the wrap-around of a full circle near s == length maps back to 0
        if s > self.length and s - self.length > 0.5 * (TWO_PI * self.radius - self.length):
            s -= TWO_PI * self.radius
        return s


@dataclass(frozen=True)
class TableSpec:
    """Billiard table geometry.

    stadium: ``radius`` of the semicircles and ``flat_length`` of the straight
    walls.  semidispersing: square ``side`` with circular ``obstacles`` given as
    ``(cx, cy, radius)`` triples.
    """

    kind: str
    radius: float = 1.0
    flat_length: float = 2.0
    side: float = 1.0
    obstacles: tuple = ((0.5, 0.5, 0.25),)

    def __post_init__(self):
        if self.kind == STADIUM:
            if not (self.flat_length > 0 and self.radius > 0):
                raise ValueError("stadium needs radius > 0 and flat_length > 0")
        elif self.kind == SEMIDISPERSING:
            obs = tuple(tuple(float(v) for v in o) for o in self.obstacles)
            object.__setattr__(self, "obstacles", obs)
            if not obs:
                raise ValueError("semidispersing table needs at least one obstacle")
            for cx, cy, rad in obs:
                if rad <= 0 or cx - rad <= 0 or cy - rad <= 0 \
                        or cx + rad >= self.side or cy + rad >= self.side:
                    raise ValueError(f"obstacle {(cx, cy, rad)} not strictly inside the square")
            for i in range(len(obs)):
                for j in range(i + 1, len(obs)):
                    a, b = obs[i], obs[j]
                    if math.hypot(a[0] - b[0], a[1] - b[1]) <= a[2] + b[2]:
                        raise ValueError("obstacles must be pairwise disjoint")
        else:
            raise ValueError(f"unknown table kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == STADIUM:
            return {"kind": self.kind, "radius": self.radius, "flat_length": self.flat_length}
        return {"kind": self.kind, "side": self.side,
                "obstacles": [list(o) for o in self.obstacles]}

    @classmethod
    def from_dict(cls, d: dict) -> "TableSpec":
        d = dict(d)
        if "obstacles" in d:
            d["obstacles"] = tuple(tuple(o) for o in d["obstacles"])
        return cls(**d)


def build_components(table: TableSpec):
    comps = []
    if table.kind == STADIUM:
        rad, L = table.radius, table.flat_length
        arc = math.pi * rad
        comps.append(Component(FLAT, 0.0, L, p0=(-L / 2, -rad), d=(1.0, 0.0)))
        comps.append(Component(FOCUSING, L, arc, center=(L / 2, 0.0), radius=rad,
                               theta0=-math.pi / 2, sense=1.0))
        comps.append(Component(FLAT, L + arc, L, p0=(L / 2, rad), d=(-1.0, 0.0)))
        comps.append(Component(FOCUSING, 2 * L + arc, arc, center=(-L / 2, 0.0), radius=rad,
                               theta0=math.pi / 2, sense=1.0))
        corners = ()
    else:
        a = table.side
        walls = [((0.0, 0.0), (1.0, 0.0)), ((a, 0.0), (0.0, 1.0)),
                 ((a, a), (-1.0, 0.0)), ((0.0, a), (0.0, -1.0))]
        for i, (p0, d) in enumerate(walls):
            comps.append(Component(FLAT, i * a, a, p0=p0, d=d))
        start = 4 * a
        for cx, cy, rad in table.obstacles:
            # clockwise so that the normal (tangent rotated +90 deg) points off the disk
            length = TWO_PI * rad
            comps.append(Component(DISPERSING, start, length, center=(cx, cy), radius=rad,
                                   theta0=0.0, sense=-1.0))
            start += length
        corners = ((0.0, 0.0), (a, 0.0), (a, a), (0.0, a))
    return tuple(comps), corners


@dataclass(frozen=True)
class SystemModel:
    """A base map with its inducing-set rule and invariant density."""

    kind: str
    table: TableSpec | None = None
    inducing: str = ""
    density: str = ""
    components: tuple = field(default=(), repr=False, compare=False)
    corners: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.kind == LINKED_TWIST:
            object.__setattr__(self, "inducing", self.inducing or "annulus_intersection")
            object.__setattr__(self, "density", self.density or "lebesgue")
            return
        table = self.table or TableSpec(self.kind)
        if table.kind != self.kind:
            raise ValueError("table kind does not match system kind")
        comps, corners = build_components(table)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "corners", corners)
        default = "first_focusing_or_dispersing" if self.kind == STADIUM else "obstacle_collisions"
        object.__setattr__(self, "inducing", self.inducing or default)
        object.__setattr__(self, "density", self.density or "cos_phi")

    @property
    def perimeter(self) -> float:
        c = self.components[-1]
        return c.start + c.length

    def step(self, s: PhaseState) -> PhaseState:
        if self.kind == LINKED_TWIST:
            return linked_twist_step(s)
        return billiard_step(self, s)

    def locate(self, r: float):
        """Component index and local arc length of boundary parameter ``r``."""
        r = r % self.perimeter
        for i, c in enumerate(self.components):
            if r < c.start + c.length:
                return i, r - c.start
        return len(self.components) - 1, r - self.components[-1].start

    def position(self, s: BoundaryState):
        comp = self.components[s.component]
        return comp.point(s.r - comp.start)

    def velocity(self, s: BoundaryState):
        comp = self.components[s.component]
        t, n = comp.frame(s.r - comp.start)
        c, sn = math.cos(s.phi), math.sin(s.phi)
        return (c * n[0] + sn * t[0], c * n[1] + sn * t[1])

    def state_at(self, r: float, phi: float, last_curved: int = -1) -> BoundaryState:
        i, _ = self.locate(r)
        return BoundaryState(r % self.perimeter, phi, i, last_curved)

    def boundary_distance(self, q) -> float:
        """Euclidean distance from ``q`` to the table boundary."""
        best = math.inf
        for c in self.components:
            if c.is_arc:
                # distance to the supporting circle, valid when the foot lies on the arc
                s = c.local_param(q)
                if -1e-9 <= s <= c.length + 1e-9:
                    best = min(best, abs(math.hypot(q[0] - c.center[0], q[1] - c.center[1]) - c.radius))
                for end in (c.point(0.0), c.point(c.length)):
                    best = min(best, math.hypot(q[0] - end[0], q[1] - end[1]))
            else:
                u = (q[0] - c.p0[0]) * c.d[0] + (q[1] - c.p0[1]) * c.d[1]
                u = min(max(u, 0.0), c.length)
                p = c.point(u)
                best = min(best, math.hypot(q[0] - p[0], q[1] - p[1]))
        return best


def make_system(kind: str, table: TableSpec | None = None) -> SystemModel:
    return SystemModel(kind, table)


def _ray_hits(comp: Component, p, v, on_this: bool):
    """Forward distances along ``p + s v`` at which the ray meets ``comp``."""
    hits = []
    if not comp.is_arc:
        if on_this:
            return hits
        den = v[0] * comp.d[1] - v[1] * comp.d[0]
        if abs(den) < 1e-300:
            return hits
        wx, wy = comp.p0[0] - p[0], comp.p0[1] - p[1]
        s = (wx * comp.d[1] - wy * comp.d[0]) / den
        u = (wx * v[1] - wy * v[0]) / den
        if s > SHIFT and -CORNER_TOL <= u <= comp.length + CORNER_TOL:
            hits.append(s)
        return hits
    wx, wy = p[0] - comp.center[0], p[1] - comp.center[1]
    b = v[0] * wx + v[1] * wy
    if on_this:
        # p sits on the circle: roots are 0 and -2b
        roots = (-2.0 * b,)
    else:
        cterm = wx * wx + wy * wy - comp.radius ** 2
        disc = b * b - cterm
        if disc < 0.0:
            return hits
        sq = math.sqrt(disc)
        roots = (-b - sq, -b + sq)
    for s in roots:
        if s <= SHIFT:
            continue
        q = (p[0] + s * v[0], p[1] + s * v[1])
        loc = comp.local_param(q)
        if -CORNER_TOL <= loc <= comp.length + CORNER_TOL:
            hits.append(s)
    return hits


def billiard_step(model: SystemModel, s: BoundaryState) -> BoundaryState:
    """Next collision: straight flight, then specular reflection."""
    if math.cos(s.phi) < GRAZING_TOL:
        raise GrazingCollision(f"tangential start state {s}")
    p = model.position(s)
    v = model.velocity(s)
    best, best_i = math.inf, -1
    for i, comp in enumerate(model.components):
        for dist in _ray_hits(comp, p, v, i == s.component):
            if dist < best:
                best, best_i = dist, i
    if best_i < 0:
        raise GrazingCollision(f"no forward intersection from {s}")
    q = (p[0] + best * v[0], p[1] + best * v[1])
    for cx, cy in model.corners:
        if math.hypot(q[0] - cx, q[1] - cy) < CORNER_TOL:
            raise CornerHit(f"corner ({cx}, {cy}) hit from {s}")
    comp = model.components[best_i]
    loc = min(max(comp.local_param(q), 0.0), comp.length)
    t, n = comp.frame(loc)
    vn = v[0] * n[0] + v[1] * n[1]
    wx, wy = v[0] - 2.0 * vn * n[0], v[1] - 2.0 * vn * n[1]
    cos_out = wx * n[0] + wy * n[1]
    if cos_out < GRAZING_TOL:
        raise GrazingCollision(f"grazing collision on component {best_i}")
    phi = math.atan2(wx * t[0] + wy * t[1], cos_out)
    cur = model.components[s.component]
    last = s.component if cur.is_arc else s.last_curved
    return BoundaryState(comp.start + loc, phi, best_i, last)


def reverse(s: BoundaryState) -> BoundaryState:
    """Time-reversal involution ``(r, phi) -> (r, -phi)``."""
    return BoundaryState(s.r, -s.phi, s.component, -1)


def invariant_weight(model: SystemModel, s: PhaseState) -> float:
    if model.kind == LINKED_TWIST:
        return 1.0
    return math.cos(s.phi)


def sample_boundary_uniform(model: SystemModel, rng: np.random.Generator, size: int):
    """Draws ``(r, phi)`` from the normalized ``cos(phi) dr dphi`` measure."""
    r = rng.random(size) * model.perimeter
    phi = np.arcsin(2.0 * rng.random(size) - 1.0)
    return r, phi
