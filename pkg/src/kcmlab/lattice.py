"""Exact integer lattice geometry: rational directions, half-planes,
windows, boundary conditions, configurations and seeded randomness.

All angular decisions are made with integer cross/dot products; floating
point appears only in metrics and offsets that are explicitly real.

Convention fixed once for the whole package: a site is *infected* iff its
boolean state is True.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, Tuple

import numpy as np

Site = Tuple[int, int]


# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=False)
class Direction:
    """Primitive integer vector (dx, dy) standing for the unit direction
    (dx, dy)/||(dx, dy)||.
    """

    dx: int
    dy: int

    def __post_init__(self):
        if self.dx == 0 and self.dy == 0:
            raise ValueError("direction must be nonzero")
        if math.gcd(abs(self.dx), abs(self.dy)) != 1:
            raise ValueError(f"({self.dx},{self.dy}) is not primitive")

    @staticmethod
    def of(dx: int, dy: int) -> "Direction":
        """Normalize an arbitrary nonzero integer vector to a Direction."""
        g = math.gcd(abs(dx), abs(dy))
        if g == 0:
            raise ValueError("direction must be nonzero")
        return Direction(dx // g, dy // g)

    @property
    def vector(self) -> Site:
        return (self.dx, self.dy)

    @property
    def norm_sq(self) -> int:
        return self.dx * self.dx + self.dy * self.dy

    def antipode(self) -> "Direction":
        return Direction(-self.dx, -self.dy)

    def rot_cw(self) -> "Direction":
        """Rotate by pi/2 clockwise: (0,1) -> (1,0)."""
        return Direction(self.dy, -self.dx)

    def rot_ccw(self) -> "Direction":
        return Direction(-self.dy, self.dx)

    def __repr__(self):
        return f"Direction({self.dx},{self.dy})"


def cross(u: Direction, v: Direction) -> int:
    return u.dx * v.dy - u.dy * v.dx


def dot(u: Direction, v: Direction) -> int:
    return u.dx * v.dx + u.dy * v.dy


def dot_site(x: Site, u: Direction) -> int:
    """Scaled scalar product <x, w_u> where w_u is the primitive vector of u.

    Equals <x, u> * lambda_u; lattice points take integer values here, with
    consecutive lattice lines perpendicular to u exactly 1 apart.
    """
    return x[0] * u.dx + x[1] * u.dy


@dataclass(frozen=True)
class DirectionMetrics:
    """rho = minimal positive <x,u> over lattice x; lambda = minimal
    positive multiple of u landing in Z^2. rho * lambda = 1.
    """

    rho: float
    lam: float


def direction_metrics(u: Direction) -> DirectionMetrics:
    lam = math.sqrt(u.norm_sq)
    return DirectionMetrics(rho=1.0 / lam, lam=lam)


# clockwise comparison -------------------------------------------------------
#
# Clockwise means decreasing standard angle: from (-1,0) the next axis
# direction is (0,1).  The clockwise angle class of u seen from o is
#   0: equal, 1: in (0,pi), 2: exactly pi, 3: in (pi,2pi).

def _cw_sector(o: Direction, u: Direction) -> int:
    c = cross(o, u)
    if c == 0:
        return 0 if dot(o, u) > 0 else 2
    return 1 if c < 0 else 3


def compare_clockwise(u: Direction, v: Direction, origin_ray: Direction) -> int:
    """-1 if u comes strictly before v sweeping clockwise from origin_ray,
    0 if equal, +1 otherwise.  Exact (integer arithmetic only)."""
    su, sv = _cw_sector(origin_ray, u), _cw_sector(origin_ray, v)
    if su != sv:
        return -1 if su < sv else 1
    if su in (0, 2):
        return 0
    c = cross(u, v)
    if c == 0:
        return 0
    return -1 if c < 0 else 1


def sort_clockwise(dirs: Iterable[Direction], origin_ray: Direction):
    import functools

    return sorted(
        dirs,
        key=functools.cmp_to_key(
            lambda a, b: compare_clockwise(a, b, origin_ray)
        ),
    )


def cw_angle_class(a: Direction, b: Direction) -> int:
    """Clockwise angle from a to b: 0 zero, 1 in (0,pi), 2 pi, 3 in (pi,2pi)."""
    return _cw_sector(a, b)


def in_open_cw_arc(a: Direction, b: Direction, u: Direction) -> bool:
    """True iff u lies strictly inside the clockwise arc from a to b (a != b)."""
    if u == a or u == b:
        return False
    return compare_clockwise(u, b, a) < 0


def in_closed_cw_arc(a: Direction, b: Direction, u: Direction) -> bool:
    if u == a or u == b:
        return True
    if a == b:
        return False
    return in_open_cw_arc(a, b, u)


def in_open_semicircle(theta: Direction, u: Direction) -> bool:
    """Open semicircle swept clockwise from theta to its antipode."""
    return cross(theta, u) < 0


def arc_meets_open_semicircle(a: Direction, b: Direction, theta: Direction) -> bool:
    """Does the closed clockwise arc [a,b] intersect the open semicircle at theta?"""
    if in_open_semicircle(theta, a) or in_open_semicircle(theta, b):
        return True
    # Both endpoints outside: intersection happens iff the arc swallows the
    # whole semicircle, iff it contains the semicircle's midpoint.
    return in_closed_cw_arc(a, b, theta.rot_cw())


def mediant(a: Direction, b: Direction) -> Direction:
    """A rational direction strictly inside the clockwise arc from a to b.

    For antipodal endpoints the arc is a half turn and the clockwise
    quarter-turn of a is used instead.
    """
    if cross(a, b) == 0:
        if a == b:
            raise ValueError("degenerate arc")
        return a.rot_cw()
    return Direction.of(a.dx + b.dx, a.dy + b.dy)


# ---------------------------------------------------------------------------
# half planes
# ---------------------------------------------------------------------------

def _cmp_scaled_offset(value: int, offset, norm_sq: int) -> int:
    """Compare value (= <x,w_u>) against offset * sqrt(norm_sq) exactly when
    offset is rational; sign of (value - offset*lambda)."""
    if isinstance(offset, (int, Fraction)):
        off = Fraction(offset)
        lhs = Fraction(value)
        if off == 0:
            return (lhs > 0) - (lhs < 0)
        # sign split first, then compare squares on the same-sign path
        if lhs <= 0 < off:
            return -1
        if off < 0 <= lhs:
            return 1
        l2, r2 = lhs * lhs, off * off * norm_sq
        if l2 == r2:
            return 0
        if lhs >= 0:
            return -1 if l2 < r2 else 1
        return -1 if l2 > r2 else 1
    v = value / math.sqrt(norm_sq)
    if v < offset:
        return -1
    if v > offset:
        return 1
    return 0


def half_plane_contains(x: Site, u: Direction, offset=0, closed: bool = False) -> bool:
    """Membership of the half plane with outer normal u and Euclidean offset:
    <x, u/||u||> < offset (<= when closed)."""
    c = _cmp_scaled_offset(dot_site(x, u), offset, u.norm_sq)
    return c <= 0 if closed else c < 0


# ---------------------------------------------------------------------------
# windows, boundaries, configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("empty window")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    def contains(self, x: Site) -> bool:
        return self.x_min <= x[0] <= self.x_max and self.y_min <= x[1] <= self.y_max

    def sites(self):
        for yy in range(self.y_min, self.y_max + 1):
            for xx in range(self.x_min, self.x_max + 1):
                yield (xx, yy)


class Boundary:
    """Boundary condition for sites outside a window.

    Variants: all_healthy, all_infected, half_plane(u, offset), torus,
    explicit(mapping, collar).  Torus is handled by Configuration itself
    (queries wrap instead of consulting the rule).
    """

    ALL_HEALTHY = "all_healthy"
    ALL_INFECTED = "all_infected"
    HALF_PLANE = "half_plane"
    TORUS = "torus"
    EXPLICIT = "explicit"

    def __init__(self, kind, u=None, offset=0, mapping=None, collar=0):
        self.kind = kind
        self.u = u
        self.offset = offset
        self.mapping = mapping
        self.collar = collar

    @staticmethod
    def all_healthy() -> "Boundary":
        return Boundary(Boundary.ALL_HEALTHY)

    @staticmethod
    def all_infected() -> "Boundary":
        return Boundary(Boundary.ALL_INFECTED)

    @staticmethod
    def half_plane_infected(u: Direction, offset=0) -> "Boundary":
        return Boundary(Boundary.HALF_PLANE, u=u, offset=offset)

    @staticmethod
    def torus() -> "Boundary":
        return Boundary(Boundary.TORUS)

    @staticmethod
    def explicit(mapping: Dict[Site, bool], collar: int) -> "Boundary":
        return Boundary(Boundary.EXPLICIT, mapping=dict(mapping), collar=collar)

    def resolve(self, x: Site, window: Window) -> bool:
        if self.kind == Boundary.ALL_HEALTHY:
            return False
        if self.kind == Boundary.ALL_INFECTED:
            return True
        if self.kind == Boundary.HALF_PLANE:
            return half_plane_contains(x, self.u, self.offset)
        if self.kind == Boundary.EXPLICIT:
            if x in self.mapping:
                return self.mapping[x]
            dx = max(window.x_min - x[0], x[0] - window.x_max, 0)
            dy = max(window.y_min - x[1], x[1] - window.y_max, 0)
            if max(dx, dy) > self.collar:
                raise ValueError(f"site {x} outside explicit collar")
            return False
        raise ValueError(f"cannot resolve boundary {self.kind} pointwise")


class Configuration:
    """Dense boolean infection grid over a finite window plus a boundary rule.

    True = infected.  Single-owner mutable; everything else in this module
    is immutable.
    """

    def __init__(self, window: Window, boundary: Boundary, infected_sites: Iterable[Site] = ()):
        self.window = window
        self.boundary = boundary
        self.grid = np.zeros((window.height, window.width), dtype=bool)
        for s in infected_sites:
            self.set_infected(s, True)

    def _idx(self, x: Site):
        return (x[1] - self.window.y_min, x[0] - self.window.x_min)

    def infected(self, x: Site) -> bool:
        w = self.window
        if self.boundary.kind == Boundary.TORUS:
            xx = (x[0] - w.x_min) % w.width
            yy = (x[1] - w.y_min) % w.height
            return bool(self.grid[yy, xx])
        if w.contains(x):
            return bool(self.grid[self._idx(x)])
        return self.boundary.resolve(x, w)

    def set_infected(self, x: Site, value: bool = True):
        if not self.window.contains(x):
            raise ValueError(f"site {x} outside window")
        self.grid[self._idx(x)] = value

    def infected_sites(self):
        ys, xs = np.nonzero(self.grid)
        w = self.window
        return [(int(x) + w.x_min, int(y) + w.y_min) for y, x in zip(ys, xs)]

    def count_infected(self) -> int:
        return int(self.grid.sum())

    def copy(self) -> "Configuration":
        c = Configuration(self.window, self.boundary)
        c.grid = self.grid.copy()
        return c

    @staticmethod
    def random(window: Window, boundary: Boundary, q: float, stream: "SeededStream") -> "Configuration":
        c = Configuration(window, boundary)
        rng = stream.generator()
        c.grid = rng.random((window.height, window.width)) < q
        return c


# configuration views --------------------------------------------------------
#
# Events on droplets and tubes condition the state outside a region on a
# boundary (all healthy, all infected, or the ambient configuration).  Views
# compose those rules without copying grids.

class View:
    def infected(self, x: Site) -> bool:  # pragma: no cover - interface
        raise NotImplementedError


class ConstantView(View):
    def __init__(self, value: bool):
        self.value = value

    def infected(self, x: Site) -> bool:
        return self.value


HEALTHY_VIEW = ConstantView(False)
INFECTED_VIEW = ConstantView(True)


class ConfigView(View):
    def __init__(self, config: Configuration):
        self.config = config

    def infected(self, x: Site) -> bool:
        return self.config.infected(x)


class RegionView(View):
    """base inside the region, outside elsewhere."""

    def __init__(self, base: View, region_contains: Callable[[Site], bool], outside: View):
        self.base = base
        self.region_contains = region_contains
        self.outside = outside

    def infected(self, x: Site) -> bool:
        return self.base.infected(x) if self.region_contains(x) else self.outside.infected(x)


class ShiftedView(View):
    """View translated so that infected(x) = base(x + shift)."""

    def __init__(self, base: View, shift: Site):
        self.base = base
        self.shift = shift

    def infected(self, x: Site) -> bool:
        return self.base.infected((x[0] + self.shift[0], x[1] + self.shift[1]))


def as_view(obj) -> View:
    if isinstance(obj, View):
        return obj
    if isinstance(obj, Configuration):
        return ConfigView(obj)
    if isinstance(obj, Boundary):
        if obj.kind == Boundary.ALL_HEALTHY:
            return HEALTHY_VIEW
        if obj.kind == Boundary.ALL_INFECTED:
            return INFECTED_VIEW
        if obj.kind == Boundary.HALF_PLANE:
            u, off = obj.u, obj.offset

            class _HalfPlaneView(View):
                def infected(self, x):
                    return half_plane_contains(x, u, off)

            return _HalfPlaneView()
    raise TypeError(f"cannot view {obj!r}")


# ---------------------------------------------------------------------------
# seeded randomness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeededStream:
    """Counter-based stream: identical (seed, stream_id) pairs reproduce
    bit-identical sequences, distinct pairs are independent."""

    seed: int = 0
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.Philox(key=(self.seed & (2**64 - 1), self.stream_id & (2**64 - 1)))
        )

    def substream(self, i: int) -> "SeededStream":
        # disjoint id blocks; callers use i < 2**32 and stream_id < 2**31
        return SeededStream(self.seed, (self.stream_id << 32) ^ i)
