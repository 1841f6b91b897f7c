"""Droplet, tube and segment geometry over a quasi-stable direction frame.

Internally a droplet stores *scaled* radii t_i = r_i * lambda_i (Fractions),
so that membership is the integer test <x, w_i> <= t_i with w_i the
primitive vector of the i-th frame direction.  Extending by c steps of
lambda_i in direction u_i adds the integer c * <w_i, w_j> to t_j, so all
geometry produced by extensions stays exactly rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .lattice import (
    Direction,
    DirectionMetrics,
    Site,
    direction_metrics,
    dot,
)


# ---------------------------------------------------------------------------
# direction frame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionFrame:
    """Clockwise-ordered quasi-stable directions u_0..u_{4k-1}, closed under
    quarter-turn rotation, with per-direction difficulty bookkeeping.

    difficulties[i] is the difficulty value as an extended integer:
    0 unstable, positive finite, or math.inf.
    """

    directions: Tuple[Direction, ...]
    difficulties: Tuple[float, ...]
    alpha: float
    hard_flags: Tuple[bool, ...] = field(default=None)

    def __post_init__(self):
        n = len(self.directions)
        if n % 4 != 0:
            raise ValueError("frame length must be divisible by 4")
        k = n // 4
        for i, u in enumerate(self.directions):
            if self.directions[(i + 2 * k) % n] != u.antipode():
                raise ValueError("frame not closed under point reflection")
            if self.directions[(i + k) % n] != u.rot_cw():
                raise ValueError("frame not closed under quarter turn")
        if self.hard_flags is None:
            object.__setattr__(
                self,
                "hard_flags",
                tuple(d > self.alpha for d in self.difficulties),
            )

    @property
    def k(self) -> int:
        return len(self.directions) // 4

    @property
    def size(self) -> int:
        return len(self.directions)

    def u(self, i: int) -> Direction:
        return self.directions[i % self.size]

    def w(self, i: int) -> Site:
        d = self.u(i)
        return (d.dx, d.dy)

    def metrics(self, i: int) -> DirectionMetrics:
        return direction_metrics(self.u(i))

    def lam(self, i: int) -> float:
        return self.metrics(i).lam

    def norm_sq(self, i: int) -> int:
        return self.u(i).norm_sq

    def g(self, i: int, j: int) -> int:
        """Scaled scalar product <w_i, w_j>."""
        return dot(self.u(i), self.u(j))

    def moving_range(self, i: int) -> List[int]:
        """Indices j with angle(u_i,u_j) < pi/2, i.e. j in (i-k, i+k)."""
        k = self.k
        return [(i + d) % self.size for d in range(-k + 1, k)]

    def difficulty(self, i: int) -> float:
        return self.difficulties[i % self.size]

    def is_hard(self, i: int) -> bool:
        return self.hard_flags[i % self.size]

    @staticmethod
    def axes(difficulties=(1.0, 1.0, 1.0, 1.0), alpha=1.0, u0=Direction(-1, 0)) -> "DirectionFrame":
        dirs = [u0]
        for _ in range(3):
            dirs.append(dirs[-1].rot_cw())
        return DirectionFrame(tuple(dirs), tuple(float(d) for d in difficulties), float(alpha))


def extension_vector(frame: DirectionFrame, i: int) -> List[float]:
    """Euclidean coefficients of the per-unit extension of direction u_i on
    the radius basis: <u_i, u_j> for j in the moving range, 0 elsewhere."""
    out = [0.0] * frame.size
    for j in frame.moving_range(i):
        out[j] = frame.g(i, j) / (frame.lam(i) * frame.lam(j))
    return out


# ---------------------------------------------------------------------------
# droplets
# ---------------------------------------------------------------------------

def _line_interval(frame: DirectionFrame, t: Sequence[Fraction], i: int):
    """Clip the boundary line <x,w_i> = t_i against the other constraints.

    Returns (x0, p, s_lo, s_hi) with rational x0 on the line, p = w_{i+k},
    and the rational parameter interval, or None if empty.
    """
    n = frame.norm_sq(i)
    wi = frame.w(i)
    p = frame.w((i + frame.k) % frame.size)
    x0 = (Fraction(t[i] * wi[0], n), Fraction(t[i] * wi[1], n))
    s_lo, s_hi = None, None
    for j in range(frame.size):
        if j == i:
            continue
        wj = frame.w(j)
        a = x0[0] * wj[0] + x0[1] * wj[1]
        b = p[0] * wj[0] + p[1] * wj[1]
        if b == 0:
            if a > t[j]:
                return None
            continue
        bound = Fraction(t[j] - a, b)
        if b > 0:
            s_hi = bound if s_hi is None else min(s_hi, bound)
        else:
            s_lo = bound if s_lo is None else max(s_lo, bound)
    if s_lo is None or s_hi is None or s_lo > s_hi:
        return None
    return (x0, p, s_lo, s_hi)


class Droplet:
    """Intersection of the closed half planes <x, w_i> <= t_i over a frame."""

    def __init__(self, frame: DirectionFrame, scaled_radii: Sequence, allow_empty: bool = False):
        self.frame = frame
        if len(scaled_radii) != frame.size:
            raise ValueError("radii length must match frame")
        self.t = tuple(Fraction(v) for v in scaled_radii)
        self._int_bounds = tuple(math.floor(v) for v in self.t)
        self._sides = None
        self._points = None
        if not allow_empty and self.is_empty():
            raise ValueError("empty droplet")

    # -- basic geometry ------------------------------------------------------

    def _side_intervals(self):
        if self._sides is None:
            self._sides = [
                _line_interval(self.frame, self.t, i) for i in range(self.frame.size)
            ]
        return self._sides

    def is_empty(self) -> bool:
        return all(s is None for s in self._side_intervals())

    def vertices(self) -> List[Tuple[Fraction, Fraction]]:
        out = []
        for s in self._side_intervals():
            if s is None:
                continue
            x0, p, lo, hi = s
            for sp in (lo, hi):
                v = (x0[0] + sp * p[0], x0[1] + sp * p[1])
                if v not in out:
                    out.append(v)
        return out

    def side_lengths(self) -> List[float]:
        out = []
        for i, s in enumerate(self._side_intervals()):
            if s is None:
                out.append(0.0)
            else:
                _, _, lo, hi = s
                out.append(float(hi - lo) * self.frame.lam(i))
        return out

    def bbox(self) -> Tuple[int, int, int, int]:
        vs = self.vertices()
        if not vs:
            raise ValueError("empty droplet has no bbox")
        xs = [v[0] for v in vs]
        ys = [v[1] for v in vs]
        return (
            math.ceil(min(xs)),
            math.floor(max(xs)),
            math.ceil(min(ys)),
            math.floor(max(ys)),
        )

    def contains(self, x: Site) -> bool:
        f = self.frame
        for i in range(f.size):
            w = f.w(i)
            if x[0] * w[0] + x[1] * w[1] > self._int_bounds[i]:
                return False
        return True

    def points(self) -> List[Site]:
        """All lattice points, sorted lexicographically."""
        if self._points is None:
            if self.is_empty():
                self._points = []
            else:
                x_lo, x_hi, y_lo, y_hi = self.bbox()
                if x_lo > x_hi or y_lo > y_hi:
                    self._points = []
                else:
                    xs = np.arange(x_lo, x_hi + 1)
                    ys = np.arange(y_lo, y_hi + 1)
                    X, Y = np.meshgrid(xs, ys, indexing="xy")
                    mask = np.ones(X.shape, dtype=bool)
                    for i in range(self.frame.size):
                        w = self.frame.w(i)
                        mask &= X * w[0] + Y * w[1] <= self._int_bounds[i]
                    pts = [(int(a), int(b)) for a, b in zip(X[mask], Y[mask])]
                    pts.sort()
                    self._points = pts
        return self._points

    def point_set(self) -> frozenset:
        return frozenset(self.points())

    # -- arithmetic ----------------------------------------------------------

    def extend(self, i: int, steps: int) -> "Droplet":
        """Droplet of radii t + (steps*lambda_i) * v_i, i.e. the geometry grown
        by `steps` lattice steps in direction u_i."""
        if steps < 0:
            raise ValueError("steps must be >= 0")
        f = self.frame
        t = list(self.t)
        for j in f.moving_range(i):
            t[j] = t[j] + steps * f.g(i, j)
        return Droplet(f, t)

    def shrink(self, lines: int) -> "Droplet":
        """Pull every side inward by `lines` lattice lines (may be empty)."""
        return Droplet(
            self.frame, [v - lines for v in self.t], allow_empty=True
        )

    def translate(self, v: Site) -> "Droplet":
        f = self.frame
        t = [self.t[i] + (v[0] * f.w(i)[0] + v[1] * f.w(i)[1]) for i in range(f.size)]
        return Droplet(f, t, allow_empty=True)

    def euclid_radii(self) -> List[float]:
        return [float(self.t[i]) / self.frame.lam(i) for i in range(self.frame.size)]

    def symmetric_center(self) -> Optional[Tuple[Fraction, Fraction]]:
        """Center x with 2x integral such that the droplet is x + Lambda(r)
        with opposite radii equal, or None."""
        f = self.frame
        k = f.k
        # need <x, w_i> = (t_i - t_{i+2k})/2 for all i; solve from i=0, i=k
        w0, wk = f.w(0), f.w(k)
        b0 = (self.t[0] - self.t[2 * k]) / 2
        bk = (self.t[k] - self.t[3 * k]) / 2
        det = w0[0] * wk[1] - w0[1] * wk[0]
        x = Fraction(b0 * wk[1] - bk * w0[1], det)
        y = Fraction(bk * w0[0] - b0 * wk[0], det)
        for i in range(f.size):
            w = f.w(i)
            if x * w[0] + y * w[1] != (self.t[i] - self.t[(i + 2 * k) % f.size]) / 2:
                return None
        if (2 * x).denominator != 1 or (2 * y).denominator != 1:
            return None
        return (x, y)

    def __repr__(self):
        return f"Droplet(t={[str(v) for v in self.t]})"


# ---------------------------------------------------------------------------
# tubes and segments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Discrete line segment perpendicular to u_j at scaled level `level`
    (<x, w_j> = level for every site), ordered along w_{j+k}."""

    direction_index: int
    level: int
    sites: Tuple[Site, ...]
    # scaled positions of the first/last site along w_{j+k}
    span_lo: int
    span_hi: int
    norm_sq: int  # |w_j|^2, shared by w_{j+k}

    def __len__(self):
        return len(self.sites)

    def position(self, idx: int) -> int:
        """Scaled position of sites[idx] along the line (step = norm_sq)."""
        return self.span_lo + idx * self.norm_sq

    def translate(self, v: Site, frame: "DirectionFrame") -> "Segment":
        j = self.direction_index
        wj = frame.w(j)
        wp = frame.w((j + frame.k) % frame.size)
        dlat = v[0] * wp[0] + v[1] * wp[1]
        return Segment(
            direction_index=j,
            level=self.level + v[0] * wj[0] + v[1] * wj[1],
            sites=tuple((s[0] + v[0], s[1] + v[1]) for s in self.sites),
            span_lo=self.span_lo + dlat,
            span_hi=self.span_hi + dlat,
            norm_sq=self.norm_sq,
        )


def _solve_on_line(w: Site, level: int) -> Site:
    """Some integer x with <x, w> = level (w primitive)."""
    a, b = w
    g, s, t = _ext_gcd(abs(a), abs(b))
    s = s if a >= 0 else -s
    t = t if b >= 0 else -t
    return (s * level, t * level)


def _ext_gcd(a: int, b: int):
    if b == 0:
        return a, 1, 0
    g, x, y = _ext_gcd(b, a % b)
    return g, y, x - (a // b) * y


class Tube:
    """T(t, l, i) = Lambda(t + l v_i) \\ Lambda(t) with l = steps * lambda_i."""

    def __init__(self, base: Droplet, direction_index: int, steps: int):
        if steps <= 0:
            raise ValueError("tube length must be positive")
        self.base = base
        self.frame = base.frame
        self.i = direction_index % self.frame.size
        self.steps = steps
        self.top = base.extend(self.i, steps)
        self._pts = None
        self._segs = None

    def points(self) -> List[Site]:
        if self._pts is None:
            pts = sorted(self.top.point_set() - self.base.point_set())
            self._pts = pts
        return self._pts

    def point_set(self) -> frozenset:
        return frozenset(self.points())

    def contains(self, x: Site) -> bool:
        return self.top.contains(x) and not self.base.contains(x)

    def split(self, steps: int) -> Tuple["Tube", "Tube"]:
        """T = T(t, s, i) plus the shifted remainder, s = steps."""
        if not 0 < steps < self.steps:
            raise ValueError("split point inside the tube required")
        first = Tube(self.base, self.i, steps)
        second = Tube(first.top, self.i, self.steps - steps)
        return first, second

    def segments(self, j: int) -> List[Segment]:
        """Peeled line segments perpendicular to u_j, j in the moving range.

        The segment on lattice line level l (in scaled units, <x,w_j> = l)
        is cut laterally by the droplet as it was at the moment its u_j side
        first reached that line; the family over all j is pairwise disjoint
        and covers the tube except for corner leftovers.
        """
        f = self.frame
        j = j % f.size
        if j not in f.moving_range(self.i):
            raise ValueError("segment direction outside the tube's moving range")
        t = self.base.t
        gj = f.g(self.i, j)
        lo_level = math.floor(t[j]) + 1
        hi_level = math.floor(t[j] + self.steps * gj)
        out = []
        p = f.w((j + f.k) % f.size)
        n = f.norm_sq(j)
        moving = f.moving_range(self.i)
        for level in range(lo_level, hi_level + 1):
            c = Fraction(level - 1 - t[j], gj)
            if c < 0:
                c = Fraction(0)
            x0 = _solve_on_line(f.w(j), level)
            s_lo, s_hi = None, None
            ok = True
            for jp in range(f.size):
                if jp == j:
                    continue
                wp = f.w(jp)
                bound = t[jp] + (c * f.g(self.i, jp) if jp in moving else 0)
                a = x0[0] * wp[0] + x0[1] * wp[1]
                b = p[0] * wp[0] + p[1] * wp[1]
                if b == 0:
                    if a > bound:
                        ok = False
                        break
                    continue
                s_bound = Fraction(bound - a, b)
                if b > 0:
                    s_hi = s_bound if s_hi is None else min(s_hi, s_bound)
                else:
                    s_lo = s_bound if s_lo is None else max(s_lo, s_bound)
            if not ok or s_lo is None or s_hi is None:
                continue
            a_int, b_int = math.ceil(s_lo), math.floor(s_hi)
            if a_int > b_int:
                continue
            sites = tuple(
                (x0[0] + s * p[0], x0[1] + s * p[1]) for s in range(a_int, b_int + 1)
            )
            base_pos = x0[0] * p[0] + x0[1] * p[1]
            out.append(
                Segment(
                    direction_index=j,
                    level=level,
                    sites=sites,
                    span_lo=base_pos + a_int * n,
                    span_hi=base_pos + b_int * n,
                    norm_sq=n,
                )
            )
        return out

    def all_segments(self) -> List[Segment]:
        if self._segs is None:
            segs = []
            for j in self.frame.moving_range(self.i):
                segs.extend(self.segments(j))
            self._segs = segs
        return self._segs


# ---------------------------------------------------------------------------
# scale schedule
# ---------------------------------------------------------------------------

@dataclass
class ScaleSchedule:
    """Named scales and per-level lengths instantiated at desk size.

    The asymptotic separation 1/eps >> 1/delta >> C >> W is unreachable at
    desk scale; `cap` records the applied truncation so experiments stay
    auditable.  Levels follow W^n up to the crossover level n_c (first n
    with W^n >= q^-alpha) and ceil(W^exp(n-n_c) / q^alpha) afterwards.
    """

    q: float
    alpha: int
    W: int
    C: int
    delta: float
    eps: float
    ell_internal: float
    ell_meso: float
    ell_meso_plus: float
    ell_meso_minus: float
    n_crossover: int
    n_internal: int
    levels: List[int]
    cap: Optional[int] = None

    def level_length(self, n: int) -> int:
        return self.levels[n]


def desk_schedule(q: float, alpha: int, W: int = 2, C: Optional[int] = None,
                  cap: Optional[int] = 4096) -> ScaleSchedule:
    """Instantiate the scale constants at desk size.

    Defaults: C = 4W, delta = 1/(4C), eps = delta/4; level lengths grow as
    W^n then double-exponentially, truncated at `cap`.
    """
    if not 0 < q < 1:
        raise ValueError("q must be in (0,1)")
    W = max(2, int(W))  # level growth W^n needs W >= 2
    if C is None:
        C = 4 * W
    delta = 1.0 / (4 * C)
    eps = delta / 4
    inv_q_alpha = q ** (-alpha)
    n_c = 0
    while W ** n_c < inv_q_alpha:
        n_c += 1
    ell_i = C * C * math.log(1 / q) * inv_q_alpha
    ell_m = q ** (-C)
    levels = []
    n = 0
    n_i = None
    while True:
        if n <= n_c:
            val = W ** n
        else:
            val = math.ceil(W ** math.exp(n - n_c) * inv_q_alpha)
        if cap is not None and val > cap:
            break
        if levels and val <= levels[-1]:
            val = levels[-1] + 1  # keep strict monotonicity at tiny q
        levels.append(int(val))
        if n > n_c and val >= ell_i * eps and n_i is None:
            n_i = n
            break
        n += 1
        if n > 64:
            break
    if n_i is None:
        n_i = len(levels) - 1
    return ScaleSchedule(
        q=q,
        alpha=alpha,
        W=W,
        C=C,
        delta=delta,
        eps=eps,
        ell_internal=ell_i,
        ell_meso=ell_m,
        ell_meso_plus=ell_m / math.sqrt(delta),
        ell_meso_minus=ell_m * math.sqrt(delta),
        n_crossover=n_c,
        n_internal=n_i,
        levels=levels,
        cap=cap,
    )
