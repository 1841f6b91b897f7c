"""Bootstrap-percolation closure engine with boundary conditions, certified
infinite-growth detection along half-plane boundaries, and helping-set
discovery.

Two closure paths exist on purpose: `closure` is the queue-based operation
on Configurations (deterministic infection order, synchronous round count),
while `_slab_growth` is a vectorized synchronous engine specialized to
half-plane growth windows, used by the difficulty search where thousands of
closures run per direction.  The two are cross-checked in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np

from .lattice import Boundary, Configuration, Direction, Site, dot_site

if TYPE_CHECKING:  # pragma: no cover
    from .family import UpdateFamily


# ---------------------------------------------------------------------------
# closure on configurations
# ---------------------------------------------------------------------------

@dataclass
class ClosureResult:
    final: Configuration
    newly_infected: List[Site]
    rounds: int


def closure(family: "UpdateFamily", config: Configuration) -> ClosureResult:
    """Fixed point of the infection map restricted to the window.

    Layered queue: when a site becomes infected only the sites whose
    constraint reads it are re-examined; layers coincide with synchronous
    rounds and sites within a layer are recorded in lexicographic order.
    """
    out = config.copy()
    w = out.window
    rules = [tuple(r) for r in family.rules]
    # sites whose constraint reads x: x - u over all rule vectors
    dep = sorted({(-u[0], -u[1]) for r in rules for u in r})

    def satisfied(x: Site) -> bool:
        for r in rules:
            for u in r:
                if not out.infected((x[0] + u[0], x[1] + u[1])):
                    break
            else:
                return True
        return False

    def wrap(x: Site) -> Site:
        if out.boundary.kind == Boundary.TORUS:
            return (
                (x[0] - w.x_min) % w.width + w.x_min,
                (x[1] - w.y_min) % w.height + w.y_min,
            )
        return x

    newly: List[Site] = []
    frontier: List[Site] = []
    for s in w.sites():
        if not out.infected(s) and satisfied(s):
            frontier.append(s)
    rounds = 0
    while frontier:
        rounds += 1
        frontier.sort()
        for s in frontier:
            out.set_infected(s, True)
            newly.append(s)
        candidates = set()
        for s in frontier:
            for d in dep:
                y = wrap((s[0] + d[0], s[1] + d[1]))
                if w.contains(y) and not out.infected(y):
                    candidates.add(y)
        frontier = [y for y in sorted(candidates) if satisfied(y)]
    return ClosureResult(final=out, newly_infected=newly, rounds=rounds)


def closure_grid_batch(family: "UpdateFamily", grids: np.ndarray,
                       infected_pad: bool = False) -> np.ndarray:
    """Synchronous closure of a batch of boolean grids (N, H, W) with a
    constant exterior; grids[n, y, x].  Vectorized over the batch."""
    N, H, W_ = grids.shape
    pad = family.range
    P = np.full((N, H + 2 * pad, W_ + 2 * pad), infected_pad, dtype=bool)
    P[:, pad: pad + H, pad: pad + W_] = grids
    rules = [tuple(r) for r in family.rules]
    while True:
        fire = np.zeros((N, H, W_), dtype=bool)
        for r in rules:
            ok = np.ones((N, H, W_), dtype=bool)
            for (vx, vy) in r:
                ok &= P[:, pad + vy: pad + vy + H, pad + vx: pad + vx + W_]
            fire |= ok
        inner = P[:, pad: pad + H, pad: pad + W_]
        new = fire & ~inner
        if not new.any():
            return inner.copy()
        P[:, pad: pad + H, pad: pad + W_] = inner | new


def closure_synchronous(family: "UpdateFamily", config: Configuration) -> Configuration:
    """Brute-force synchronous-rounds reference; used as an oracle in tests."""
    out = config.copy()
    w = out.window
    while True:
        new = []
        for s in w.sites():
            if out.infected(s):
                continue
            for r in family.rules:
                if all(out.infected((s[0] + u[0], s[1] + u[1])) for u in r):
                    new.append(s)
                    break
        if not new:
            return out
        for s in new:
            out.set_infected(s, True)


# ---------------------------------------------------------------------------
# half-plane growth windows
# ---------------------------------------------------------------------------

@dataclass
class GrowthVerdict:
    kind: str                       # "infinite" | "finite" | "inconclusive"
    shift: Optional[Site] = None    # lattice vector parallel to the line

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"


def _slab_growth(family: "UpdateFamily", u: Direction, Z: Sequence[Site],
                 lateral_span_sites: int, depth_extra: int = 0):
    """Synchronous closure of H_u(0) + Z on a slab window.

    The window holds scaled levels <x,w_u> in [0, L_Z + margin] and scaled
    lateral coordinates within +-half.  Returns (infected bool grid,
    coordinate helpers, updatable mask).
    """
    w = (u.dx, u.dy)
    p = (u.dy, -u.dx)  # rot_cw, along the boundary line
    rng = family.range
    n = u.norm_sq
    lam1 = abs(p[0]) + abs(p[1])
    max_level = max((dot_site(z, u) for z in Z), default=0)
    depth = max_level + rng * lam1 + depth_extra
    half = (lateral_span_sites // 2) * n  # scaled lateral half-width
    # bounding box of {0<=level<=depth, |lat|<=half} in xy coords
    corners = []
    for lv in (0, depth):
        for lt in (-half, half):
            # x = (lv*w + lt*p)/n
            corners.append(((lv * w[0] + lt * p[0]) / n, (lv * w[1] + lt * p[1]) / n))
    x_lo = math.floor(min(c[0] for c in corners)) - rng
    x_hi = math.ceil(max(c[0] for c in corners)) + rng
    y_lo = math.floor(min(c[1] for c in corners)) - rng
    y_hi = math.ceil(max(c[1] for c in corners)) + rng
    xs = np.arange(x_lo, x_hi + 1)
    ys = np.arange(y_lo, y_hi + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    level = X * w[0] + Y * w[1]
    lat = X * p[0] + Y * p[1]
    infected = level < 0
    updatable = (level >= 0) & (level <= depth) & (np.abs(lat) <= half)
    for z in Z:
        if not (x_lo <= z[0] <= x_hi and y_lo <= z[1] <= y_hi):
            raise ValueError(f"seed site {z} outside growth window")
        infected[z[1] - y_lo, z[0] - x_lo] = True
    H, W_ = infected.shape
    rules = [tuple(r) for r in family.rules]
    pad = rng
    P = np.zeros((H + 2 * pad, W_ + 2 * pad), dtype=bool)
    # padding cells follow the half-plane boundary rule
    Xp, Yp = np.meshgrid(
        np.arange(x_lo - pad, x_hi + pad + 1),
        np.arange(y_lo - pad, y_hi + pad + 1),
        indexing="xy",
    )
    levelp = Xp * w[0] + Yp * w[1]
    P[:, :] = levelp < 0
    P[pad: pad + H, pad: pad + W_] = infected
    frozen_outside = ~updatable
    while True:
        fire = np.zeros((H, W_), dtype=bool)
        for r in rules:
            ok = np.ones((H, W_), dtype=bool)
            for (vx, vy) in r:
                ok &= P[pad + vy: pad + vy + H, pad + vx: pad + vx + W_]
                if not ok.any():
                    break
            fire |= ok
        inner = P[pad: pad + H, pad: pad + W_]
        new = fire & ~inner & ~frozen_outside
        if not new.any():
            break
        P[pad: pad + H, pad: pad + W_] = inner | new
    final = P[pad: pad + H, pad: pad + W_]
    info = {
        "x_lo": x_lo, "y_lo": y_lo, "level": level, "lat": lat,
        "half": half, "updatable": updatable, "p": p, "n": n,
        "margin": rng * lam1 * n,
    }
    return final, info


def infinite_growth(family: "UpdateFamily", u: Direction, Z: Sequence[Site],
                    lateral_span: int) -> GrowthVerdict:
    """Certified growth verdict for [H_u union Z] along the boundary line.

    Infinite(x): the closure contains Z + x for a nonzero lattice vector x
    parallel to the line, which bootstraps Z + kx for every k >= 0 by
    translation invariance.  Finite: the closure stabilized with no new
    infection within family range of the lateral window edges.  Anything
    else is Inconclusive.
    """
    Z = sorted(set(Z))
    if not Z:
        return GrowthVerdict("finite")
    diam = max(
        max(abs(a[0] - b[0]), abs(a[1] - b[1])) for a in Z for b in Z
    )
    min_span = 8 * (family.range + diam)
    if lateral_span < min_span:
        raise ValueError(f"lateral_span {lateral_span} below {min_span}")
    for z in Z:
        if dot_site(z, u) < 0:
            raise ValueError(f"seed {z} inside the infected half plane")
    final, info = _slab_growth(family, u, Z, lateral_span)
    x_lo, y_lo = info["x_lo"], info["y_lo"]
    p, n = info["p"], info["n"]
    H, W_ = final.shape

    def infected_at(s: Site) -> bool:
        xx, yy = s[0] - x_lo, s[1] - y_lo
        return 0 <= xx < W_ and 0 <= yy < H and bool(final[yy, xx])

    # translation certificate, smallest shift first
    max_m = lateral_span // 2
    for m in range(1, max_m + 1):
        for sgn in (1, -1):
            shift = (sgn * m * p[0], sgn * m * p[1])
            if all(infected_at((z[0] + shift[0], z[1] + shift[1])) for z in Z):
                return GrowthVerdict("infinite", shift=shift)
    # finiteness with margin: no new infection near the lateral edges
    new = final & info["updatable"]
    for z in Z:
        new[z[1] - y_lo, z[0] - x_lo] = False
    if not new.any():
        return GrowthVerdict("finite")
    lat = info["lat"]
    margin = info["margin"]
    near_edge = np.abs(lat) > info["half"] - margin
    if (new & near_edge).any():
        return GrowthVerdict("inconclusive")
    return GrowthVerdict("finite")


def growth_closure_sites(family: "UpdateFamily", u: Direction, Z: Sequence[Site],
                         lateral_span: int) -> List[Site]:
    """Sites of [H_u union Z] with level >= 0 inside the growth window."""
    final, info = _slab_growth(family, u, Z, lateral_span)
    x_lo, y_lo = info["x_lo"], info["y_lo"]
    keep = final & info["updatable"]
    ys, xs = np.nonzero(keep)
    return sorted((int(x) + x_lo, int(y) + y_lo) for x, y in zip(xs, ys))


# ---------------------------------------------------------------------------
# helping generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HelpingGenerator:
    """Seed pattern Z with |Z| = alpha(u) infecting a periodic sublattice of
    the boundary line: [Z union H_u] contains Z + k*x for all k >= 0 and only
    finitely many sites strictly above the line."""

    direction: Direction
    Z: Tuple[Site, ...]
    x: Site
    Q: int

    def translates(self, anchor: Site, j: int, k: int) -> Tuple[Site, ...]:
        """Z + anchor + j*w_perp + k*x (scaled lateral steps)."""
        p = (self.direction.dy, -self.direction.dx)
        sx = anchor[0] + j * p[0] + k * self.x[0]
        sy = anchor[1] + j * p[1] + k * self.x[1]
        return tuple((z[0] + sx, z[1] + sy) for z in self.Z)


def find_helping_generator(family: "UpdateFamily", u: Direction, n: int,
                           box_radius: int) -> HelpingGenerator:
    """Search seed sets of size n in the box for an Infinite verdict, keeping
    the one with minimal max level, then minimal shift norm, then verifying
    that nothing above the boundary line grows beyond a finite set."""
    from itertools import combinations

    cands = _candidate_sites(u, box_radius)
    best = None
    for idx, combo in enumerate(combinations(cands, n)):
        Z = tuple(sorted(combo))
        lvl = max(dot_site(z, u) for z in Z)
        if best is not None and lvl > best[0]:
            continue
        diam = max(max(abs(a[0] - b[0]), abs(a[1] - b[1])) for a in Z for b in Z) if n > 1 else 0
        span = max(8 * (family.range + diam), 4 * box_radius, 32)
        v = infinite_growth(family, u, Z, span)
        if not v.is_infinite:
            continue
        # overflow above the first line must stay finite (margin check on
        # levels >= 1 near lateral edges)
        if not _finite_overflow(family, u, Z, span):
            continue
        norm = v.shift[0] ** 2 + v.shift[1] ** 2
        key = (lvl, norm, idx)
        if best is None or key < best[:3]:
            best = (lvl, norm, idx, Z, v.shift)
    if best is None:
        raise ValueError(f"no helping generator of size {n} in box {box_radius}")
    Z, shift = best[3], best[4]
    lam_sq = u.norm_sq
    q, rem = divmod(shift[0] ** 2 + shift[1] ** 2, lam_sq)
    if rem != 0:
        raise ValueError("shift not a lattice multiple along the line")
    return HelpingGenerator(direction=u, Z=Z, x=shift, Q=int(math.isqrt(q)))


def _finite_overflow(family, u, Z, span) -> bool:
    final, info = _slab_growth(family, u, Z, span)
    above = final & info["updatable"] & (info["level"] >= 1)
    if not above.any():
        return True
    near_edge = np.abs(info["lat"]) > info["half"] - info["margin"]
    return not (above & near_edge).any()


def _candidate_sites(u: Direction, box_radius: int) -> List[Site]:
    """Box sites outside the open half plane, ordered by (level, |lateral|)."""
    p = (u.dy, -u.dx)
    out = []
    for x in range(-box_radius, box_radius + 1):
        for y in range(-box_radius, box_radius + 1):
            lvl = dot_site((x, y), u)
            if lvl < 0:
                continue
            lt = x * p[0] + y * p[1]
            out.append((lvl, abs(lt), lt > 0, (x, y)))
    out.sort()
    return [s for _, _, _, s in out]


# ---------------------------------------------------------------------------
# line-spreading threshold
# ---------------------------------------------------------------------------

def min_w_direction(family: "UpdateFamily", u: Direction, cap: int,
                    span_sites: int = 64) -> Optional[int]:
    """Least W <= cap such that W consecutive infected line sites plus H_u
    infect the whole visible stretch of the boundary line (margins excluded);
    None if cap is exceeded."""
    p = (u.dy, -u.dx)
    n = u.norm_sq
    rng = family.range
    margin = (rng + 2) * n
    for W in range(1, cap + 1):
        run = [(j * p[0], j * p[1]) for j in range(W)]
        final, info = _slab_growth(family, u, run, span_sites)
        x_lo, y_lo = info["x_lo"], info["y_lo"]
        ok = True
        half = info["half"]
        for j in range(-span_sites // 2, span_sites // 2 + 1):
            lt = j * n
            if abs(lt) > half - margin:
                continue
            s = (j * p[0], j * p[1])
            if not final[s[1] - y_lo, s[0] - x_lo]:
                ok = False
                break
        if ok:
            return W
    return None


def min_w(family: "UpdateFamily", frame, cap: int = 8) -> Tuple[Dict[int, int], int]:
    """Per-direction spreading thresholds over the frame's finite-difficulty
    directions, and their maximum (the working constant W)."""
    per = {}
    for i in range(frame.size):
        if frame.difficulty(i) == math.inf:
            continue
        w = min_w_direction(family, frame.u(i), cap)
        if w is None:
            raise ValueError(
                f"no spreading threshold <= {cap} for direction {frame.u(i)}"
            )
        per[i] = w
    return per, max(per.values())
