"""Deterministic checkers for the droplet events driving the renormalized
dynamics: line helping sets, (symmetric) tube traversability, recursive
super-good events built by one-directional extension schedules, good and
super-good tiling boxes, plus Monte Carlo probability estimation with exact
oracles.

Boundary conditions are threaded explicitly: inner droplets of an extension
step are always judged with an all-healthy exterior, the step's tube with
the supplied outer boundary.  All checkers are decreasing (adding infections
never destroys an event) and translation invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .lattice import (
    Boundary,
    Configuration,
    Direction,
    HEALTHY_VIEW,
    RegionView,
    SeededStream,
    ShiftedView,
    Site,
    View,
    Window,
    as_view,
)
from .droplets import DirectionFrame, Droplet, ScaleSchedule, Segment, Tube
from .bootstrap import HelpingGenerator


# ---------------------------------------------------------------------------
# scaled-length comparisons  (value vs d * sqrt(n), exact for integer value)
# ---------------------------------------------------------------------------

def _ge_d_lambda(value: int, d: float, norm_sq: int) -> bool:
    """value >= d * sqrt(norm_sq), exact when d is an integer."""
    if d <= 0:
        return value >= 0
    if value < 0:
        return False
    if isinstance(d, int) or float(d).is_integer():
        return value * value >= int(d) * int(d) * norm_sq
    return value >= d * math.sqrt(norm_sq)


def _le_d_lambda(value: int, d: float, norm_sq: int) -> bool:
    """value <= d * sqrt(norm_sq)."""
    if value <= 0:
        return d >= 0
    if isinstance(d, int) or float(d).is_integer():
        return value * value <= int(d) * int(d) * norm_sq
    return value <= d * math.sqrt(norm_sq)


# ---------------------------------------------------------------------------
# helping events on a segment
# ---------------------------------------------------------------------------

def has_w_helping(view, seg: Segment, W: int, d: float = 0) -> bool:
    """W consecutive infected segment sites at distance >= d from both ends."""
    v = as_view(view)
    n = len(seg.sites)
    if W <= 0:
        return True
    run = 0
    for idx in range(n):
        if v.infected(seg.sites[idx]):
            run += 1
        else:
            run = 0
        if run >= W:
            a = idx - W + 1
            if _ge_d_lambda((a) * seg.norm_sq, d, seg.norm_sq) and _ge_d_lambda(
                (n - 1 - idx) * seg.norm_sq, d, seg.norm_sq
            ):
                return True
    return False


def _w_run_witness(view, seg: Segment, W: int, d: float = 0):
    v = as_view(view)
    n = len(seg.sites)
    run = 0
    for idx in range(n):
        run = run + 1 if v.infected(seg.sites[idx]) else 0
        if run >= W:
            a = idx - W + 1
            if _ge_d_lambda(a * seg.norm_sq, d, seg.norm_sq) and _ge_d_lambda(
                (n - 1 - idx) * seg.norm_sq, d, seg.norm_sq
            ):
                return seg.sites[a: idx + 1]
    return None


def _pattern_covers_residues(view: View, seg: Segment, frame: DirectionFrame,
                             base: Tuple[Site, ...], period: int, step_vec: Site,
                             d: float) -> bool:
    """One infected, in-domain translate of `base` per lateral residue class.

    Translates are base + anchor + j*w_perp + k*step_vec for j in [period],
    k integer; domain: depth within [0, period] Euclidean above the segment
    line, lateral within the d-trimmed span.
    """
    i = seg.direction_index
    wi = frame.w(i)
    wp = frame.w((i + frame.k) % frame.size)
    n = seg.norm_sq
    anchor = seg.sites[0]
    anchor_lat = anchor[0] * wp[0] + anchor[1] * wp[1]
    lo = seg.span_lo  # == anchor_lat
    hi = seg.span_hi
    base_lat = [z[0] * wp[0] + z[1] * wp[1] for z in base]
    base_lvl = [z[0] * wi[0] + z[1] * wi[1] for z in base]
    # depth condition is translate independent: 0 <= lvl <= period * lambda
    for lvl in base_lvl:
        if lvl < 0 or not _le_d_lambda(lvl, period, n):
            return False
    step_lat = step_vec[0] * wp[0] + step_vec[1] * wp[1]  # = +-period * n
    if step_lat == 0:
        return False
    for j in range(period):
        found = False
        # lateral position of base site b under translate (j, k):
        #   anchor_lat + base_lat[b] + j*n + k*step_lat  in  [lo + d*lam, hi - d*lam]
        mn, mx = min(base_lat), max(base_lat)
        # bounds for k from the loosest site constraints
        lo_k = -(hi - lo) // abs(step_lat) - 2
        hi_k = (hi - lo) // abs(step_lat) + 2
        for k in range(lo_k, hi_k + 1):
            off = j * n + k * step_lat
            if not _ge_d_lambda(off + mn, d, n):
                continue
            if not _ge_d_lambda((hi - lo) - (off + mx), d, n):
                continue
            sx = anchor[0] + j * wp[0] + k * step_vec[0]
            sy = anchor[1] + j * wp[1] + k * step_vec[1]
            if all(view.infected((z[0] + sx, z[1] + sy)) for z in base):
                found = True
                break
        if not found:
            return False
    return True


def has_helping(view, seg: Segment, frame: DirectionFrame,
                gens: Dict[int, HelpingGenerator], alpha: float, W: int,
                d: float = 0) -> bool:
    """Helping set for the segment's direction: a W-helping set, or a
    size-alpha generated pattern (symmetrized with the opposite direction's
    reflected pattern when that direction is not hard)."""
    v = as_view(view)
    i = seg.direction_index
    a_i = frame.difficulty(i)
    if a_i == math.inf:
        return False
    if has_w_helping(v, seg, W, d):
        return True
    if a_i > alpha:
        return False
    # forward pattern
    if a_i > 0:
        g = gens.get(i % frame.size)
        if g is None:
            return False
        if not _pattern_covers_residues(v, seg, frame, g.Z, g.Q, g.x, d):
            return False
    # opposite-direction symmetrization
    i2 = (i + 2 * frame.k) % frame.size
    a_b = frame.difficulty(i2)
    if a_b > alpha or a_b == 0:
        return True
    gb = gens.get(i2)
    if gb is None:
        return False
    base = tuple((-z[0], -z[1]) for z in gb.Z)
    return _pattern_covers_residues(v, seg, frame, base, gb.Q, gb.x, d)


# ---------------------------------------------------------------------------
# traversability
# ---------------------------------------------------------------------------

@dataclass
class EventOutcome:
    holds: bool
    witness: Dict = field(default_factory=dict)

    def __bool__(self):
        return self.holds


def _traversable_segments(view: View, segments: Sequence[Segment],
                          frame: DirectionFrame, gens, alpha: float, W: int,
                          dd: float, tube_dir: int, symmetric: bool,
                          collect: bool) -> EventOutcome:
    witness = {"segments": {}} if collect else {}
    k2 = 2 * frame.k
    for seg in segments:
        j = seg.direction_index
        if not has_helping(view, seg, frame, gens, alpha, W, dd):
            return EventOutcome(False, {"failed_segment": (j, seg.level)})
        if symmetric and (
            frame.difficulty(j) <= alpha < frame.difficulty((j + k2) % frame.size)
        ):
            if not has_w_helping(view, seg, W, dd):
                return EventOutcome(False, {"failed_segment": (j, seg.level, "w_run")})
        if collect:
            run = _w_run_witness(view, seg, W, dd)
            if run:
                witness["segments"][(j, seg.level)] = run
    return EventOutcome(True, witness)


def is_traversable(config, tube: Tube, omega, frame: DirectionFrame,
                   gens: Dict[int, HelpingGenerator], alpha: float, W: int,
                   d: float = 0, trim: float = 0, symmetric: bool = False,
                   collect: bool = False) -> EventOutcome:
    """Every segment of the tube carries a helping set at trim distance
    trim + d from its endpoints; the symmetric variant additionally demands
    W-runs on segments facing opposites of hard directions.

    Sites inside the tube read the configuration, everything else reads
    omega.
    """
    cview = as_view(config)
    oview = as_view(omega)
    view = RegionView(cview, tube.contains, oview)
    dd = trim + d
    for j in frame.moving_range(tube.i):
        if frame.difficulty(j) == math.inf:
            raise ValueError(f"direction {frame.u(j)} blocks traversal")
    if symmetric:
        for j in range(frame.size):
            if frame.difficulty(j) == math.inf:
                raise ValueError("symmetric traversability needs finite difficulties")
    return _traversable_segments(
        view, tube.all_segments(), frame, gens, alpha, W, dd, tube.i,
        symmetric, collect,
    )


# ---------------------------------------------------------------------------
# towers of extensions (recursive super-good events)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    kind: str            # "east" | "cbsep"
    direction_index: int
    steps: int           # length in lattice steps of lambda_i


class TowerSpec:
    """Base droplet event plus an ordered schedule of extension steps.

    base_kind "full": every base site infected; "ring": every site of the
    base outside its interior shrunk by ring_width lattice lines infected.
    """

    def __init__(self, frame: DirectionFrame, base: Droplet, steps: Sequence[Step],
                 gens: Dict[int, HelpingGenerator], alpha: float, W: int,
                 base_kind: str = "full", ring_width: int = 0, trim: float = 0,
                 schedule: Optional[ScaleSchedule] = None):
        self.frame = frame
        self.base = base
        self.steps = list(steps)
        self.gens = dict(gens)
        self.alpha = alpha
        self.W = W
        self.base_kind = base_kind
        self.ring_width = ring_width
        self.trim = trim
        self.schedule = schedule
        if base_kind == "ring" and ring_width <= 0:
            raise ValueError("ring base needs positive width")
        finite_all = all(frame.difficulty(i) < math.inf for i in range(frame.size))
        droplets = [base]
        for s in self.steps:
            if s.kind == "cbsep" and not finite_all:
                raise ValueError("offset extensions need finite difficulties everywhere")
            if s.kind == "east":
                for j in frame.moving_range(s.direction_index):
                    if frame.difficulty(j) == math.inf:
                        raise ValueError("anchored extension blocked by a hard arc direction")
            droplets.append(droplets[-1].extend(s.direction_index, s.steps))
        self.droplets = droplets
        self._base_sites = None
        self._tube_cache: Dict[Tuple, Tube] = {}

    @property
    def levels(self) -> int:
        return len(self.steps)

    def droplet(self, level: int) -> Droplet:
        return self.droplets[level]

    def top(self) -> Droplet:
        return self.droplets[-1]

    def base_event_sites(self) -> List[Site]:
        if self._base_sites is None:
            if self.base_kind == "full":
                self._base_sites = list(self.base.points())
            else:
                inner = self.base.shrink(self.ring_width)
                if inner.is_empty():
                    self._base_sites = list(self.base.points())
                else:
                    self._base_sites = sorted(
                        self.base.point_set() - inner.point_set()
                    )
        return self._base_sites

    def tube(self, level: int, direction_index: int, steps: int) -> Tube:
        key = (level, direction_index, steps)
        t = self._tube_cache.get(key)
        if t is None:
            t = Tube(self.droplets[level], direction_index, steps)
            self._tube_cache[key] = t
        return t

    def tube_segments(self, level: int, direction_index: int, steps: int):
        key = ("segs", level, direction_index, steps)
        segs = self._tube_cache.get(key)
        if segs is None:
            segs = self.tube(level, direction_index, steps).all_segments()
            self._tube_cache[key] = segs
        return segs


def sg_check(config, tower: TowerSpec, level: Optional[int] = None,
             omega=None, collect: bool = False) -> EventOutcome:
    """Recursive super-good check.

    Level 0 is the base event.  An anchored ("east") level holds when the
    previous level holds with all-healthy exterior and the step tube is
    traversable under omega.  An offset ("cbsep") level holds when, for some
    offset multiple of lambda_i in [0, l], the translated previous-level
    droplet is super good with healthy exterior and the two flanking tubes
    are symmetrically traversable under omega.

    Nested events are judged with an all-healthy exterior, so their outcome
    depends only on (level, cumulative translation); results are memoized on
    that pair within one call.
    """
    if level is None:
        level = tower.levels
    if omega is None:
        omega = HEALTHY_VIEW
    view = as_view(config)
    oview = as_view(omega)
    cache: Dict[Tuple[int, Site], EventOutcome] = {}
    return _sg_rec(view, tower, level, (0, 0), oview, collect, cache)


def _tube_event(orig: View, tower: TowerSpec, level: int, direction: int,
                steps: int, shift: Site, oview: View, symmetric: bool,
                collect: bool) -> EventOutcome:
    """Traversability of the cached tube geometry translated by shift; sites
    inside read the configuration, outside read omega."""
    frame = tower.frame
    for j in frame.moving_range(direction):
        if frame.difficulty(j) == math.inf:
            return EventOutcome(False, {"blocked_direction": j})
    base_tube = tower.tube(level, direction, steps)
    sx, sy = shift
    if sx == 0 and sy == 0:
        region = base_tube.contains
        segs = tower.tube_segments(level, direction, steps)
    else:
        region = lambda p: base_tube.contains((p[0] - sx, p[1] - sy))
        segs = [s.translate(shift, frame)
                for s in tower.tube_segments(level, direction, steps)]
    view = RegionView(orig, region, oview)
    return _traversable_segments(
        view, segs, frame, tower.gens, tower.alpha, tower.W, tower.trim,
        direction, symmetric, collect,
    )


def _sg_rec(orig: View, tower: TowerSpec, level: int, shift: Site,
            oview: View, collect: bool,
            cache: Dict[Tuple[int, Site], EventOutcome]) -> EventOutcome:
    """Event at `level` for the tower geometry translated by `shift`,
    evaluated against `orig`; oview resolves reads outside the level's
    droplet (all healthy except possibly at the outermost call)."""
    cacheable = oview is HEALTHY_VIEW
    key = (level, shift)
    if cacheable and key in cache:
        return cache[key]
    out = _sg_eval(orig, tower, level, shift, oview, collect, cache)
    if cacheable:
        cache[key] = out
    return out


def _sg_eval(orig, tower, level, shift, oview, collect, cache) -> EventOutcome:
    sx, sy = shift
    if level == 0:
        for s in tower.base_event_sites():
            if not orig.infected((s[0] + sx, s[1] + sy)):
                return EventOutcome(False, {"failed_base_site": (s[0] + sx, s[1] + sy)})
        return EventOutcome(True, {})
    step = tower.steps[level - 1]
    frame = tower.frame
    i = step.direction_index
    if step.kind == "east":
        inner = _sg_rec(orig, tower, level - 1, shift, HEALTHY_VIEW, collect, cache)
        if not inner.holds:
            return inner
        tr = _tube_event(orig, tower, level - 1, i, step.steps, shift, oview,
                         symmetric=False, collect=collect)
        if not tr.holds:
            return EventOutcome(False, {"level": level, **tr.witness})
        out = EventOutcome(True, {})
        out.witness.update(inner.witness)
        if collect:
            out.witness[f"tube_{level}"] = tr.witness
        return out
    # offset extension: some translate of the previous droplet is super good
    # with healthy exterior and both flanking tubes are symmetrically
    # traversable under omega
    w_i = frame.w(i)
    for off in range(0, step.steps + 1):
        shift2 = (sx + off * w_i[0], sy + off * w_i[1])
        inner = _sg_rec(orig, tower, level - 1, shift2, HEALTHY_VIEW, collect, cache)
        if not inner.holds:
            continue
        ok = True
        wit: Dict = {}
        if step.steps - off > 0:
            tr = _tube_event(orig, tower, level - 1, i, step.steps - off,
                             shift2, oview, symmetric=True, collect=collect)
            if not tr.holds:
                ok = False
            elif collect:
                wit[f"fwd_{level}"] = tr.witness
        if ok and off > 0:
            tr = _tube_event(orig, tower, level - 1, (i + 2 * frame.k) % frame.size,
                             off, shift2, oview, symmetric=True, collect=collect)
            if not tr.holds:
                ok = False
            elif collect:
                wit[f"bwd_{level}"] = tr.witness
        if ok:
            out = EventOutcome(True, {"cbsep_offsets": {level: off}})
            if "cbsep_offsets" in inner.witness:
                out.witness["cbsep_offsets"].update(inner.witness["cbsep_offsets"])
            if collect:
                wit_inner = {k: v for k, v in inner.witness.items()
                             if k != "cbsep_offsets"}
                out.witness.update(wit_inner)
                out.witness.update(wit)
            return out
    return EventOutcome(False, {"level": level, "no_offset": True})


# ---------------------------------------------------------------------------
# tower construction
# ---------------------------------------------------------------------------

def build_tower(kind: str, family, frame: DirectionFrame,
                schedule: ScaleSchedule, q: float,
                base_half_width: int = 2, rounds: int = 2,
                length_cap: int = 64, trim: float = 0,
                gens: Optional[Dict[int, HelpingGenerator]] = None,
                gen_box_radius: Optional[int] = None) -> TowerSpec:
    """Emit the step schedule for one of the droplet-growth recipes.

    kind: "iso" (offset extensions doubling every half turn),
    "unbalanced_internal" (ring base, no steps),
    "unbalanced_meso" (ring base plus one offset extension per direction),
    "semidirected_internal" (anchored extensions cycling the axes, lengths
    from the level schedule; frames with k=1 only).
    All lengths are desk-capped at length_cap lattice steps.
    """
    import math as _m
    from .bootstrap import find_helping_generator

    k = frame.k
    W = schedule.W
    alpha = int(frame.alpha)
    finite_all = all(frame.difficulty(i) < _m.inf for i in range(frame.size))
    if kind == "iso":
        if any(frame.hard_flags):
            raise ValueError("doubling-offset towers need a family with no hard directions")
    if kind in ("iso", "unbalanced_meso"):
        if not finite_all:
            raise ValueError("offset extensions need finitely many stable directions")
    if kind == "semidirected_internal" and k != 1:
        raise ValueError("axis schedule requires k = 1")

    if gens is None:
        gens = {}
        for i in range(frame.size):
            a_i = frame.difficulty(i)
            if 0 < a_i <= frame.alpha and a_i != _m.inf:
                box = gen_box_radius or (2 * family.range + 2 + int(a_i))
                gens[i] = find_helping_generator(family, frame.u(i), int(a_i), box)

    def _mk_base(half_width: int) -> Droplet:
        # symmetric droplet, sides multiples of 2*lambda
        return Droplet(frame, [half_width * frame.norm_sq(i) for i in range(frame.size)])

    steps: List[Step] = []
    if kind == "iso":
        base = _mk_base(base_half_width)
        cur = base
        for n in range(2 * k * rounds):
            i = n % frame.size
            side = cur.side_lengths()[(i + k) % frame.size]
            c = int(round(side / frame.lam(i)))
            c = max(2, min(c, length_cap))
            c -= c % 2
            steps.append(Step("cbsep", i, c))
            cur = cur.extend(i, c)
        return TowerSpec(frame, base, steps, gens, frame.alpha, W,
                         base_kind="full", trim=trim, schedule=schedule)
    if kind in ("unbalanced_internal", "unbalanced_meso"):
        base = _mk_base(base_half_width)
        if kind == "unbalanced_meso":
            for n in range(4 * k):
                i = n % frame.size
                c = min(length_cap, 2 * base_half_width * (2 if n < 2 * k else 4))
                c -= c % 2
                steps.append(Step("cbsep", i, max(2, c)))
        return TowerSpec(frame, base, steps, gens, frame.alpha, W,
                         base_kind="ring", ring_width=W, trim=trim,
                         schedule=schedule)
    if kind == "semidirected_internal":
        base = _mk_base(base_half_width)
        s0 = [int(round(s)) for s in base.side_lengths()]
        levels = schedule.levels
        for n in range(len(levels) - 1):
            for j in range(2 * k):
                growth = s0[(j + k) % frame.size] * (levels[n + 1] - levels[n])
                c = min(growth, length_cap)
                if c <= 0:
                    continue
                steps.append(Step("east", j, c))
        return TowerSpec(frame, base, steps, gens, frame.alpha, W,
                         base_kind="full", trim=trim, schedule=schedule)
    raise ValueError(f"unknown tower kind {kind!r}")


# ---------------------------------------------------------------------------
# good / super-good tiling boxes
# ---------------------------------------------------------------------------

def box_events(config, box: Window, tower: TowerSpec, eps_len: float) -> Dict[str, bool]:
    """good: every segment in the box perpendicular to a frame direction of
    Euclidean length >= eps_len carries a W-run; super_good: good and the
    tower's top event holds for some translate inside the box."""
    view = as_view(config)
    frame, W = tower.frame, tower.W
    good = True
    for i in range(2 * frame.k):
        w = frame.w(i)
        p = frame.w((i + frame.k) % frame.size)
        window_sites = max(W, math.ceil(eps_len / frame.lam(i)) + 1)
        lines: Dict[int, List[Tuple[int, Site]]] = {}
        for x in range(box.x_min, box.x_max + 1):
            for y in range(box.y_min, box.y_max + 1):
                lvl = x * w[0] + y * w[1]
                lat = x * p[0] + y * p[1]
                lines.setdefault(lvl, []).append((lat, (x, y)))
        for pts in lines.values():
            pts.sort()
            runs = []
            r = 0
            for _, s in pts:
                r = r + 1 if view.infected(s) else 0
                runs.append(r)
            m = len(pts)
            if m < window_sites:
                continue
            run_ends = [t for t in range(m) if runs[t] >= W]
            for a in range(m - window_sites + 1):
                if not any(a + W - 1 <= t <= a + window_sites - 1 for t in run_ends):
                    good = False
                    break
            if not good:
                break
        if not good:
            break
    sg = False
    if good:
        bx_lo, bx_hi, by_lo, by_hi = tower.top().bbox()
        cache: Dict = {}
        for vx in range(box.x_min - bx_lo, box.x_max - bx_hi + 1):
            for vy in range(box.y_min - by_lo, box.y_max - by_hi + 1):
                if _sg_rec(view, tower, tower.levels, (vx, vy), HEALTHY_VIEW,
                           False, cache).holds:
                    sg = True
                    break
            if sg:
                break
    return {"good": good, "super_good": sg}


# ---------------------------------------------------------------------------
# boundary-change witness
# ---------------------------------------------------------------------------

def _segment_reads_outside(seg: Segment, tube: Tube, frame: DirectionFrame,
                           gens: Dict[int, HelpingGenerator]) -> bool:
    """Does the helping check of this segment read any site outside the tube?

    The W-run clause reads only segment sites; pattern clauses read the slab
    of depth Q above the segment line within its lateral span.
    """
    j = seg.direction_index
    k = frame.k
    depth = 0
    for idx in (j % frame.size, (j + 2 * k) % frame.size):
        g = gens.get(idx)
        if g is None:
            continue
        lvl = max(abs(z[0] * frame.w(j)[0] + z[1] * frame.w(j)[1]) for z in g.Z)
        depth = max(depth, math.isqrt(g.Q * g.Q * seg.norm_sq) + lvl)
    if depth == 0:
        return False
    from .droplets import _solve_on_line

    wj = frame.w(j)
    wp = frame.w((j + k) % frame.size)
    n = seg.norm_sq
    for r in range(0, depth + 1):
        x0 = _solve_on_line(wj, seg.level + r)
        base_lat = x0[0] * wp[0] + x0[1] * wp[1]
        s_lo = -(-(seg.span_lo - base_lat) // n)
        s_hi = (seg.span_hi - base_lat) // n
        for s in range(s_lo, s_hi + 1):
            z = (x0[0] + s * wp[0], x0[1] + s * wp[1])
            if not tube.contains(z):
                return True
    return False


def boundary_witness_sites(tube: Tube, frame: DirectionFrame,
                           gens: Dict[int, HelpingGenerator], W: int,
                           trim: float = 0) -> List[Site]:
    """Planted W-runs making every boundary-reading segment satisfied, so
    that traversability outcomes agree for every boundary condition."""
    out: List[Site] = []
    for j in frame.moving_range(tube.i):
        for seg in tube.segments(j):
            if not _segment_reads_outside(seg, tube, frame, gens):
                continue
            n = len(seg.sites)
            if n < W:
                continue
            mid = (n - W) // 2
            run = seg.sites[mid: mid + W]
            a = mid * seg.norm_sq
            b = (n - 1 - (mid + W - 1)) * seg.norm_sq
            if _ge_d_lambda(a, trim, seg.norm_sq) and _ge_d_lambda(b, trim, seg.norm_sq):
                out.extend(run)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo estimation and exact oracles
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, n: int, z: float = 1.96) -> Tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class ProbabilityEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    samples: int
    successes: int


def estimate_probability(event: Callable[[Configuration], bool], window: Window,
                         q: float, samples: int, stream: SeededStream,
                         boundary: Optional[Boundary] = None) -> ProbabilityEstimate:
    """P(event) under the product measure with per-site infection density q."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    boundary = boundary or Boundary.all_healthy()
    rng = stream.generator()
    hits = 0
    cfg = Configuration(window, boundary)
    for _ in range(samples):
        cfg.grid = rng.random((window.height, window.width)) < q
        if event(cfg):
            hits += 1
    lo, hi = wilson_interval(hits, samples)
    return ProbabilityEstimate(hits / samples, lo, hi, samples, hits)


def w_run_probability(n_sites: int, W: int, q: float, d_sites: int = 0) -> float:
    """Exact probability that n i.i.d.(q) sites contain W consecutive infected
    sites at index distance >= d_sites from both ends (run-length DP)."""
    a, b = d_sites, n_sites - 1 - d_sites
    m = b - a + 1
    if m < W:
        return 0.0
    # states: current run length 0..W-1, absorbing at W
    probs = [0.0] * W
    probs[0] = 1.0
    hit = 0.0
    for _ in range(m):
        nxt = [0.0] * W
        for r, pr in enumerate(probs):
            if pr == 0.0:
                continue
            nxt[0] += pr * (1 - q)
            if r + 1 >= W:
                hit += pr * q
            else:
                nxt[r + 1] += pr * q
        probs = nxt
    return hit


def w_helping_lower_bound(n_sites: int, W: int, q: float) -> float:
    """Block lower bound 1 - (1 - q^W)^floor(n/W)."""
    return 1.0 - (1.0 - q ** W) ** (n_sites // W)


# ---------------------------------------------------------------------------
# correlation checks
# ---------------------------------------------------------------------------

def harris_check(event_a, event_b, window: Window, q: float, samples: int,
                 stream: SeededStream) -> Dict[str, float]:
    """One-sided Monte Carlo check of positive correlation for a pair of
    decreasing events: p(A and B) >= p(A)p(B) - tolerance."""
    rng = stream.generator()
    ca = cb = cab = 0
    cfg = Configuration(window, Boundary.all_healthy())
    for _ in range(samples):
        cfg.grid = rng.random((window.height, window.width)) < q
        a = bool(event_a(cfg))
        b = bool(event_b(cfg))
        ca += a
        cb += b
        cab += a and b
    pa, pb, pab = ca / samples, cb / samples, cab / samples
    se = math.sqrt(
        pab * (1 - pab) / samples
        + (pb ** 2) * pa * (1 - pa) / samples
        + (pa ** 2) * pb * (1 - pb) / samples
    )
    return {
        "p_a": pa, "p_b": pb, "p_ab": pab,
        "gap": pab - pa * pb, "se": se,
    }


def _forces(event, cells: Sequence[Site], subset_mask: int, window: Window) -> bool:
    cfg = Configuration(window, Boundary.all_healthy())
    for idx, s in enumerate(cells):
        if subset_mask >> idx & 1:
            cfg.set_infected(s, True)
    return bool(event(cfg))


def bk_disjoint_check(event_a, event_b, window: Window, q) -> Dict[str, object]:
    """Exhaustive van den Berg--Kesten inequality check on a small window.

    For decreasing events, A and B occur disjointly in a configuration iff
    two disjoint subsets of its infected sites force A and B respectively.
    Probabilities are exact rationals when q is a Fraction.
    """
    from fractions import Fraction

    cells = list(window.sites())
    m = len(cells)
    if m > 12:
        raise ValueError("window too large for exhaustive enumeration")
    force_a = [_forces(event_a, cells, s, window) for s in range(1 << m)]
    force_b = [_forces(event_b, cells, s, window) for s in range(1 << m)]
    any_b = list(force_b)
    for s in range(1 << m):
        if any_b[s]:
            continue
        t = s
        while t:
            low = t & (-t)
            if any_b[s & ~low]:
                any_b[s] = True
                break
            t ^= low
    qf = Fraction(q)
    p_a = p_b = p_box = Fraction(0)
    for s in range(1 << m):
        k = bin(s).count("1")
        w = qf ** k * (1 - qf) ** (m - k)
        if force_a[s]:
            p_a += w
        if force_b[s]:
            p_b += w
        # disjoint occurrence: some X subset of s forcing A with B forced
        # inside the remainder
        box = False
        x = s
        while True:
            if force_a[x] and any_b[s & ~x]:
                box = True
                break
            if x == 0:
                break
            x = (x - 1) & s
        if box:
            p_box += w
    return {"p_a": p_a, "p_b": p_b, "p_disjoint": p_box,
            "holds": p_box <= p_a * p_b}


# ---------------------------------------------------------------------------
# sampling super-good configurations
# ---------------------------------------------------------------------------

def sample_sg(tower: TowerSpec, q: float, stream: SeededStream,
              max_tries: int = 100000) -> Tuple[Configuration, int]:
    """Rejection sampling of the tower's top event: propose from the product
    measure conditioned on the base event (base sites forced infected, the
    rest i.i.d. with density q), reject until sg_check holds."""
    top = tower.top()
    x_lo, x_hi, y_lo, y_hi = top.bbox()
    window = Window(x_lo, x_hi, y_lo, y_hi)
    rng = stream.generator()
    base_sites = tower.base_event_sites()
    cfg = Configuration(window, Boundary.all_healthy())
    for attempt in range(1, max_tries + 1):
        cfg.grid = rng.random((window.height, window.width)) < q
        for s in base_sites:
            cfg.set_infected(s, True)
        if sg_check(cfg, tower).holds:
            return cfg, attempt
    raise RuntimeError(f"no super-good sample in {max_tries} tries")
