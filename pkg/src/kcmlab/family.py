"""Update-family algebra: stability of directions, stable arcs, difficulties,
the quasi-stable direction frame, and the universality classification.

All stability and angular decisions are exact; the only semi-decided
quantity is the difficulty search, which is a bounded-box procedure with
certificates and an honest Inconclusive outcome.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

from .lattice import (
    Direction,
    Site,
    compare_clockwise,
    cw_angle_class,
    dot_site,
    in_closed_cw_arc,
    in_open_semicircle,
    arc_meets_open_semicircle,
    mediant,
    sort_clockwise,
)
from . import bootstrap
from .droplets import DirectionFrame

INF = math.inf


# ---------------------------------------------------------------------------
# update families
# ---------------------------------------------------------------------------

class UpdateFamily:
    """Finite collection of finite nonempty sets of nonzero lattice vectors."""

    def __init__(self, name: str, rules: Sequence[Sequence[Site]]):
        self.name = name
        norm = []
        for r in rules:
            r = frozenset((int(x), int(y)) for x, y in r)
            if not r:
                raise ValueError("empty update rule")
            if (0, 0) in r:
                raise ValueError("rule contains the origin")
            norm.append(r)
        if not norm:
            raise ValueError("family has no rules")
        self.rules: Tuple[frozenset, ...] = tuple(norm)

    @property
    def range(self) -> int:
        return max(max(abs(x), abs(y)) for r in self.rules for x, y in r)

    def vectors(self) -> List[Site]:
        return sorted({v for r in self.rules for v in r})

    def to_json(self) -> str:
        return json.dumps(
            {"name": self.name, "rules": [sorted(map(list, r)) for r in self.rules]}
        )

    @staticmethod
    def from_json(text: str) -> "UpdateFamily":
        data = json.loads(text)
        return UpdateFamily(data["name"], [[tuple(v) for v in r] for r in data["rules"]])

    @staticmethod
    def load(path) -> "UpdateFamily":
        with open(path) as f:
            return UpdateFamily.from_json(f.read())

    def __repr__(self):
        return f"UpdateFamily({self.name!r}, {len(self.rules)} rules)"


def is_unstable(family: UpdateFamily, u: Direction) -> bool:
    """Some rule lies strictly inside the open half plane with outer normal u."""
    for r in family.rules:
        if all(dot_site(x, u) < 0 for x in r):
            return True
    return False


# ---------------------------------------------------------------------------
# stable arcs
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    """Stable set as a finite union of closed arcs with rational endpoints.

    components: (start, end) clockwise closed arcs, start == end for points.
    full_circle / empty capture the degenerate cases.
    """

    components: List[Tuple[Direction, Direction]]
    isolated: List[Direction]
    semi_isolated: List[Direction]
    full_circle: bool = False

    @property
    def empty(self) -> bool:
        return not self.full_circle and not self.components

    def nontrivial(self) -> List[Tuple[Direction, Direction]]:
        return [(a, b) for a, b in self.components if a != b]

    def is_stable(self, u: Direction) -> bool:
        if self.full_circle:
            return True
        return any(in_closed_cw_arc(a, b, u) for a, b in self.components)

    def is_isolated(self, u: Direction) -> bool:
        return u in self.isolated


def stable_arcs(family: UpdateFamily) -> StabilityReport:
    """Exact stable set.

    Stability can only change at directions perpendicular to rule vectors,
    so it is constant on the open arcs between consecutive candidates and is
    sampled there at an exact rational mediant.
    """
    cands = set()
    for v in family.vectors():
        perp = Direction.of(-v[1], v[0])
        cands.add(perp)
        cands.add(perp.antipode())
    origin = next(iter(cands))
    cands = sort_clockwise(cands, origin)
    m = len(cands)
    point_stable = [not is_unstable(family, c) for c in cands]
    gap_stable = [
        not is_unstable(family, mediant(cands[i], cands[(i + 1) % m]))
        for i in range(m)
    ]
    if all(point_stable) and all(gap_stable):
        return StabilityReport([], [], [], full_circle=True)
    if not any(point_stable):
        return StabilityReport([], [], [])
    # walk atoms circularly: point i, gap i, point i+1, ...
    # a stable gap forces both its endpoints stable, so maximal stable runs
    # start and end at candidate points; start the walk after an unstable gap
    start = next(i for i in range(m) if not gap_stable[i])
    components: List[Tuple[Direction, Direction]] = []
    isolated, semi = [], []
    seen = 0
    # iterate atom pairs (point j, gap j) starting from point start+1
    j = (start + 1) % m
    run_points: List[int] = []
    while seen < m:
        if point_stable[j]:
            run_points.append(j)
        # close the run when the following gap is unstable or point unstable
        if point_stable[j] and gap_stable[j]:
            pass  # run continues through the gap
        else:
            if run_points:
                a, b = run_points[0], run_points[-1]
                nontrivial = len(run_points) > 1
                components.append((cands[a], cands[b]))
                if nontrivial:
                    semi.extend([cands[a], cands[b]])
                else:
                    isolated.append(cands[a])
            run_points = []
        j = (j + 1) % m
        seen += 1
    if run_points:
        a, b = run_points[0], run_points[-1]
        components.append((cands[a], cands[b]))
        if len(run_points) > 1:
            semi.extend([cands[a], cands[b]])
        else:
            isolated.append(cands[a])
    return StabilityReport(components, isolated, semi)


# ---------------------------------------------------------------------------
# difficulties
# ---------------------------------------------------------------------------

@dataclass
class Difficulty:
    """0 unstable, finite with certificate, infinite (non-isolated stable),
    or inconclusive with the proven lower bound."""

    kind: str                       # "zero" | "finite" | "infinite" | "inconclusive"
    value: float = 0.0
    certificate_Z: Optional[Tuple[Site, ...]] = None
    certificate_shift: Optional[Site] = None
    lower_bound: Optional[int] = None
    search_radius: Optional[int] = None

    @staticmethod
    def zero() -> "Difficulty":
        return Difficulty("zero", 0.0)

    @staticmethod
    def infinite() -> "Difficulty":
        return Difficulty("infinite", INF)

    @property
    def is_finite_positive(self) -> bool:
        return self.kind == "finite"


def _canonical_lateral(Z: Tuple[Site, ...], u: Direction) -> Tuple[Site, ...]:
    p = (u.dy, -u.dx)
    lats = [z[0] * p[0] + z[1] * p[1] for z in Z]
    k = min(lats) // u.norm_sq  # whole lattice steps along the line
    if k == 0:
        return Z
    return tuple(sorted((z[0] - k * p[0], z[1] - k * p[1]) for z in Z))


def difficulty(family: UpdateFamily, u: Direction, box_radius: Optional[int] = None,
               max_size: int = 4,
               report: Optional[StabilityReport] = None) -> Difficulty:
    """Bounded-box search for the minimal seed size with certified infinite
    growth along the boundary of H_u.

    Finite(n) requires an Infinite certificate at size n and a fully
    Finite-certified exhaustion of sizes below n inside the box; everything
    else degrades to Inconclusive.
    """
    if report is None:
        report = stable_arcs(family)
    if is_unstable(family, u):
        return Difficulty.zero()
    if not report.is_isolated(u):
        return Difficulty.infinite()
    if box_radius is None:
        box_radius = 2 * family.range + 2
    if box_radius < family.range:
        raise ValueError("box radius below family range")
    cands = bootstrap._candidate_sites(u, box_radius)
    for n in range(1, max_size + 1):
        clean = True
        seen = set()
        for combo in combinations(cands, n):
            Z = _canonical_lateral(tuple(sorted(combo)), u)
            if Z in seen:
                continue
            seen.add(Z)
            diam = (
                max(max(abs(a[0] - b[0]), abs(a[1] - b[1])) for a in Z for b in Z)
                if n > 1 else 0
            )
            span = max(8 * (family.range + diam), 4 * box_radius, 32)
            v = bootstrap.infinite_growth(family, u, Z, span)
            if v.is_infinite:
                return Difficulty(
                    "finite", float(n), certificate_Z=Z, certificate_shift=v.shift,
                    search_radius=box_radius,
                )
            if v.kind == "inconclusive":
                clean = False
        if not clean:
            return Difficulty("inconclusive", INF, lower_bound=n,
                              search_radius=box_radius)
    return Difficulty("inconclusive", INF, lower_bound=max_size + 1,
                      search_radius=box_radius)


# ---------------------------------------------------------------------------
# family difficulty (min over open semicircles of the max inside)
# ---------------------------------------------------------------------------

def _semicircle_max(report: StabilityReport, diffs: Dict[Direction, Difficulty],
                    theta: Direction) -> float:
    """Max difficulty over the open semicircle swept clockwise from theta."""
    worst = 0.0
    for a, b in report.components:
        if a == b:
            if in_open_semicircle(theta, a):
                d = diffs.get(a)
                if d is None or d.kind not in ("finite", "zero"):
                    return INF
                worst = max(worst, d.value)
        elif arc_meets_open_semicircle(a, b, theta):
            return INF
    return worst


def family_difficulty(report: StabilityReport,
                      diffs: Dict[Direction, Difficulty]) -> Tuple[float, Direction]:
    """Sweep semicircle boundaries over the event set (component endpoints,
    isolated points, their antipodes) and return (alpha, witness boundary).

    The witness is the clockwise start theta of an open semicircle achieving
    the min; its midpoint theta.rot_cw() is the distinguished direction u_0.
    """
    events = set()
    for a, b in report.components:
        events.update([a, b, a.antipode(), b.antipode()])
    if not events:
        # supercritical with empty stable set; any semicircle works
        return 0.0, Direction(0, 1)
    events = sort_clockwise(events, next(iter(events)))
    thetas = list(events)
    m = len(events)
    for i in range(m):
        a, b = events[i], events[(i + 1) % m]
        if a != b:
            thetas.append(mediant(a, b))
    best_key, best_theta = None, None
    for th in thetas:
        val = _semicircle_max(report, diffs, th)
        mid = th.rot_cw()
        key = (val, mid.norm_sq, (mid.dx, mid.dy))
        if best_key is None or key < best_key:
            best_key, best_theta = key, th
    return best_key[0], best_theta


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

CLASS_EXPONENTS = {
    "a_unbalanced_infinite": (2, 4, 0),
    "b_balanced_infinite": (2, 0, 0),
    "c_unbalanced_rooted_finite": (1, 3, 0),
    "d_unbalanced_unrooted": (1, 2, 0),
    "e_balanced_rooted_finite": (1, 1, 0),
    "f_semi_directed": (1, 0, 1),
    "g_isotropic": (1, 0, 0),
}


@dataclass
class ClassificationReport:
    criticality: str                      # "supercritical" | "critical" | "subcritical"
    alpha: float
    refined: str
    exponents: Optional[Tuple[int, int, int]]
    stability: StabilityReport
    difficulties: Dict[Direction, Difficulty]
    witness: Optional[Direction]
    hard_points: List[Direction]
    hard_arcs: List[Tuple[Direction, Direction]]
    unresolved: bool = False

    def hard_summary(self) -> str:
        parts = [f"{len(self.hard_points)} isolated hard"]
        if self.hard_arcs:
            parts.append(f"{len(self.hard_arcs)} hard arcs")
        reps = ", ".join(f"({u.dx},{u.dy})" for u in self.hard_points[:4])
        return "; ".join(parts) + (f" [{reps}]" if reps else "")


def _gaps_with_length_at_least_pi(components) -> bool:
    """Some clockwise gap between consecutive components spans >= pi."""
    if not components:
        return True
    if len(components) == 1:
        a, b = components[0]
        if a == b:
            return True  # a single point leaves a gap of 2*pi
        return cw_angle_class(b, a) in (2, 3)
    m = len(components)
    for i in range(m):
        end = components[i][1]
        start = components[(i + 1) % m][0]
        if cw_angle_class(end, start) in (2, 3):
            return True
    return False


def classify(family: UpdateFamily, box_radius: Optional[int] = None,
             max_size: int = 4) -> ClassificationReport:
    """Full pipeline: stable arcs, per-direction difficulties, alpha, and the
    refined class with its exponent triple."""
    report = stable_arcs(family)

    # criticality from the symbolic arc structure
    if report.full_circle:
        return ClassificationReport(
            "subcritical", INF, "subcritical", None, report, {}, None, [], [],
        )
    comps_cw = _order_components_clockwise(report)
    supercritical = _gaps_with_length_at_least_pi(comps_cw)
    nontrivial = [(a, b) for a, b in comps_cw if a != b]
    if not supercritical:
        sub = not _gaps_with_length_at_least_pi(nontrivial) if nontrivial else False
        if sub:
            return ClassificationReport(
                "subcritical", INF, "subcritical", None, report, {}, None,
                [], nontrivial,
            )

    if supercritical:
        # hard coincides with stable here; no difficulty search needed
        witness = family_difficulty(report, {})[1] if not report.empty else None
        hard_pts = list(report.isolated)
        rooted = _has_non_opposite_pair(hard_pts, nontrivial)
        refined = "supercritical_rooted" if rooted else "supercritical_unrooted"
        return ClassificationReport(
            "supercritical", 0.0, refined, None, report, {}, witness,
            hard_pts, nontrivial,
        )

    diffs: Dict[Direction, Difficulty] = {}
    unresolved = False
    for u in report.isolated:
        d = difficulty(family, u, box_radius=box_radius, max_size=max_size,
                       report=report)
        diffs[u] = d
        if d.kind == "inconclusive":
            unresolved = True

    if unresolved:
        return ClassificationReport(
            "critical", INF, "unresolved", None, report, diffs, None, [],
            nontrivial, unresolved=True,
        )

    alpha, witness = family_difficulty(report, diffs)
    hard_pts = [
        u for u in report.isolated
        if diffs[u].kind == "finite" and diffs[u].value > alpha
    ]
    hard_arcs = nontrivial  # every point of a nontrivial arc has infinite difficulty
    finite_stable = not nontrivial
    unbalanced = _has_opposite_pair(hard_pts, hard_arcs)
    rooted = _has_non_opposite_pair(hard_pts, hard_arcs)
    n_hard = len(hard_pts) if not hard_arcs else INF

    if not finite_stable:
        refined = "a_unbalanced_infinite" if unbalanced else "b_balanced_infinite"
    elif unbalanced:
        refined = "c_unbalanced_rooted_finite" if rooted else "d_unbalanced_unrooted"
    elif rooted:
        refined = "e_balanced_rooted_finite"
    elif n_hard == 1:
        refined = "f_semi_directed"
    else:
        refined = "g_isotropic"
    return ClassificationReport(
        "critical", alpha, refined, CLASS_EXPONENTS[refined], report, diffs,
        witness, hard_pts, hard_arcs, unresolved,
    )


def _order_components_clockwise(report: StabilityReport):
    if not report.components:
        return []
    origin = report.components[0][0]
    return sorted(
        report.components,
        key=lambda ab: _cw_rank(origin, ab[0], report),
    )


def _cw_rank(origin: Direction, u: Direction, report):
    return _CwKey(origin, u)


class _CwKey:
    __slots__ = ("origin", "u")

    def __init__(self, origin, u):
        self.origin = origin
        self.u = u

    def __lt__(self, other):
        return compare_clockwise(self.u, other.u, self.origin) < 0

    def __eq__(self, other):
        return compare_clockwise(self.u, other.u, self.origin) == 0


# ---------------------------------------------------------------------------
# quasi-stable frame
# ---------------------------------------------------------------------------

def _pair_condition_ok(family: UpdateFamily, report: StabilityReport,
                       u: Direction, v: Direction) -> bool:
    """Consecutive frame pair admissibility: a rule inside the closed cone
    complement (X within both closed half planes), or the whole open arc
    between u and v stable."""
    for r in family.rules:
        if all(dot_site(x, u) <= 0 and dot_site(x, v) <= 0 for x in r):
            return True
    if report.full_circle:
        return True
    for a, b in report.components:
        if a == b:
            continue
        if (
            in_closed_cw_arc(a, b, u)
            and in_closed_cw_arc(a, b, v)
            and in_closed_cw_arc(u, b, v)
        ):
            return True
    return False


def _axes_only(family: UpdateFamily) -> bool:
    return all(x == 0 or y == 0 for x, y in family.vectors())


def quasi_stable_frame(family: UpdateFamily,
                       classification: Optional[ClassificationReport] = None,
                       box_radius: Optional[int] = None,
                       max_insertions: int = 256) -> DirectionFrame:
    """Quarter-turn-closed clockwise frame containing all isolated and
    semi-isolated stable directions plus the witness-semicircle midpoint,
    repaired so every consecutive pair admits a shared covering rule."""
    if classification is None:
        classification = classify(family, box_radius=box_radius)
    if classification.criticality == "subcritical":
        raise ValueError("no frame for subcritical families")
    report = classification.stability
    u0 = classification.witness.rot_cw() if classification.witness else Direction(-1, 0)

    if _axes_only(family):
        axes = {Direction(1, 0), Direction(0, 1), Direction(-1, 0), Direction(0, -1)}
        base = u0 if u0 in axes else Direction(-1, 0)
        dirs = [base]
        for _ in range(3):
            dirs.append(dirs[-1].rot_cw())
    else:
        s_prime = set(report.isolated) | set(report.semi_isolated) | {u0}
        dirs_set = set()
        for d in s_prime:
            r = d
            for _ in range(4):
                dirs_set.add(r)
                r = r.rot_cw()
        dirs = sort_clockwise(dirs_set, u0)
        inserted = 0
        i = 0
        while i < len(dirs):
            u, v = dirs[i], dirs[(i + 1) % len(dirs)]
            if _pair_condition_ok(family, report, u, v):
                i += 1
                continue
            if inserted >= max_insertions:
                raise ValueError("frame repair did not terminate")
            med = mediant(u, v)
            r = med
            for _ in range(4):
                dirs_set.add(r)
                r = r.rot_cw()
            inserted += 4
            dirs = sort_clockwise(dirs_set, u0)
            i = 0
    diffs = dict(classification.difficulties)
    values = []
    for d in dirs:
        if is_unstable(family, d):
            values.append(0.0)
        elif report.is_isolated(d):
            if d not in diffs:
                diffs[d] = difficulty(family, d, box_radius=box_radius, report=report)
            dd = diffs[d]
            values.append(dd.value if dd.kind == "finite" else INF)
        else:
            values.append(INF)
    return DirectionFrame(tuple(dirs), tuple(values), classification.alpha)


def _has_opposite_pair(points: List[Direction], arcs) -> bool:
    """Two opposite hard directions (points or arc members)."""
    for u in points:
        au = u.antipode()
        if au in points or any(in_closed_cw_arc(a, b, au) for a, b in arcs):
            return True
    for a, b in arcs:
        # equal-extent arcs meet their point reflection iff a reflected
        # endpoint lands in one of them
        for p in (a.antipode(), b.antipode()):
            if any(in_closed_cw_arc(a2, b2, p) for a2, b2 in arcs):
                return True
    return False


def _has_non_opposite_pair(points: List[Direction], arcs) -> bool:
    """Two non-opposite hard directions."""
    if any(a != b for a, b in arcs):
        return True  # a nontrivial arc contains non-opposite pairs
    allpts = list(points) + [a for a, b in arcs if a == b]
    for i, u in enumerate(allpts):
        for v in allpts[i + 1:]:
            if v != u.antipode():
                return True
    return False
