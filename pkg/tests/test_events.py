import math
from fractions import Fraction

import numpy as np
import pytest

from kcmlab.bootstrap import closure, find_helping_generator, min_w
from kcmlab.droplets import DirectionFrame, Droplet, Segment, Tube, desk_schedule
from kcmlab.events import (
    EventOutcome,
    bk_disjoint_check,
    boundary_witness_sites,
    box_events,
    build_tower,
    estimate_probability,
    harris_check,
    has_helping,
    has_w_helping,
    is_traversable,
    sample_sg,
    sg_check,
    w_helping_lower_bound,
    w_run_probability,
)
from kcmlab.family import UpdateFamily, classify, quasi_stable_frame
from kcmlab.lattice import (
    Boundary,
    Configuration,
    Direction,
    HEALTHY_VIEW,
    INFECTED_VIEW,
    RegionView,
    SeededStream,
    View,
    Window,
    as_view,
)


class SetView(View):
    def __init__(self, sites):
        self.sites = set(sites)

    def infected(self, x):
        return x in self.sites


class ReflectView(View):
    """Point reflection through the origin."""

    def __init__(self, base):
        self.base = base

    def infected(self, x):
        return self.base.infected((-x[0], -x[1]))


def _line_segment(n_sites, j=1):
    return Segment(direction_index=j, level=0,
                   sites=tuple((x, 0) for x in range(n_sites)),
                   span_lo=0, span_hi=n_sites - 1, norm_sq=1)


# ---------------------------------------------------------------------------
# helping sets
# ---------------------------------------------------------------------------

def test_has_w_helping_examples():
    seg = _line_segment(10)
    v = SetView({(3, 0), (4, 0), (5, 0)})
    assert has_w_helping(v, seg, 3, d=2)
    assert not has_w_helping(v, seg, 4, d=2)
    edge = SetView({(0, 0), (1, 0)})
    assert has_w_helping(edge, seg, 2, d=0)
    assert not has_w_helping(edge, seg, 2, d=1)


def _one_segment(frame, direction, half_width=4):
    """A realistic boundary-line segment perpendicular to `direction`."""
    i = frame.directions.index(direction)
    d = Droplet(frame, [half_width * frame.norm_sq(j) for j in range(frame.size)])
    segs = Tube(d, i, 1).segments(i)
    assert len(segs) == 1
    return i, segs[0]


def test_has_helping_duarte_pattern(duarte):
    rep = classify(duarte)
    fr = quasi_stable_frame(duarte, rep)
    i_e, seg = _one_segment(fr, Direction(1, 0))
    gens = {i_e: find_helping_generator(duarte, Direction(1, 0), 1, 4)}
    mid = seg.sites[len(seg.sites) // 2]
    # a single infected site inside the trimmed span is a generated pattern
    assert has_helping(SetView({mid}), seg, fr, gens, fr.alpha, W=3)
    assert not has_helping(SetView(set()), seg, fr, gens, fr.alpha, W=3)
    # opposite direction is hard for this family, so no reflected copy is
    # required, and a W-run works without any generator
    run = set(seg.sites[2:5])
    assert has_helping(SetView(run), seg, fr, {}, fr.alpha, W=3)


def test_has_helping_hard_direction_w_only(ud_family, ud_frame):
    fr = ud_frame
    gens = _gens_for(ud_family, fr)
    i_n, seg = _one_segment(fr, Direction(0, 1), half_width=5)
    one = {seg.sites[4]}
    two = {seg.sites[4], seg.sites[5]}
    # hard direction: one site is not enough, a W=2 run is
    assert not has_helping(SetView(one), seg, fr, gens, fr.alpha, W=2)
    assert has_helping(SetView(two), seg, fr, gens, fr.alpha, W=2)


def test_has_helping_symmetrization(fa2f, fa2f_frame):
    """Single-site patterns coincide with their reflected opposite copies
    for this family, so one mid-segment site suffices."""
    fr = fa2f_frame
    gens = {i: find_helping_generator(fa2f, fr.u(i), 1, 4) for i in range(4)}
    _, seg = _one_segment(fr, Direction(1, 0))
    mid = seg.sites[len(seg.sites) // 2]
    assert has_helping(SetView({mid}), seg, fr, gens, fr.alpha, W=4)
    assert not has_helping(SetView(set()), seg, fr, gens, fr.alpha, W=4)


def test_vacuous_when_difficulty_zero(east):
    rep = classify(east)
    fr = quasi_stable_frame(east, rep)
    i_w = fr.directions.index(Direction(-1, 0))
    assert fr.difficulty(i_w) == 0
    _, seg = _one_segment(fr, Direction(-1, 0))
    assert has_helping(SetView(set()), seg, fr, {}, fr.alpha, W=2)


# ---------------------------------------------------------------------------
# traversability
# ---------------------------------------------------------------------------

def _gens_for(family, frame, box=4):
    out = {}
    for i in range(frame.size):
        if 0 < frame.difficulty(i) <= frame.alpha and frame.difficulty(i) < math.inf:
            out[i] = find_helping_generator(family, frame.u(i), int(frame.difficulty(i)), box)
    return out


def test_traversable_full_and_empty(ud_family, ud_frame):
    fr = ud_frame
    gens = _gens_for(ud_family, fr)
    d = Droplet(fr, [3, 3, 3, 3])
    t = Tube(d, 0, 2)
    full = is_traversable(INFECTED_VIEW, t, HEALTHY_VIEW, fr, gens, fr.alpha, W=2)
    assert full.holds
    fulls = is_traversable(INFECTED_VIEW, t, HEALTHY_VIEW, fr, gens, fr.alpha,
                           W=2, symmetric=True)
    assert fulls.holds
    empty = is_traversable(HEALTHY_VIEW, t, HEALTHY_VIEW, fr, gens, fr.alpha, W=2)
    assert not empty.holds and "failed_segment" in empty.witness


def test_traversable_huge_trim_vacuously_false(ud_family, ud_frame):
    d = Droplet(ud_frame, [3, 3, 3, 3])
    t = Tube(d, 0, 2)
    out = is_traversable(INFECTED_VIEW, t, HEALTHY_VIEW, ud_frame,
                         _gens_for(ud_family, ud_frame), ud_frame.alpha,
                         W=2, trim=100)
    assert not out.holds


def test_traversable_blocked_direction(duarte):
    fr = quasi_stable_frame(duarte, classify(duarte))
    d = Droplet(fr, [3, 3, 3, 3])
    i_n = fr.directions.index(Direction(0, 1))
    t = Tube(d, i_n, 2)
    with pytest.raises(ValueError):
        is_traversable(INFECTED_VIEW, t, HEALTHY_VIEW, fr, {}, fr.alpha, W=2)


def test_symmetric_traversability_reflection(ud_family, ud_frame):
    """On a symmetric droplet the symmetric-traversability outcomes of the
    two opposite tubes agree after point reflection of configuration and
    boundary through the center."""
    fr = ud_frame
    gens = _gens_for(ud_family, fr)
    d = Droplet(fr, [3, 3, 3, 3])      # centered at the origin
    i_w = fr.directions.index(Direction(-1, 0))
    i_e = fr.directions.index(Direction(1, 0))
    t_w = Tube(d, i_w, 2)
    t_e = Tube(d, i_e, 2)
    rng = SeededStream(17, 0).generator()
    pts = t_w.points()
    for trial in range(150):
        sites = {p for p in pts if rng.random() < 0.45}
        eta = SetView(sites)
        eta_r = ReflectView(eta)
        for omega, omega_r in ((HEALTHY_VIEW, HEALTHY_VIEW),
                               (INFECTED_VIEW, INFECTED_VIEW)):
            a = is_traversable(eta, t_w, omega, fr, gens, fr.alpha, W=2,
                               symmetric=True)
            b = is_traversable(eta_r, t_e, omega_r, fr, gens, fr.alpha, W=2,
                               symmetric=True)
            assert a.holds == b.holds


def test_tube_decomposition_exact(ud_family, ud_frame, fa2f, fa2f_frame):
    for fam, fr in ((ud_family, ud_frame), (fa2f, fa2f_frame)):
        gens = _gens_for(fam, fr)
        W = 2
        d = Droplet(fr, [3, 3, 3, 3])
        tube = Tube(d, 0, 4)
        rng = SeededStream(23, 0).generator()
        pts = tube.points()
        for trial in range(400):
            sites = {p for p in pts if rng.random() < rng.uniform(0.1, 0.7)}
            eta = SetView(sites)
            omega = HEALTHY_VIEW if trial % 2 else INFECTED_VIEW
            whole = is_traversable(eta, tube, omega, fr, gens, fr.alpha, W)
            s = 1 + trial % 3
            t1, t2 = tube.split(s)
            part2 = is_traversable(eta, t2, omega, fr, gens, fr.alpha, W)
            omega1 = RegionView(eta, t2.contains, omega)
            part1 = is_traversable(eta, t1, omega1, fr, gens, fr.alpha, W)
            assert whole.holds == (part1.holds and part2.holds)


def test_boundary_change_witness(ud_family, ud_frame):
    """With the planted runs, outcomes under the two extreme boundaries
    coincide; monotonicity in the boundary brackets every other boundary.

    The zoo generators sit on the boundary line and never read past the
    tube, so a generator with a depth-1 site drives the boundary reads here.
    """
    from kcmlab.bootstrap import HelpingGenerator

    fr = ud_frame
    i_w = fr.directions.index(Direction(-1, 0))
    i_e = fr.directions.index(Direction(1, 0))
    gens = {
        i_w: HelpingGenerator(Direction(-1, 0), Z=((0, 0), (-1, 1)), x=(0, 1), Q=1),
        i_e: HelpingGenerator(Direction(1, 0), Z=((0, 0), (1, 1)), x=(0, 1), Q=1),
    }
    d = Droplet(fr, [3, 3, 3, 3])
    tube = Tube(d, i_w, 3)
    plant = set(boundary_witness_sites(tube, fr, gens, W=4))
    assert plant
    rng = SeededStream(29, 0).generator()
    pts = tube.points()
    diffs = 0
    for trial in range(300):
        sites = {p for p in pts if rng.random() < 0.35} | plant
        eta = SetView(sites)
        a = is_traversable(eta, tube, HEALTHY_VIEW, fr, gens, fr.alpha, W=4)
        b = is_traversable(eta, tube, INFECTED_VIEW, fr, gens, fr.alpha, W=4)
        assert a.holds == b.holds
        # without the plant the two boundaries genuinely differ sometimes
        eta2 = SetView({p for p in pts if rng.random() < 0.35})
        a2 = is_traversable(eta2, tube, HEALTHY_VIEW, fr, gens, fr.alpha, W=4)
        b2 = is_traversable(eta2, tube, INFECTED_VIEW, fr, gens, fr.alpha, W=4)
        diffs += a2.holds != b2.holds
    assert diffs > 0


# ---------------------------------------------------------------------------
# towers
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def iso_tower(fa2f, fa2f_frame):
    sch = desk_schedule(0.4, 1, W=1)
    return build_tower("iso", fa2f, fa2f_frame, sch, 0.4,
                       base_half_width=1, rounds=2)


@pytest.fixture(scope="module")
def meso_tower(ud_family, ud_frame):
    sch = desk_schedule(0.4, 1, W=2)
    return build_tower("unbalanced_meso", ud_family, ud_frame, sch, 0.4,
                       base_half_width=3, length_cap=8)


def test_sg_full_infection_all_levels(iso_tower, meso_tower):
    for tower in (iso_tower, meso_tower):
        for lvl in range(tower.levels + 1):
            assert sg_check(INFECTED_VIEW, tower, lvl).holds


def test_sg_base_only(iso_tower):
    base_view = SetView(iso_tower.base.points())
    assert sg_check(base_view, iso_tower, 0).holds
    assert not sg_check(base_view, iso_tower, 1).holds
    # adding infections preserves the base event
    more = SetView(set(iso_tower.base.points()) | {(40, 40)})
    assert sg_check(more, iso_tower, 0).holds


def test_sg_constructive_offset_witness(fa2f, fa2f_frame):
    """Plant the core at a chosen offset inside one offset-extension step and
    helping sets on every flanking segment; the witness names the offset and
    removing the core breaks the event."""
    sch = desk_schedule(0.4, 1, W=1)
    tower = build_tower("iso", fa2f, fa2f_frame, sch, 0.4,
                        base_half_width=1, rounds=1)
    step = tower.steps[0]
    w_i = tower.frame.w(step.direction_index)
    off = 1
    shift = (off * w_i[0], off * w_i[1])
    sites = {(p[0] + shift[0], p[1] + shift[1]) for p in tower.base.points()}
    # helping singletons on every segment of both flanking tubes
    fwd = Tube(tower.base.translate(shift), step.direction_index,
               step.steps - off)
    bwd = Tube(tower.base.translate(shift),
               (step.direction_index + 2 * tower.frame.k) % tower.frame.size,
               off)
    for t in (fwd, bwd):
        for seg in t.all_segments():
            sites.add(seg.sites[len(seg.sites) // 2])
    out = sg_check(SetView(sites), tower, 1)
    assert out.holds and out.witness["cbsep_offsets"][1] == off
    broken = sites - {(p[0] + shift[0], p[1] + shift[1]) for p in tower.base.points()}
    assert not sg_check(SetView(broken), tower, 1).holds


def test_sg_translation_invariance(iso_tower, fa2f, fa2f_frame):
    from kcmlab.events import TowerSpec

    rng = SeededStream(31, 0).generator()
    top = iso_tower.top()
    x_lo, x_hi, y_lo, y_hi = top.bbox()
    shift = (7, -3)
    moved = TowerSpec(fa2f_frame, iso_tower.base.translate(shift),
                      iso_tower.steps, iso_tower.gens, iso_tower.alpha,
                      iso_tower.W, trim=iso_tower.trim)
    for trial in range(60):
        sites = set()
        for p in top.points():
            if rng.random() < 0.5:
                sites.add(p)
        for p in iso_tower.base.points():
            if rng.random() < 0.9:
                sites.add(p)
        a = sg_check(SetView(sites), iso_tower)
        shifted = {(p[0] + shift[0], p[1] + shift[1]) for p in sites}
        b = sg_check(SetView(shifted), moved)
        assert a.holds == b.holds


def test_sg_monotone_flips(iso_tower, meso_tower):
    rng = SeededStream(37, 0).generator()
    for tower in (iso_tower, meso_tower):
        top = tower.top()
        pts = top.points()
        for chain in range(20):
            sites = {p for p in pts if rng.random() < 0.55}
            cur = sg_check(SetView(sites), tower).holds
            healthy = [p for p in pts if p not in sites]
            rng.shuffle(healthy)
            for p in healthy[:25]:
                sites.add(p)
                new = sg_check(SetView(sites), tower).holds
                assert not (cur and not new)       # decreasing event
                cur = new


def test_sample_sg_and_closure_fills(fa2f, iso_tower, ud_family, meso_tower):
    st = SeededStream(41, 0)
    for fam, tower, n in ((fa2f, iso_tower, 30), (ud_family, meso_tower, 30)):
        top = tower.top()
        x_lo, x_hi, y_lo, y_hi = top.bbox()
        for i in range(n):
            cfg, _ = sample_sg(tower, 0.4, st.substream(i))
            res = closure(fam, cfg)
            assert all(res.final.infected(s) for s in top.points())


def test_box_events_cases(fa2f, fa2f_frame):
    sch = desk_schedule(0.4, 1, W=1)
    tower = build_tower("iso", fa2f, fa2f_frame, sch, 0.4,
                        base_half_width=1, rounds=1)
    box = Window(-7, 7, -7, 7)
    full = Configuration(box, Boundary.all_healthy(), box.sites())
    r = box_events(full, box, tower, eps_len=5)
    assert r["good"] and r["super_good"]
    empty = Configuration(box, Boundary.all_healthy())
    r = box_events(empty, box, tower, eps_len=5)
    assert not r["good"] and not r["super_good"]
    # runs of two on every fourth line in both directions: good, but no
    # fully infected base square anywhere
    grid = Configuration(box, Boundary.all_healthy())
    for x in range(-7, 8):
        for y in range(-7, 8):
            if x % 4 in (0, 1) or y % 4 in (0, 1):
                grid.set_infected((x, y), True)
    r = box_events(grid, box, tower, eps_len=5)
    assert r["good"] and not r["super_good"]


# ---------------------------------------------------------------------------
# probability, correlation inequalities
# ---------------------------------------------------------------------------

def test_diagonal_frame_tower_end_to_end():
    """A family with only diagonal stable directions produces a k=2 frame
    (the four axes join through the quarter-turn closure of the witness
    midpoint); towers over it build, sample and closure-fill."""
    from itertools import combinations

    from kcmlab.bootstrap import min_w
    from kcmlab.family import UpdateFamily, classify, quasi_stable_frame

    diag = UpdateFamily(
        "two_of_diagonals",
        [list(c) for c in combinations([(1, 1), (-1, 1), (1, -1), (-1, -1)], 2)],
    )
    rep = classify(diag)
    assert rep.refined == "g_isotropic" and rep.alpha == 1
    fr = quasi_stable_frame(diag, rep)
    assert fr.k == 2
    assert set(fr.directions) == {
        Direction.of(a, b)
        for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)
    }
    per, W = min_w(diag, fr, cap=8)
    assert W == 1
    sch = desk_schedule(0.5, 1, W=W)
    tower = build_tower("iso", diag, fr, sch, 0.5, base_half_width=2,
                        rounds=1, length_cap=8)
    st = SeededStream(99, 5)
    top_pts = tower.top().points()
    for i in range(20):
        cfg, _ = sample_sg(tower, 0.5, st.substream(i), max_tries=500000)
        res = closure(diag, cfg)
        assert all(res.final.infected(s) for s in top_pts)


def test_w_run_dp_against_enumeration():
    """Exhaustive check of the run DP on all configurations of short lines."""
    for n, W, d in ((6, 2, 0), (7, 3, 1), (5, 1, 0)):
        for q in (0.3, 0.5):
            p = 0.0
            for mask in range(1 << n):
                bits = [(mask >> i) & 1 for i in range(n)]
                k = sum(bits)
                run = 0
                hit = False
                for i, b in enumerate(bits):
                    run = run + 1 if b else 0
                    if run >= W and i - W + 1 >= d and n - 1 - i >= d:
                        hit = True
                if hit:
                    p += q ** k * (1 - q) ** (n - k)
            assert w_run_probability(n, W, q, d) == pytest.approx(p, abs=1e-12)


def test_w_run_probability_vs_mc():
    seg = _line_segment(30)
    est = estimate_probability(
        lambda c: has_w_helping(c, seg, 2), Window(0, 29, 0, 0), 0.3, 20000,
        SeededStream(43, 0),
    )
    oracle = w_run_probability(30, 2, 0.3)
    half = (est.ci_high - est.ci_low) / 2
    assert abs(est.p_hat - oracle) <= 3 * half
    assert oracle >= w_helping_lower_bound(30, 2, 0.3)


def test_sg_base_probability_is_q_to_size(fa2f, fa2f_frame):
    """A stepless tower's event is just the fully infected base, so its
    probability under the product measure is q^(base size)."""
    sch = desk_schedule(0.5, 1, W=1)
    tower = build_tower("iso", fa2f, fa2f_frame, sch, 0.5,
                        base_half_width=1, rounds=0)
    assert tower.levels == 0 and len(tower.base_event_sites()) == 9
    x_lo, x_hi, y_lo, y_hi = tower.top().bbox()
    est = estimate_probability(
        lambda c: sg_check(c, tower).holds,
        Window(x_lo, x_hi, y_lo, y_hi), 0.5, 20000, SeededStream(53, 0),
    )
    assert est.ci_low <= 0.5 ** 9 <= est.ci_high


def test_estimate_probability_degenerate():
    seg = _line_segment(30)
    est = estimate_probability(lambda c: has_w_helping(c, seg, 2),
                               Window(0, 29, 0, 0), 1.0, 100, SeededStream(1, 1))
    assert est.p_hat == 1.0
    est = estimate_probability(lambda c: has_w_helping(c, seg, 1),
                               Window(0, 29, 0, 0), 0.0, 100, SeededStream(1, 2))
    assert est.p_hat == 0.0


def test_harris_positive_pair():
    segs = [_line_segment(12), ]
    seg2 = Segment(direction_index=1, level=1,
                   sites=tuple((x, 1) for x in range(12)),
                   span_lo=0, span_hi=11, norm_sq=1)
    res = harris_check(
        lambda c: has_w_helping(c, segs[0], 2),
        lambda c: has_w_helping(c, seg2, 2),
        Window(0, 11, 0, 1), 0.3, 4000, SeededStream(47, 0),
    )
    assert res["gap"] >= -4 * res["se"]


def test_bk_exact_small_window():
    win = Window(0, 2, 0, 2)
    row = lambda y: Segment(1, y, tuple((x, y) for x in range(3)), 0, 2, 1)
    col = lambda x: Segment(2, x, tuple((x, y) for y in range(3)), 0, 2, 1)
    pairs = [
        (lambda c: has_w_helping(c, row(0), 2), lambda c: has_w_helping(c, row(2), 2)),
        (lambda c: has_w_helping(c, row(0), 2), lambda c: has_w_helping(c, col(0), 2)),
        (lambda c: has_w_helping(c, row(1), 3), lambda c: has_w_helping(c, col(1), 2)),
        (lambda c: c.infected((1, 1)), lambda c: has_w_helping(c, row(1), 2)),
        (lambda c: c.count_infected() >= 3, lambda c: has_w_helping(c, col(2), 2)),
    ]
    for q in (Fraction(3, 10), Fraction(1, 2)):
        for a, b in pairs:
            res = bk_disjoint_check(a, b, win, q)
            assert res["holds"], res
