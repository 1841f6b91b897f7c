import math
from fractions import Fraction

import pytest

from kcmlab.droplets import (
    DirectionFrame,
    Droplet,
    Tube,
    desk_schedule,
    extension_vector,
)
from kcmlab.lattice import Direction, SeededStream


def octagonal_frame():
    dirs = (
        Direction(-1, 0), Direction(-1, 1), Direction(0, 1), Direction(1, 1),
        Direction(1, 0), Direction(1, -1), Direction(0, -1), Direction(-1, -1),
    )
    return DirectionFrame(dirs, (1.0,) * 8, 1.0)


def test_frame_validation():
    with pytest.raises(ValueError):
        DirectionFrame((Direction(1, 0), Direction(0, 1), Direction(-1, 0),
                        Direction(0, 1)), (1.0,) * 4, 1.0)


def test_extension_vector_axes():
    fr = DirectionFrame.axes()
    v0 = extension_vector(fr, 0)
    assert v0 == [1.0, 0.0, 0.0, 0.0]
    for i in range(4):
        vi = extension_vector(fr, i)
        assert vi[(i + 1) % 4] == 0.0 and vi[(i + 3) % 4] == 0.0


def test_extension_vector_octagonal():
    fr = octagonal_frame()
    v0 = extension_vector(fr, 0)
    c = math.sqrt(2) / 2
    assert v0[0] == pytest.approx(1.0)
    assert v0[1] == pytest.approx(c) and v0[7] == pytest.approx(c)
    assert all(v0[j] == 0.0 for j in (2, 3, 4, 5, 6))


def test_droplet_square():
    fr = DirectionFrame.axes()
    d = Droplet(fr, [2, 2, 2, 2])
    assert len(d.points()) == 25
    assert d.side_lengths() == [4.0, 4.0, 4.0, 4.0]
    assert d.symmetric_center() == (0, 0)


def test_droplet_rectangle():
    fr = DirectionFrame.axes()           # u_0 = (-1, 0)
    d = Droplet(fr, [3, 2, 2, 2])        # x >= -3
    assert len(d.points()) == 30
    assert d.bbox() == (-3, 2, -2, 2)


def test_droplet_degenerate_point():
    fr = DirectionFrame.axes()
    d = Droplet(fr, [0, 0, 0, 0])
    assert d.points() == [(0, 0)]
    assert d.side_lengths() == [0.0, 0.0, 0.0, 0.0]


def test_droplet_empty_rejected():
    fr = DirectionFrame.axes()
    with pytest.raises(ValueError):
        Droplet(fr, [-1, 0, 0, 0])


def test_droplet_symmetric_reflection():
    fr = DirectionFrame.axes()
    d = Droplet(fr, [3, 2, 3, 2])
    c = d.symmetric_center()
    assert c == (0, 0)
    pts = d.point_set()
    assert all((-x, -y) in pts for (x, y) in pts)
    # half-integer center
    d2 = Droplet(fr, [2, 2, 1, 2])
    c2 = d2.symmetric_center()
    assert c2 == (Fraction(-1, 2), 0)


def test_tube_examples():
    fr = DirectionFrame.axes()
    d = Droplet(fr, [2, 2, 2, 2])
    t = Tube(d, 0, 1)
    assert t.points() == [(-3, y) for y in range(-2, 3)]
    segs = t.segments(0)
    assert len(segs) == 1 and len(segs[0].sites) == 5
    t3 = Tube(d, 0, 3)
    assert len(t3.points()) == 15
    assert len(t3.segments(0)) == 3
    with pytest.raises(ValueError):
        Tube(d, 0, 0)
    with pytest.raises(ValueError):
        t.segments(1)


def test_tube_set_difference_and_partition_axes():
    fr = DirectionFrame.axes()
    rng = SeededStream(5, 0).generator()
    for _ in range(200):
        t_r = [int(rng.integers(1, 5)) for _ in range(4)]
        i = int(rng.integers(0, 4))
        steps = int(rng.integers(1, 5))
        d = Droplet(fr, t_r)
        tube = Tube(d, i, steps)
        pts = set(tube.points())
        assert pts == d.extend(i, steps).point_set() - d.point_set()
        segs = tube.all_segments()
        seen = set()
        for s in segs:
            for site in s.sites:
                assert site in pts
                assert site not in seen      # pairwise disjoint
                seen.add(site)
        assert seen == pts                    # exact partition for k = 1


def test_tube_partition_octagonal():
    fr = octagonal_frame()
    d = Droplet(fr, [4, 3, 4, 3, 4, 3, 4, 3])
    tube = Tube(d, 0, 2)
    pts = set(tube.points())
    seen = set()
    for s in tube.all_segments():
        for site in s.sites:
            assert site in pts and site not in seen
            seen.add(site)
    # leftovers sit along the two corner rays swept by the moving sides
    leftovers = pts - seen
    assert len(leftovers) <= 2 * (tube.steps + 2)


def test_extension_changes_only_parallel_sides():
    """Holds for nondegenerate octagons (every side of positive length)."""
    fr = octagonal_frame()
    rng = SeededStream(6, 0).generator()
    checked = 0
    while checked < 50:
        a = int(rng.integers(4, 8))
        dd = int(rng.integers(a + 1, 2 * a))
        t_r = [a, dd, a, dd, a, dd, a, dd]
        d = Droplet(fr, t_r)
        i = int(rng.integers(0, 8))
        steps = 1
        d2 = d.extend(i, steps)
        s1, s2 = d.side_lengths(), d2.side_lengths()
        if min(s2) <= 0 or min(s1) <= 0:
            continue
        k = fr.k
        for j in range(8):
            if j in ((i + k) % 8, (i - k) % 8):
                assert s2[j] == pytest.approx(s1[j] + steps * fr.lam(i), abs=1e-9)
            else:
                assert s2[j] == pytest.approx(s1[j], abs=1e-9)
        checked += 1


from hypothesis import given, settings
from hypothesis import strategies as st


@given(st.lists(st.integers(0, 6), min_size=8, max_size=8),
       st.integers(0, 7), st.integers(1, 3))
@settings(max_examples=150, deadline=None)
def test_droplet_points_and_extension_properties(t_r, i, steps):
    fr = octagonal_frame()
    try:
        d = Droplet(fr, t_r)
    except ValueError:
        return
    pts = d.point_set()
    # membership agrees with the direct inequality test on a covering box
    x_lo, x_hi, y_lo, y_hi = d.bbox()
    for x in range(x_lo - 1, x_hi + 2):
        for y in range(y_lo - 1, y_hi + 2):
            direct = all(
                x * fr.w(j)[0] + y * fr.w(j)[1] <= t_r[j] for j in range(8)
            )
            assert ((x, y) in pts) == direct
    # extension only grows the droplet
    assert pts <= d.extend(i, steps).point_set()


def test_desk_schedule_examples():
    sch = desk_schedule(0.2, 1, W=2)
    assert sch.n_crossover == 3
    assert sch.levels[:4] == [1, 2, 4, 8]
    sch2 = desk_schedule(0.1, 1, W=2)
    assert sch2.n_crossover == 4
    with pytest.raises(ValueError):
        desk_schedule(1.5, 1)


def test_desk_schedule_monotone_and_ratio():
    for q in (0.05, 0.1, 0.2, 0.3, 0.4):
        for W in (2, 3):
            sch = desk_schedule(q, 1, W=W, cap=10**7)
            lv = sch.levels
            assert all(a < b for a, b in zip(lv, lv[1:]))
            for n in range(sch.n_crossover + 1, len(lv) - 1):
                assert lv[n + 1] / lv[n] >= sch.W
