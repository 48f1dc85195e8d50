"""Trapezoidalization engine: partition property and point location."""

import numpy as np
import pytest

from shallowcut import Bbox, bisector_arcs, rng_for
from shallowcut._sweep import BOT, TOP, arc_crossings, trapezoidalize
from shallowcut.surfaces import Arc, SurfaceSet, FAMILY_CONE

BB = Bbox(-3, 3, -3, 3)


def line_arc(i, j, m, q, x0=BB.x0, x1=BB.x1):
    return Arc(i, j, "line", "line", x0, x1, m=m, q=q)


def test_no_arcs_single_trapezoid():
    d = trapezoidalize([], BB)
    assert len(d) == 1
    assert d.x0[0] == BB.x0 and d.x1[0] == BB.x1
    assert d.bot[0] == BOT and d.top[0] == TOP


def test_single_vertical_line_two_trapezoids():
    arcs = [Arc(0, 1, "vline", "vline", 0.0, 0.0)]
    d = trapezoidalize(arcs, BB)
    assert len(d) == 2
    assert sorted([(d.x0[i], d.x1[i]) for i in range(2)]) == [(-3.0, 0.0), (0.0, 3.0)]


def test_single_horizontal_arc_two_trapezoids():
    d = trapezoidalize([line_arc(0, 1, 0.0, 0.5)], BB)
    assert len(d) == 2
    keys = sorted((int(d.bot[i]), int(d.top[i])) for i in range(2))
    assert keys == [(BOT, 0), (0, TOP)]


def test_crossing_lines_four_trapezoids():
    # two lines crossing at origin split the box into 4 merged trapezoids:
    # below both, above both, and left/right wedges between them
    arcs = [line_arc(0, 1, 1.0, 0.0), line_arc(0, 2, -1.0, 0.0)]
    d = trapezoidalize(arcs, BB)
    assert len(d) == 6  # each wedge splits at the crossing wall: 2+2+1+1
    # partition check on a grid
    _assert_partition(d, seed=1)


def _assert_partition(d, seed, m=4000):
    rng = rng_for(seed)
    pts = d.bbox.sample(rng, m)
    for (x, y) in pts:
        hits = [i for i in range(len(d)) if d.contains(i, x, y)]
        assert len(hits) == 1, f"point ({x},{y}) in {len(hits)} cells"
    return pts


def test_partition_random_lines():
    rng = rng_for(7)
    arcs = []
    for i in range(12):
        m = rng.uniform(-2, 2)
        q = rng.uniform(-1, 1)
        arcs.append(line_arc(2 * i, 2 * i + 1, m, q))
    d = trapezoidalize(arcs, BB, build_locator=True)
    pts = _assert_partition(d, seed=8)
    # locator agrees with the linear scan
    for (x, y) in pts[:500]:
        c = d.locator.locate(x, y)
        assert d.contains(c, x, y)


def test_partition_random_segments():
    rng = rng_for17 = rng_for(17)
    arcs = []
    for i in range(30):
        m = rng_for17.uniform(-2, 2)
        q = rng_for17.uniform(-1.5, 1.5)
        x0 = rng_for17.uniform(BB.x0, BB.x1 - 0.5)
        x1 = rng_for17.uniform(x0 + 0.2, BB.x1)
        arcs.append(line_arc(2 * i, 2 * i + 1, m, q, x0, x1))
    d = trapezoidalize(arcs, BB, build_locator=True)
    pts = _assert_partition(d, seed=18)
    for (x, y) in pts[:500]:
        assert d.contains(d.locator.locate(x, y), x, y)


def test_partition_cone_bisectors():
    rng = rng_for(23)
    c = np.column_stack([rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8), rng.uniform(0, 0.3, 8)])
    fs = SurfaceSet(FAMILY_CONE, c.tolist())
    arcs = []
    for i in range(8):
        for j in range(i + 1, 8):
            arcs.extend(bisector_arcs(fs.surface(i), fs.surface(j), fs.bbox, fs.tol))
    d = trapezoidalize(arcs, fs.bbox, build_locator=True)
    rngp = rng_for(24)
    pts = fs.bbox.sample(rngp, 2500)
    for (x, y) in pts:
        hits = [i for i in range(len(d)) if d.contains(i, x, y)]
        assert len(hits) == 1
        assert d.contains(d.locator.locate(x, y), x, y)


def test_crossings_exact_for_lines():
    a = line_arc(0, 1, 1.0, 0.0)
    b = line_arc(2, 3, -1.0, 1.0)
    got = arc_crossings([a, b], BB)
    assert len(got) == 1
    assert got[0][0] == pytest.approx(0.5)


def test_segment_wall_splits_overlapping_gap():
    d = trapezoidalize([line_arc(0, 1, 0.0, 2.0)], BB,
                       segment_walls=[(0.0, -1.0, 1.0)])
    # wall below the arc splits the lower gap but not the upper one
    lower = [(float(d.x0[i]), float(d.x1[i])) for i in range(len(d)) if d.bot[i] == BOT]
    upper = [(float(d.x0[i]), float(d.x1[i])) for i in range(len(d)) if d.bot[i] != BOT]
    assert sorted(lower) == [(-3.0, 0.0), (0.0, 3.0)]
    assert upper == [(-3.0, 3.0)]


def test_witness_inside_cell():
    rng = rng_for(31)
    arcs = [line_arc(2 * i, 2 * i + 1, rng.uniform(-1, 1), rng.uniform(-1, 1))
            for i in range(6)]
    d = trapezoidalize(arcs, BB)
    for i in range(len(d)):
        x, y = d.witness(i)
        assert d.contains(i, x, y)
