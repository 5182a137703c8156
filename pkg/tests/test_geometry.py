import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sniffy.geometry import (
    Ray,
    Segment,
    Vec2,
    cast_lasers,
    move_crosses_wall,
    ray_segment_distance,
    raycast,
    rotate,
    segments_intersect,
    walls_to_array,
)

from oracles import march, random_scene

coord = st.floats(-10, 10, allow_nan=False)


def test_perpendicular_hit():
    r = Ray(Vec2(0, 0), Vec2(1, 0), 4.0)
    assert ray_segment_distance(r, Segment(Vec2(2, -1), Vec2(2, 1))) == 2.0


def test_beyond_range_is_absent():
    r = Ray(Vec2(0, 0), Vec2(1, 0), 4.0)
    assert ray_segment_distance(r, Segment(Vec2(5, -1), Vec2(5, 1))) is None


def test_oblique_hit_hand_solved():
    # x = 0.6 t = 3  ->  t = 5, y = 4 lies on the segment
    r = Ray(Vec2(0, 0), Vec2(0.6, 0.8), 10.0)
    assert ray_segment_distance(r, Segment(Vec2(3, 0), Vec2(3, 10))) == pytest.approx(5.0, abs=1e-12)


def test_raycast_empty_saturates():
    assert raycast(Ray(Vec2(0, 0), Vec2(1, 0), 4.0), []) == 4.0


def test_raycast_nearest_wins():
    segs = [Segment(Vec2(2, -1), Vec2(2, 1)), Segment(Vec2(1, -1), Vec2(1, 1))]
    assert raycast(Ray(Vec2(0, 0), Vec2(1, 0), 4.0), segs) == 1.0


def test_collinear_overlap_reports_nearest_endpoint():
    r = Ray(Vec2(0, 0), Vec2(1, 0), 4.0)
    assert ray_segment_distance(r, Segment(Vec2(1.5, 0), Vec2(3, 0))) == 1.5
    assert ray_segment_distance(r, Segment(Vec2(-1, 0), Vec2(3, 0))) == 0.0
    assert ray_segment_distance(r, Segment(Vec2(-3, 0), Vec2(-1, 0))) is None


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray(Vec2(0, 0), Vec2(1, 1), 4.0)
    with pytest.raises(ValueError):
        Ray(Vec2(0, 0), Vec2(1, 0), 0.0)
    with pytest.raises(ValueError):
        Segment(Vec2(1, 1), Vec2(1, 1))


def test_rotate_examples():
    v = rotate(Vec2(1, 0), math.pi / 2)
    assert v.x == pytest.approx(0.0, abs=1e-15) and v.y == pytest.approx(1.0)
    assert rotate(Vec2(0, 0), 1.234) == Vec2(0.0, 0.0)


@given(coord, coord, st.floats(-20, 20))
def test_rotate_inverse_and_norm(x, y, a):
    v = Vec2(x, y)
    back = rotate(rotate(v, a), -a)
    assert back.x == pytest.approx(x, abs=1e-12) and back.y == pytest.approx(y, abs=1e-12)
    assert rotate(v, a).norm() == pytest.approx(v.norm(), abs=1e-12)


def test_raycast_matches_marching_oracle_small():
    rng = np.random.default_rng(7)
    for _ in range(10):
        segs = random_scene(rng)
        o = rng.uniform(2, 8, 2)
        ang = rng.uniform(0, 2 * np.pi)
        d = (math.cos(ang), math.sin(ang))
        got = raycast(Ray(Vec2(*o), Vec2(*d), 4.0), segs)
        ref = march(o, d, [((s.a.x, s.a.y), (s.b.x, s.b.y)) for s in segs], 4.0)
        assert abs(got - ref) <= 1e-3


@given(st.lists(st.tuples(coord, coord, coord, coord), max_size=8), st.floats(0, 2 * math.pi))
def test_raycast_bounded_and_monotone(raw, ang):
    segs = [Segment(Vec2(a, b), Vec2(c, d)) for a, b, c, d in raw if (a, b) != (c, d)]
    ray = Ray(Vec2(0.5, 0.25), Vec2(math.cos(ang), math.sin(ang)), 4.0)
    prev = raycast(ray, [])
    assert prev == 4.0
    for k in range(len(segs)):
        cur = raycast(ray, segs[:k + 1])
        assert 0.0 <= cur <= 4.0
        assert cur <= prev
        prev = cur


def test_cast_lasers_axes():
    # a 4 x 2 box around (1, 0.5): +x 3, +y 1.5, -x 1, -y 0.5
    walls = walls_to_array([
        Segment(Vec2(0, 0), Vec2(4, 0)), Segment(Vec2(4, 0), Vec2(4, 2)),
        Segment(Vec2(4, 2), Vec2(0, 2)), Segment(Vec2(0, 2), Vec2(0, 0)),
    ])
    assert cast_lasers(1.0, 0.5, walls, 4.0) == pytest.approx([3.0, 1.5, 1.0, 0.5])
    assert cast_lasers(1.0, 0.5, walls, 2.0) == pytest.approx([2.0, 1.5, 1.0, 0.5])


def test_cast_lasers_agrees_with_raycast():
    rng = np.random.default_rng(3)
    segs = random_scene(rng)
    walls = walls_to_array(segs)
    axes = [Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0), Vec2(0, -1)]
    for _ in range(50):
        x, y = rng.uniform(0, 10, 2)
        got = cast_lasers(x, y, walls, 4.0)
        ref = [raycast(Ray(Vec2(x, y), a, 4.0), segs) for a in axes]
        assert got == pytest.approx(ref, abs=1e-12)


def test_move_crossing():
    walls = walls_to_array([Segment(Vec2(1, -1), Vec2(1, 1))])
    assert move_crosses_wall(0.0, 0.0, 2.0, 0.0, walls)
    assert not move_crosses_wall(0.0, 0.0, 0.9, 0.0, walls)
    assert not move_crosses_wall(0.0, 2.0, 2.0, 2.0, walls)
    assert segments_intersect(Vec2(0, 0), Vec2(2, 0), Vec2(1, -1), Vec2(1, 1))
    assert not segments_intersect(Vec2(0, 0), Vec2(0.5, 0), Vec2(1, -1), Vec2(1, 1))
