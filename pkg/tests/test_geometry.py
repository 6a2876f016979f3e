import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfhnav.geometry import (
    CircularSegment,
    Configuration,
    DegenerateChord,
    Disc,
    EmptyTrajectory,
    Ray,
    Region,
    Stadium,
    circle_through_three_points,
    ray_region_distances,
    ray_region_distances_batch,
    reflect_across_chord,
    swept_corridor,
    wrap_angle,
)
from oracles import march, member, random_region

coords = st.floats(-10, 10, allow_nan=False)


def C(x, y, psi=0.0):
    return Configuration(x, y, psi)


class TestConfiguration:
    def test_heading_wrapped_half_open(self):
        assert C(0, 0, -math.pi).psi == pytest.approx(math.pi)
        assert C(0, 0, 3 * math.pi).psi == pytest.approx(math.pi)
        assert C(0, 0, 0.5 + 4 * math.pi).psi == pytest.approx(0.5)

    @given(st.floats(-100, 100))
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            C(float("nan"), 0)


class TestReflect:
    def test_across_x_axis(self):
        assert reflect_across_chord(C(0, 0), C(2, 0), C(1, 0.4)) == pytest.approx((1, -0.4))

    def test_fixed_point(self):
        assert reflect_across_chord(C(0, 0), C(2, 0), C(1, 0)) == pytest.approx((1, 0))

    def test_across_y_axis(self):
        assert reflect_across_chord(C(0, 0), C(0, 2), C(0.3, 1)) == pytest.approx((-0.3, 1))

    def test_degenerate(self):
        with pytest.raises(DegenerateChord):
            reflect_across_chord(C(1, 1), C(1, 1), C(0, 0))

    @given(coords, coords, coords, coords, coords, coords)
    def test_involution(self, ax, ay, bx, by, mx, my):
        if math.hypot(bx - ax, by - ay) < 1e-3:
            return
        once = reflect_across_chord(C(ax, ay), C(bx, by), C(mx, my))
        twice = reflect_across_chord(C(ax, ay), C(bx, by), C(*once))
        assert twice == pytest.approx((mx, my), abs=1e-12 * max(1.0, abs(mx), abs(my), abs(ax), abs(ay)) * 10)


class TestCircle:
    def test_derived_example(self):
        # perpendicular bisector of (0,0)-(2,0) is x=1; equal distance to
        # (0,0) and (1,-0.4): 1 + k^2 = (k + 0.4)^2  ->  k = 1.05
        (cx, cy), r = circle_through_three_points((0, 0), (1, -0.4), (2, 0))
        assert (cx, cy) == pytest.approx((1.0, 1.05))
        assert r == pytest.approx(1.45)
        for p in [(0, 0), (1, -0.4), (2, 0)]:
            assert math.hypot(p[0] - cx, p[1] - cy) == pytest.approx(1.45, abs=1e-12)

    def test_collinear(self):
        assert circle_through_three_points((0, 0), (1, 0), (2, 0)) is None

    def test_right_triangle(self):
        (cx, cy), r = circle_through_three_points((0, 0), (0, 2), (2, 0))
        assert (cx, cy) == pytest.approx((1, 1))
        assert r == pytest.approx(math.sqrt(2))

    @given(st.lists(st.tuples(coords, coords), min_size=3, max_size=3))
    def test_equidistant(self, pts):
        out = circle_through_three_points(*pts)
        if out is None:
            return
        (cx, cy), r = out
        if r > 1e6:
            return
        for p in pts:
            assert math.hypot(p[0] - cx, p[1] - cy) == pytest.approx(r, abs=1e-9 * max(1.0, r))

    def test_mirror_equivariance(self):
        a, b, c = (0.1, 0.3), (1.2, -0.5), (2.0, 0.7)
        (cx, cy), r = circle_through_three_points(a, b, c)
        (mx, my), mr = circle_through_three_points(*[(p[0], -p[1]) for p in (a, b, c)])
        assert (mx, my) == pytest.approx((cx, -cy), abs=1e-12)
        assert mr == pytest.approx(r, abs=1e-12)


class TestCorridor:
    def test_single_point(self):
        assert swept_corridor([C(0, 0)], 0.25) == Region((Disc((0.0, 0.0), 0.25),))

    def test_straight(self):
        assert swept_corridor([C(0, 0), C(2, 0)], 0.25) == Region((Stadium((0.0, 0.0), (2.0, 0.0), 0.25),))

    def test_l_shape_corner(self):
        reg = swept_corridor([C(0, 0), C(1, 0), C(1, 1)], 0.25)
        assert len(reg) == 2
        corner = np.array([[1.2, -0.0], [1.0 + 0.2 / math.sqrt(2), -0.2 / math.sqrt(2)]])
        assert member(reg, corner).all()
        assert reg.contains(corner).all()
        assert not reg.contains(np.array([[1.3, -0.3]]))[0]

    def test_empty(self):
        with pytest.raises(EmptyTrajectory):
            swept_corridor([], 0.25)

    def test_membership_property(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            traj = np.cumsum(rng.normal(0, 0.2, (12, 2)), axis=0)
            reg = swept_corridor(traj, 0.25)
            assert reg.contains(traj).all()
            pts = rng.uniform(traj.min(0) - 1, traj.max(0) + 1, (500, 2))
            seg_d = np.full(len(pts), np.inf)
            for a, b in zip(traj[:-1], traj[1:]):
                t = np.clip(((pts - a) @ (b - a)) / ((b - a) @ (b - a)), 0, 1)
                seg_d = np.minimum(seg_d, np.hypot(*(pts - a - t[:, None] * (b - a)).T))
            far = seg_d > 0.25 + 1e-9
            assert not reg.contains(pts[far]).any()
            assert reg.contains(pts[seg_d < 0.25 - 1e-9]).all()

    def test_mirror(self):
        traj = [C(0, 0), C(0.5, 0.2), C(1.0, 0.7)]
        reg = swept_corridor(traj, 0.25)
        assert swept_corridor([c.mirrored() for c in traj], 0.25) == reg.mirrored()


class TestRays:
    def test_disc_ahead(self):
        first, last = ray_region_distances(Ray((0, 0), 0.0), Region((Disc((0.5, 0), 0.1),)), 1.0)
        assert first == pytest.approx(0.4)
        assert last == pytest.approx(0.6)

    def test_stadium_perpendicular(self):
        reg = Region((Stadium((0, 0), (2, 0), 0.25),))
        first, last = ray_region_distances(Ray((0, 0), math.pi / 2), reg, 1.0)
        assert first == 0.0
        assert last == pytest.approx(0.25)

    def test_stadium_thirty_degrees(self):
        reg = Region((Stadium((0, 0), (2, 0), 0.25),))
        _, last = ray_region_distances(Ray((0, 0), math.radians(30)), reg, 1.0)
        assert last == pytest.approx(0.25 / math.sin(math.radians(30)))
        _, marched = march((0, 0), math.radians(30), reg, 1.0)
        assert abs(last - marched) < 1e-3

    def test_miss(self):
        assert ray_region_distances(Ray((0, 0), math.pi), Region((Disc((0.5, 0), 0.1),)), 1.0) == (None, None)

    def test_beyond_range(self):
        assert ray_region_distances(Ray((0, 0), 0.0), Region((Disc((3, 0), 0.1),)), 1.0) == (None, None)

    def test_segment_chord_hit(self):
        # lower segment of the circle through (0,0),(1,-0.4),(2,0)
        seg = CircularSegment((1.0, 1.05), 1.45, (0.0, 0.0), (2.0, 0.0), -1)
        first, last = ray_region_distances(Ray((1, 0.4), -math.pi / 2), Region((seg,)), 1.0)
        assert first == pytest.approx(0.4)
        assert last == pytest.approx(0.8)

    def test_empty_region(self):
        f, l = ray_region_distances_batch((0, 0), np.zeros(3), Region(), 1.0)
        assert np.isnan(f).all() and np.isnan(l).all()

    def test_marching_oracle_random(self):
        rng = np.random.default_rng(11)
        for _ in range(150):
            reg = random_region(rng)
            o = tuple(rng.uniform(-1.5, 1.5, 2))
            ang = float(rng.uniform(-math.pi, math.pi))
            mr = float(rng.uniform(0.5, 2.5))
            first, last = ray_region_distances(Ray(o, ang), reg, mr)
            mf, ml = march(o, ang, reg, mr)
            if mf is None:
                assert first is None or last - first < 1e-3
                continue
            assert first is not None and last is not None
            assert first <= last
            assert abs(first - mf) < 1e-3
            assert abs(last - ml) < 1e-3
