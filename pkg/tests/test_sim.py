import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lfhnav.geometry import Configuration, Disc, Region, Stadium
from lfhnav.sim import (
    Command,
    Limits,
    RobotState,
    Scan,
    SensorConfig,
    World,
    in_collision,
    integrate_unicycle,
    lidar_scan,
)
from oracles import march, random_region

WIDE = Limits(omega_max=4.0)


def state(v=0.0, w=0.0, x=0.0, y=0.0, psi=0.0):
    return RobotState(Configuration(x, y, psi), v, w)


class TestIntegrate:
    def test_straight(self):
        s = integrate_unicycle(state(1.0), Command(1.0, 0.0), 0.1)
        assert (s.pose.x, s.pose.y, s.pose.psi) == pytest.approx((0.1, 0.0, 0.0))
        assert s.t == pytest.approx(0.1)

    def test_pure_rotation(self):
        s = integrate_unicycle(state(0.0, math.pi / 2), Command(0.0, math.pi / 2), 0.1, WIDE)
        assert s.pose.psi == pytest.approx(math.pi / 20)
        assert (s.pose.x, s.pose.y) == pytest.approx((0.0, 0.0))

    def test_acceleration_clamp(self):
        s = integrate_unicycle(state(), Command(1.0, 0.0), 0.1, Limits(a_v=2.0))
        assert s.v == pytest.approx(0.2)

    def test_arc_closed_form(self):
        # quarter circle of radius 1 in pi/2 seconds at v=1, w=1
        s = state(1.0, 1.0)
        for _ in range(25):
            s = integrate_unicycle(s, Command(1.0, 1.0), math.pi / 50, WIDE)
        assert (s.pose.x, s.pose.y) == pytest.approx((1.0, 1.0), abs=1e-12)
        assert s.pose.psi == pytest.approx(math.pi / 2)

    def test_dt_range(self):
        with pytest.raises(ValueError):
            integrate_unicycle(state(), Command(0, 0), 0.2)

    @given(st.floats(-0.2, 1.0), st.floats(-1.57, 1.57), st.floats(-3, 3), st.floats(-3, 3),
           st.floats(0.001, 0.1))
    def test_clamps_and_determinism(self, v, w, vc, wc, dt):
        lim = Limits()
        s0 = state(v, w)
        a = integrate_unicycle(s0, Command(vc, wc), dt, lim)
        b = integrate_unicycle(s0, Command(vc, wc), dt, lim)
        assert a == b
        assert abs(a.v - v) <= lim.a_v * dt + 1e-12
        assert abs(a.omega - w) <= lim.a_omega * dt + 1e-12
        assert lim.v_min <= a.v <= lim.v_max
        assert abs(a.omega) <= lim.omega_max


def open_world(obstacles=Region(), bounds=(-10, -10, 10, 10)):
    c = Configuration(0, 0, 0)
    return World(bounds, obstacles, c, c)


class TestLidar:
    cfg = SensorConfig()

    def test_sensor_spec(self):
        assert self.cfg.beam_count == 720
        assert self.cfg.fov == pytest.approx(math.radians(270))
        assert self.cfg.max_range == 1.0
        ang = self.cfg.relative_angles
        assert ang[0] == pytest.approx(-self.cfg.fov / 2)
        assert ang[-1] == pytest.approx(self.cfg.fov / 2)
        assert np.allclose(np.diff(ang), self.cfg.fov / 719)

    def test_empty(self):
        scan = lidar_scan(open_world(), Configuration(0, 0, 0))
        assert np.all(scan.ranges == 1.0)

    def test_disc_ahead(self):
        w = open_world(Region((Disc((0.5, 0), 0.1),)))
        scan = lidar_scan(w, Configuration(0, 0, 0), SensorConfig(beam_count=721))
        assert scan.ranges[360] == pytest.approx(0.4)
        f, _ = march((0, 0), 0.0, w.obstacles, 1.0)
        assert abs(scan.ranges[360] - f) < 1e-3

    def test_disc_behind(self):
        w = open_world(Region((Disc((-0.5, 0), 0.1),)))
        assert np.all(lidar_scan(w, Configuration(0, 0, 0)).ranges == 1.0)

    def test_walls(self):
        w = open_world(bounds=(-1, -0.5, 1, 0.5))
        scan = lidar_scan(w, Configuration(0, 0, 0), SensorConfig(beam_count=3, fov=math.pi))
        assert scan.ranges == pytest.approx([0.5, 1.0, 0.5])

    def test_range_invariant(self):
        with pytest.raises(ValueError):
            Scan(np.ones(5), SensorConfig())

    def test_monotone_in_obstacles(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            reg = random_region(rng)
            pose = Configuration(*rng.uniform(-1, 1, 2), rng.uniform(-3, 3))
            base = lidar_scan(open_world(reg), pose).ranges
            more = reg.union(Region((Disc(tuple(rng.uniform(-1.5, 1.5, 2)), 0.2),)))
            assert np.all(lidar_scan(open_world(more), pose).ranges <= base + 1e-12)

    def test_mirror_reverses_beams(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            reg = Region((Disc(tuple(rng.uniform(-1, 1, 2)), 0.2),
                          Stadium(tuple(rng.uniform(-1, 1, 2)), tuple(rng.uniform(-1, 1, 2)), 0.1)))
            w = open_world(reg, bounds=(-1.2, -0.9, 1.4, 1.1))
            pose = Configuration(0.1, 0.05, 0.3)
            a = lidar_scan(w, pose).ranges
            b = lidar_scan(w.mirrored(), pose.mirrored()).ranges
            assert np.array_equal(a, b[::-1])

    def test_marching_oracle(self):
        rng = np.random.default_rng(2)
        cfg = SensorConfig(beam_count=16)
        for _ in range(10):
            reg = random_region(rng)
            pose = Configuration(*rng.uniform(-1, 1, 2), rng.uniform(-3, 3))
            w = open_world(reg, bounds=(-2, -2, 2, 2))
            scan = lidar_scan(w, pose, cfg)

            def walls(pts):
                return (np.abs(pts[:, 0]) >= 2) | (np.abs(pts[:, 1]) >= 2)

            for ang, r in zip(cfg.beam_angles(pose.psi), scan.ranges):
                f, _ = march(pose.xy, ang, reg, 1.0, extra=walls)
                assert abs((1.0 if f is None else f) - r) < 1e-3


class TestCollision:
    def test_empty(self):
        assert not in_collision(open_world(), Configuration(0, 0, 0), 0.25)

    def test_overlap(self):
        assert in_collision(open_world(Region((Disc((0.3, 0), 0.1),))), Configuration(0, 0, 0), 0.25)

    def test_tangent_is_free(self):
        assert not in_collision(open_world(Region((Disc((0.35, 0), 0.1),))), Configuration(0, 0, 0), 0.25)

    def test_leaving_bounds(self):
        w = open_world(bounds=(-1, -1, 1, 1))
        assert in_collision(w, Configuration(0.9, 0, 0), 0.25)
        assert not in_collision(w, Configuration(0.75, 0, 0), 0.25)
