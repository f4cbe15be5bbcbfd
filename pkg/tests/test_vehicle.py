import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from racestack.errors import ConfigError, SimulationFault
from racestack.track import OccupancyGrid, Pose2D
from racestack.vehicle.dynamics import IVX, IVY, IW, CarState, advance, axle_forces, step_dynamics
from racestack.vehicle.lidar import Footprint, LidarConfig, simulate_lidar
from racestack.vehicle.params import PacejkaTire, SingleTrackParams, magic_formula
from racestack.vehicle.sensors import SensorNoise, sample_sensors

P = SingleTrackParams()


def drive(state: CarState, cmd, seconds: float, dt: float = 0.002) -> CarState:
    for _ in range(int(round(seconds / dt))):
        state = step_dynamics(state, cmd, dt, P)
    return state


def fit_circle(x, y):
    """Algebraic least-squares circle: returns (cx, cy, r)."""
    A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    b = x ** 2 + y ** 2
    cx, cy, c = np.linalg.lstsq(A, b, rcond=None)[0]
    return cx, cy, math.sqrt(c + cx ** 2 + cy ** 2)


class TestDynamics:
    def test_straight_line(self):
        s = drive(CarState(Pose2D(0, 0, 0), v_x=2.0), (2.0, 0.0), 1.0)
        assert s.pose.x == pytest.approx(2.0, abs=1e-6)
        assert s.pose.y == pytest.approx(0.0, abs=1e-12)

    def test_kinematic_limit_yaw_rate(self):
        delta = 0.05
        s = drive(CarState(Pose2D(0, 0, 0), v_x=0.5, delta=delta), (0.5, delta), 3.0)
        expected = s.v_x * math.tan(delta) / (P.l_f + P.l_r)
        assert s.yaw_rate == pytest.approx(expected, rel=0.02)

    def test_force_balance_on_steady_circle(self):
        delta = 0.08
        s = drive(CarState(Pose2D(0, 0, 0), v_x=3.0, delta=delta), (3.0, delta), 4.0)
        xs, ys = [], []
        for _ in range(500):
            s = step_dynamics(s, (3.0, delta), 0.002, P)
            xs.append(s.pose.x)
            ys.append(s.pose.y)
        _, _, r = fit_circle(np.array(xs), np.array(ys))
        speed = math.hypot(s.v_x, s.v_y)
        a_measured = s.v_x * speed / r
        F_f, F_r, _, _ = axle_forces(s.to_array(), P.as_array())
        a_forces = (F_r + F_f * math.cos(s.delta)) / P.m
        assert a_measured == pytest.approx(a_forces, rel=0.02)

    def test_nan_is_a_fault(self):
        with pytest.raises(SimulationFault):
            step_dynamics(CarState(Pose2D(0, 0, 0), v_x=1.0), (float("nan"), 0.0), 0.002, P)

    def test_dt_range(self):
        with pytest.raises(ValueError):
            step_dynamics(CarState(Pose2D(0, 0, 0)), (1.0, 0.0), 0.01, P)

    def test_steering_limit(self):
        s = drive(CarState(Pose2D(0, 0, 0), v_x=1.0), (1.0, 2.0), 1.0)
        assert abs(s.delta) <= P.delta_max + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.6, 6.0), st.floats(-0.3, 0.3))
    def test_speed_non_increasing_without_drive(self, v0, delta):
        x = np.array([0, 0, 0, v0, 0, 0, delta], float)
        p = P.as_array()
        speed = v0
        for _ in range(300):
            x = advance(x, np.array([0.0, delta]), 0.002, 0.002, p)
            sp = math.hypot(x[IVX], x[IVY])
            assert sp <= speed + 1e-9
            speed = sp

    def test_deterministic(self):
        a = drive(CarState(Pose2D(0, 0, 0.3), v_x=2.0), (4.0, 0.2), 1.0)
        b = drive(CarState(Pose2D(0, 0, 0.3), v_x=2.0), (4.0, 0.2), 1.0)
        assert a == b


class TestParams:
    @given(st.floats(-1.0, 1.0))
    def test_pacejka_odd(self, alpha):
        t = P.tire_rear
        assert t.force(-alpha) == -t.force(alpha)

    def test_pacejka_formula(self):
        B, C, D, E, a = 10.0, 1.4, 15.0, 0.3, 0.07
        ba = B * a
        expected = D * math.sin(C * math.atan(ba - E * (ba - math.atan(ba))))
        assert magic_formula(a, B, C, D, E) == pytest.approx(expected, rel=1e-14)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            PacejkaTire(0.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            SingleTrackParams(mu_scale=2.0)
        with pytest.raises(ConfigError):
            SingleTrackParams.from_dict({"wheels": 4})

    def test_dict_round_trip(self):
        assert SingleTrackParams.from_dict(P.to_dict()) == P


class TestLidar:
    def test_empty_world(self):
        scan = simulate_lidar(None, [], Pose2D(0, 0, 0), LidarConfig(sigma=0.0))
        assert np.all(scan.ranges == scan.range_max)
        assert scan.n == round((scan.angle_max - scan.angle_min) / scan.increment) + 1

    def test_wall_ahead(self):
        res = 0.05
        free = np.ones((100, 200), bool)
        free[:, 160:] = False  # wall face at x = 8.0 - 5.0 = 3.0 m from the sensor
        grid = OccupancyGrid.from_free_mask(free, res, Pose2D(-5.0, -2.5, 0.0))
        scan = simulate_lidar(grid, [], Pose2D(0.0, 0.0, 0.0), LidarConfig(sigma=0.0))
        fwd = scan.ranges[scan.n // 2]
        assert abs(fwd - 3.0) <= res / 2

    def test_opponent_box(self):
        cfg = LidarConfig(sigma=0.0)
        scan = simulate_lidar(None, [Footprint(Pose2D(2.0, 0.0, 0.0), 0.5, 0.3)], Pose2D(0, 0, 0), cfg)
        hit = np.nonzero(scan.ranges < cfg.range_max)[0]
        assert np.all(np.diff(hit) == 1)
        inc = scan.increment
        lo = 2 * math.atan(0.15 / 2.25) / inc - 1
        hi = 2 * math.atan(0.15 / 1.75) / inc + 1
        assert lo <= hit.size <= hi
        assert abs(hit.size - 2 * math.atan(0.15 / 2.0) / inc) <= 0.15 * hit.size
        assert np.all((scan.ranges[hit] >= 1.75 - 1e-9) & (scan.ranges[hit] <= 1.75 / math.cos(0.09)))

    def test_inside_wall_is_degenerate(self):
        res = 0.05
        free = np.zeros((20, 20), bool)
        grid = OccupancyGrid.from_free_mask(free, res)
        scan = simulate_lidar(grid, [], Pose2D(0.5, 0.5, 0.0))
        assert np.all(scan.ranges == 0.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_per_cell_oracle(self, seed):
        rng = np.random.default_rng(seed)
        res = 0.1
        free = rng.random((32, 32)) > 0.12
        free[14:18, 14:18] = True
        grid = OccupancyGrid.from_free_mask(free, res)
        pose = Pose2D(1.6 + rng.uniform(-0.1, 0.1), 1.6 + rng.uniform(-0.1, 0.1), rng.uniform(-3, 3))
        cfg = LidarConfig(n_beams=181, sigma=0.0)
        scan = simulate_lidar(grid, [], pose, cfg)
        for th, r in zip(cfg.angles()[::4], scan.ranges[::4]):
            expected = slab_oracle(free, res, pose.x, pose.y, pose.psi + th, cfg.range_max)
            assert r <= cfg.range_max
            assert abs(r - expected) < 1e-6


def slab_oracle(free, res, x, y, theta, max_range):
    """Exact oracle: slab intersection of the ray with every blocked cell."""
    rows, cols = np.nonzero(~free)
    lo = np.column_stack([cols * res, rows * res])
    hi = lo + res
    d = np.array([math.cos(theta), math.sin(theta)])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - [x, y]) / d
        t2 = (hi - [x, y]) / d
    t_near = np.nanmax(np.minimum(t1, t2), axis=1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    # a ray that only grazes a corner (zero-length chord) does not enter the cell
    hit = (t_far > t_near + 1e-9) & (t_far >= 0.0)
    if not np.any(hit):
        return max_range
    return float(min(np.min(np.maximum(t_near[hit], 0.0)), max_range))


class TestSensors:
    def test_clean_passthrough(self):
        x = np.array([1.0, 2.0, 0.3, 2.5, 0.1, 0.4, 0.0])
        imu, odom = sample_sensors(x, (0.5, 1.0), "none", SensorNoise.off(), None, 1.0)
        assert (odom.v_x, odom.v_y, odom.yaw_rate) == (2.5, 0.1, 0.4)
        assert (imu.a_x, imu.a_y, imu.yaw_rate, imu.yaw) == (0.5, 1.0, 0.4, 0.3)

    def test_low_grip_overestimates_when_accelerating(self):
        x = np.array([0, 0, 0, 2.0, 0, 0, 0.0])
        _, odom = sample_sensors(x, (4.0, 0.0), "low-grip", SensorNoise.off(), None, 0.0)
        assert odom.v_x > 2.0
        _, odom = sample_sensors(x, (4.0, 0.0), "high-grip", SensorNoise.off(), None, 0.0)
        assert odom.v_x == 2.0

    def test_stationary_noise_statistics(self):
        rng = np.random.default_rng(0)
        noise = SensorNoise()
        x = np.zeros(7)
        vx = np.array([sample_sensors(x, (0.0, 0.0), "none", noise, rng, 0.0)[1].v_x
                       for _ in range(10_000)])
        assert abs(vx.mean()) < 4 * noise.odom_vx / math.sqrt(vx.size)
        assert vx.std() == pytest.approx(noise.odom_vx, rel=0.05)

    def test_unknown_slip_level(self):
        with pytest.raises(ConfigError):
            sample_sensors(np.zeros(7), (0.0, 0.0), "ice", SensorNoise.off(), None, 0.0)
