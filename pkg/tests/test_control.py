import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from racestack.control.ftg import FtgParams, ftg_command
from racestack.control.lateral import (LateralParams, lookahead_distance, map_from_eta,
                                       map_lateral_acceleration, map_steering,
                                       pure_pursuit_from_eta, pure_pursuit_steering)
from racestack.control.longitudinal import (LongitudinalParams, lateral_factor, lookahead_velocity,
                                            nominal_velocity, trailing_gap, trailing_velocity)
from racestack.control.lut import (default_delta_grid, default_velocity_axis, generate_steering_lut,
                                   load_lut, save_lut)
from racestack.errors import ConfigError
from racestack.harness.runner import default_lut
from racestack.track import Pose2D
from racestack.vehicle.dynamics import CarState, step_dynamics
from racestack.vehicle.lidar import LaserScan
from racestack.vehicle.params import SingleTrackParams

from conftest import stadium_raceline

VP = SingleTrackParams()


@pytest.fixture(scope="module")
def lut():
    return default_lut()


class TestNominalVelocity:
    def test_no_deviation(self):
        assert lateral_factor(0.0, 0.7, 1.0) == 1.0

    def test_lambda_zero(self):
        assert lateral_factor(1.0, 1.0, 0.0) == 1.0

    def test_full_correction(self):
        assert lateral_factor(1.0, 1.0, 1.0) == pytest.approx(0.36787944117, abs=1e-10)

    def test_lookahead_rounding(self):
        v = np.arange(100, dtype=float)
        # s = 1.0 + 0.25 * 2.0 = 1.5 -> index 15; 1.54 rounds to 15, 1.56 to 16
        assert lookahead_velocity(v, 0.1, 1.0, 2.0, 0.25) == 15.0
        assert lookahead_velocity(v, 0.1, 1.04, 2.0, 0.25) == 15.0
        assert lookahead_velocity(v, 0.1, 1.06, 2.0, 0.25) == 16.0
        # 9.95 sits on the tie and resolves down; past it the index wraps to the start
        assert lookahead_velocity(v, 0.1, 9.95, 0.0, 0.25) == 99.0
        assert lookahead_velocity(v, 0.1, 9.96, 0.0, 0.25) == 0.0

    def test_on_line_equals_reference(self):
        rl = stadium_raceline(v=3.0)
        assert nominal_velocity(5.0, 0.0, 3.0, rl) == 3.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 31.0), st.floats(0.0, 0.99), st.floats(0.0, 0.99))
    def test_monotone_in_deviation(self, s, d1, d2):
        rl = stadium_raceline(v=3.0)
        lo, hi = sorted((d1, d2))
        assert nominal_velocity(s, hi, 2.0, rl) <= nominal_velocity(s, lo, 2.0, rl) + 1e-12
        assert nominal_velocity(s, -hi, 2.0, rl) <= nominal_velocity(s, -lo, 2.0, rl) + 1e-12

    def test_invalid_params(self):
        with pytest.raises(ConfigError):
            LongitudinalParams(lambda_lat=1.5)
        with pytest.raises(ConfigError):
            LongitudinalParams(k_p=-1.0)


class TestTrailing:
    def test_at_reference(self):
        assert trailing_velocity(10.0, 2.0, 12.0, 2.0, 100.0) == pytest.approx(2.0)

    def test_hand_example(self):
        # gap 2.5 m (0.5 m too far), ego 0.1 m/s faster
        v = trailing_velocity(10.0, 3.1, 12.5, 3.0, 100.0)
        assert v == pytest.approx(3.48)

    def test_blind_floor(self):
        # v_des = 0.4 -> floor applies only when the target is out of sight
        v_opp = 0.4
        assert trailing_velocity(0.0, v_opp, 2.0, v_opp, 100.0, in_los=False) == pytest.approx(1.5)
        assert trailing_velocity(0.0, v_opp, 2.0, v_opp, 100.0, in_los=True) == pytest.approx(0.4)

    def test_gap_wraps(self):
        assert trailing_gap(99.0, 1.0, 100.0) == pytest.approx(2.0)
        assert trailing_velocity(99.0, 2.0, 1.0, 2.0, 100.0) == pytest.approx(2.0)

    def test_closed_loop_converges(self):
        p = LongitudinalParams()
        v_opp = 2.5
        s_opp = 3.0
        car = CarState(Pose2D(0.0, 0.0, 0.0), v_x=v_opp)
        dt, sub = 0.025, 0.0025
        errs = []
        for k in range(int(12.0 / dt)):
            v_cmd = trailing_velocity(car.pose.x, car.v_x, s_opp, v_opp, 1000.0, True, p)
            for _ in range(int(round(dt / sub))):
                car = step_dynamics(car, (v_cmd, 0.0), sub, VP)
            s_opp += v_opp * dt
            errs.append(s_opp - car.pose.x - p.gap_ref)
        errs = np.abs(errs)
        assert errs.max() < 1.2
        assert errs[int(10.0 / dt):].max() < 0.2


class TestLut:
    def test_axes(self):
        v = default_velocity_axis()
        assert v[0] == 0.5 and v[-1] == 7.0 and v.size == 66
        d = default_delta_grid()
        assert d[0] == 0.0 and d[-1] == pytest.approx(0.4)
        assert np.allclose(np.diff(d[d < 0.1 - 1e-9]), 0.0033)
        assert np.allclose(np.diff(d[d >= 0.1 - 1e-9]), 0.01)

    def test_zero_steer_is_zero(self, lut):
        assert np.all(lut.a_c[lut.stable[:, 0], 0] == 0.0)

    def test_monotone_rows(self, lut):
        for i in range(lut.v_axis.size):
            _, ac = lut.row(i)
            assert np.all(np.diff(ac) > 0)

    def test_kinematic_limit(self):
        small = generate_steering_lut(VP, v_axis=[1.0, 1.1], delta=[0.0, 0.01, 0.02, 0.03])
        L = VP.l_f + VP.l_r
        for j, delta in enumerate(small.delta[1:], start=1):
            kin = 1.0 ** 2 * math.tan(delta) / L
            assert small.a_c[0, j] == pytest.approx(kin, rel=0.05)

    def test_unstable_at_high_speed(self, lut):
        assert not lut.stable[-1, -1]
        assert lut.stable[-1].sum() < lut.stable[0].sum()

    def test_saturation_clamps(self, lut):
        i = lut.v_axis.size - 1
        dl, ac = lut.row(i)
        delta, sat = lut.steering(7.0, ac[-1] + 5.0)
        assert sat and delta == pytest.approx(dl[-1])

    def test_odd(self, lut):
        d1, _ = lut.steering(3.3, 4.0)
        d2, _ = lut.steering(3.3, -4.0)
        assert d1 == -d2 and d1 > 0

    def test_round_trip_in_simulator(self, lut):
        for v, a_req in ((2.0, 2.0), (4.0, 5.0), (5.5, 6.0)):
            delta, sat = lut.steering(v, a_req)
            assert not sat
            car = CarState(Pose2D(0, 0, 0), v_x=v, delta=delta)
            for _ in range(1500):
                car = step_dynamics(car, (v, delta), 0.002, VP)
            assert car.v_x * car.yaw_rate == pytest.approx(a_req, rel=0.10)

    def test_file_round_trip(self, lut, tmp_path):
        save_lut(lut, tmp_path / "lut.bin")
        back = load_lut(tmp_path / "lut.bin")
        assert np.array_equal(back.row_lengths(), lut.row_lengths())
        for i in (0, 30, 65):
            assert np.allclose(back.row(i)[1], lut.row(i)[1], rtol=1e-6)

    def test_bad_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope")
        with pytest.raises(ConfigError):
            load_lut(tmp_path / "x.bin")


class TestLateral:
    def test_lookahead_law(self):
        p = LateralParams()
        assert lookahead_distance(5.0, p) == pytest.approx(0.6 * 5.0 - 0.18)
        assert lookahead_distance(0.0, p) == 0.1

    def test_map_acceleration_example(self):
        assert map_lateral_acceleration(5.0, 2.0, math.pi / 6) == pytest.approx(12.5)

    def test_map_zero_eta(self, lut):
        res = map_from_eta(3.0, 1.6, 0.0, lut)
        assert res.a_c == 0.0 and res.delta == 0.0

    @given(st.floats(0.5, 7.0), st.floats(0.2, 4.0), st.floats(-1.5, 1.5))
    def test_map_mirror(self, v, l_d, eta):
        lut = default_lut()
        assert map_from_eta(v, l_d, -eta, lut).delta == -map_from_eta(v, l_d, eta, lut).delta

    def test_pure_pursuit_formula(self):
        p = LateralParams(delta_max=10.0)
        assert pure_pursuit_from_eta(1.0, math.pi / 2, p) == pytest.approx(math.atan(0.66), abs=1e-12)
        assert pure_pursuit_from_eta(1.0, 0.0, p) == 0.0
        assert pure_pursuit_from_eta(1.0, math.pi / 2, LateralParams()) == 0.42

    def test_on_line_straight_gives_zero(self, lut):
        rl = stadium_raceline()
        pose = Pose2D(2.0 + LateralParams().l_r, 0.0, 0.0)
        assert map_steering(pose, 3.0, rl.x, rl.y, rl.step, lut).delta == 0.0
        assert pure_pursuit_steering(pose, 3.0, rl.x, rl.y, rl.step).delta == 0.0

    def test_steers_back_towards_line(self, lut):
        rl = stadium_raceline()
        right_of_line = Pose2D(3.0, -0.3, 0.0)
        assert map_steering(right_of_line, 3.0, rl.x, rl.y, rl.step, lut).delta > 0
        assert pure_pursuit_steering(right_of_line, 3.0, rl.x, rl.y, rl.step).delta > 0


def corridor_scan(left=1.0, right=1.0, n=1081):
    """Ranges to two parallel walls at the given lateral distances."""
    scan = LaserScan(np.full(n, 10.0))
    ang = scan.angles
    r = np.full(n, 10.0)
    with np.errstate(divide="ignore"):
        r = np.where(np.sin(ang) > 1e-9, left / np.sin(ang), r)
        r = np.where(np.sin(ang) < -1e-9, right / -np.sin(ang), r)
    return LaserScan(np.minimum(r, 10.0))


class TestFtg:
    def test_symmetric_corridor(self):
        cmd = ftg_command(corridor_scan())
        assert cmd.delta == pytest.approx(0.0, abs=1e-9)
        assert cmd.v == FtgParams().v_fast

    def test_left_blocked_steers_right(self):
        scan = corridor_scan()
        r = scan.ranges.copy()
        r[scan.angles > 0] = 0.5
        cmd = ftg_command(LaserScan(r))
        assert cmd.delta < 0

    def test_all_blocked_stops(self):
        cmd = ftg_command(LaserScan(np.full(1081, 0.5)))
        assert cmd.v == 0.0
