import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from racestack.errors import InvalidTrackError, OutOfCorridorError
from racestack.mapio import load_map, load_raceline, save_map, save_raceline
from racestack.track import (OccupancyGrid, Pose2D, Raceline, boundary_distance,
                             cartesian_to_frenet, frenet_to_cartesian, nearest_waypoint,
                             nearest_waypoint_bruteforce, s_residual, velocity_to_frenet,
                             wrap_angle, wrap_s)

from conftest import circle_raceline, stadium_raceline

finite = st.floats(-1e4, 1e4, allow_nan=False)
s_max_st = st.floats(0.5, 500.0)


def cyclic_gap(a, b, s_max):
    r = abs(a - b) % s_max
    return min(r, s_max - r)


class TestWrapS:
    @pytest.mark.parametrize("s, s_max, expected", [(3.0, 10.0, 3.0), (-1.0, 10.0, 9.0),
                                                    (10.0, 10.0, 0.0)])
    def test_examples(self, s, s_max, expected):
        assert wrap_s(s, s_max) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("s_max", [0.0, -1.0])
    def test_rejects_non_positive_length(self, s_max):
        with pytest.raises(InvalidTrackError):
            wrap_s(1.0, s_max)

    @given(finite, s_max_st)
    def test_range_and_congruence(self, s, s_max):
        w = wrap_s(s, s_max)
        assert 0.0 <= w < s_max
        k = round((s - w) / s_max)
        assert abs(s - w - k * s_max) <= 1e-9 * max(1.0, abs(s))

    @given(finite, s_max_st)
    def test_idempotent_and_periodic(self, s, s_max):
        w = wrap_s(s, s_max)
        assert wrap_s(w, s_max) == w
        assert cyclic_gap(wrap_s(s + s_max, s_max), w, s_max) < 1e-9 * max(1.0, abs(s))


class TestResidual:
    def test_wraps_across_seam(self):
        assert s_residual(0.06, 9.95, 10.0) == pytest.approx(0.11)
        assert s_residual(9.95, 0.06, 10.0) == pytest.approx(-0.11)

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(1.0, 100.0))
    def test_half_open_interval(self, a, b, s_max):
        r = s_residual(a, b, s_max)
        assert -0.5 * s_max < r <= 0.5 * s_max + 1e-12
        assert cyclic_gap(b + r, a, s_max) < 1e-7


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


class TestRaceline:
    def test_s_uniform_and_closed_length(self, stadium):
        assert stadium.s[0] == 0.0
        assert np.allclose(np.diff(stadium.s), stadium.step, atol=1e-9)
        assert stadium.s_max == pytest.approx(stadium.n * stadium.step)

    def test_rejects_negative_boundary(self):
        with pytest.raises(InvalidTrackError):
            Raceline(0.1, [0, 1, 2], [0, 0, 0], [0, 0, 0], [0, 0, 0], [1, 1, 1], [1, -1, 1], [1, 1, 1])

    def test_rejects_open_line(self):
        with pytest.raises(InvalidTrackError):
            Raceline(0.1, [0, 1, 2], [0, 0, 0], [0, 0, 0], [0, 0, 0], [1, 1, 1], [1, 1, 1], [1, 1, 1],
                     closed=False)

    def test_index_tie_goes_to_lower(self, stadium):
        assert stadium.index_at(2.5 * stadium.step) == 2


class TestCartesianToFrenet:
    def test_identity_on_straight(self, stadium):
        fp = cartesian_to_frenet(stadium, 2.53, 0.30)
        assert fp.s == pytest.approx(2.53, abs=1e-12)
        assert fp.d == pytest.approx(0.30, abs=1e-12)

    def test_waypoint_maps_to_itself(self, stadium):
        for k in (0, 57, 150, stadium.n - 1):
            fp = cartesian_to_frenet(stadium, stadium.x[k], stadium.y[k])
            assert fp.s == pytest.approx(stadium.s[k], abs=1e-9)
            assert fp.d == pytest.approx(0.0, abs=1e-9)

    def test_circle_segment_error_bound(self):
        # bound on a unit circle with 0.1 m spacing, evaluated independently
        bound = abs(math.atan(0.1) - 0.1)
        assert bound == pytest.approx(3.3e-4, abs=5e-6)
        rl = circle_raceline(1.0, 63)
        th = np.linspace(0.0, 2.0 * math.pi, 5001)[:-1]
        err = []
        for t in th:
            fp = cartesian_to_frenet(rl, math.cos(t), math.sin(t))
            err.append(abs(s_residual(fp.s, t, rl.s_max)))
        assert max(err) <= bound

    def test_out_of_corridor(self, stadium):
        with pytest.raises(OutOfCorridorError):
            cartesian_to_frenet(stadium, 5.0, -20.0)
        fp = cartesian_to_frenet(stadium, 5.0, -20.0, force=True)
        assert fp.d == pytest.approx(-20.0)

    def test_hash_matches_bruteforce(self, stadium):
        rng = np.random.default_rng(3)
        for x, y in rng.uniform([-3, -2], [13, 6], size=(500, 2)):
            try:
                k = nearest_waypoint(stadium, x, y)
            except OutOfCorridorError:
                continue
            kb = nearest_waypoint_bruteforce(stadium, x, y)
            d = np.hypot(stadium.x - x, stadium.y - y)
            assert d[k] == pytest.approx(d[kb], abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 32.0), st.floats(-0.5, 0.5))
    def test_round_trip_bound(self, s, d):
        rl = stadium_raceline()
        x, y = frenet_to_cartesian(rl, s, d)
        fp = cartesian_to_frenet(rl, x, y)
        x2, y2 = frenet_to_cartesian(rl, fp.s, fp.d)
        r_min = 2.0
        assert math.hypot(x2 - x, y2 - y) < 2.0 * rl.step ** 2 / r_min

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.2, 9.8), st.floats(-0.5, 0.5))
    def test_round_trip_exact_on_straight(self, px, py):
        rl = stadium_raceline()
        fp = cartesian_to_frenet(rl, px, py)
        x, y = frenet_to_cartesian(rl, fp.s, fp.d)
        assert math.hypot(x - px, y - py) < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 32.0), st.floats(0.2, 0.9), st.sampled_from([-1.0, 1.0]),
           st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_sign_stable_under_small_perturbation(self, s, mag, sign, ex, ey):
        rl = stadium_raceline()
        d = sign * max(mag, 1.5 * rl.step)
        x, y = frenet_to_cartesian(rl, s, d)
        eps = 0.099 * rl.step / math.sqrt(2.0)
        a = cartesian_to_frenet(rl, x, y)
        b = cartesian_to_frenet(rl, x + ex * eps, y + ey * eps)
        assert np.sign(a.d) == np.sign(b.d) == sign


class TestFrenetToCartesian:
    def test_waypoint(self, stadium):
        for k in (0, 99, 200):
            assert frenet_to_cartesian(stadium, stadium.s[k], 0.0) == pytest.approx(
                (stadium.x[k], stadium.y[k]), abs=1e-12)

    def test_identity_on_straight(self, stadium):
        assert frenet_to_cartesian(stadium, 2.53, 0.30) == pytest.approx((2.53, 0.30), abs=1e-12)

    def test_left_is_positive(self, circle):
        # counter-clockwise circle: left of the line is towards the centre
        x, y = frenet_to_cartesian(circle, 0.0, 0.2)
        assert math.hypot(x, y) == pytest.approx(0.8, abs=1e-9)


class TestBoundary:
    def test_at_waypoint_and_midpoint(self):
        n = 10
        dl = np.arange(n, dtype=float) + 1.0
        rl = circle_raceline(1.0, n).replace(d_left=dl)
        assert boundary_distance(rl, rl.s[3], "left") == pytest.approx(4.0)
        assert boundary_distance(rl, 0.5 * (rl.s[0] + rl.s[1]), "left") == pytest.approx(1.5)

    @given(st.floats(-100, 100))
    def test_constant_width(self, s):
        rl = circle_raceline(3.0, 190, half_width=0.7)
        assert boundary_distance(rl, s, "left") == pytest.approx(0.7)
        assert boundary_distance(rl, s, "right") == pytest.approx(0.7)

    def test_bad_side(self, circle):
        with pytest.raises(ValueError):
            boundary_distance(circle, 0.0, "up")


def test_velocity_to_frenet(stadium):
    assert velocity_to_frenet(stadium, 1.0, 0.0, 2.0, 0.0) == pytest.approx((2.0, 0.0))
    v_s, v_d = velocity_to_frenet(stadium, 1.0, math.pi / 2, 2.0, 0.0)
    assert v_s == pytest.approx(0.0, abs=1e-12) and abs(v_d) == pytest.approx(2.0)


class TestGrid:
    def test_cell_count_mismatch(self):
        with pytest.raises(InvalidTrackError):
            OccupancyGrid(0.05, Pose2D(0, 0, 0), 4, 4, np.zeros(15))

    def test_resolution_positive(self):
        with pytest.raises(InvalidTrackError):
            OccupancyGrid(0.0, Pose2D(0, 0, 0), 2, 2, np.zeros(4))

    def test_map_round_trip(self, tmp_path):
        free = np.ones((20, 30), bool)
        free[0, :] = free[-1, :] = False
        free[5:8, 10:12] = False
        grid = OccupancyGrid.from_free_mask(free, 0.05, Pose2D(-1.0, 2.0, 0.0))
        save_map(grid, tmp_path / "m.yaml")
        g2 = load_map(tmp_path / "m.yaml")
        assert g2.resolution == pytest.approx(0.05)
        assert (g2.origin.x, g2.origin.y) == pytest.approx((-1.0, 2.0))
        assert np.array_equal(g2.free_mask, grid.free_mask)
        assert (tmp_path / "m.pgm").read_bytes()[:2] == b"P5"

    def test_raceline_csv_round_trip(self, tmp_path, stadium):
        save_raceline(stadium, tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines()[0] == "s;x;y;psi;kappa;v;d_left;d_right"
        rl = load_raceline(tmp_path / "r.csv")
        assert rl.n == stadium.n
        assert np.allclose(rl.x, stadium.x)
        assert np.allclose(np.sin(rl.psi - stadium.psi), 0.0, atol=1e-8)
