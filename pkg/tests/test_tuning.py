import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from racestack.harness.scenario import OpponentConfig, Scenario, StackConfig
from racestack.tuning import (CostWeights, TuneState, bayes_optimize, bo_step, crash_penalty,
                              evaluate_scalers, expected_improvement, fit_gp, lap_cost,
                              run_scalers, scenario_with_scalers, tune_sectors)


class TestExpectedImprovement:
    def test_analytic_value(self):
        # mu = best, sigma = 1: EI = pdf(0)
        assert expected_improvement(np.array([0.0]), np.array([1.0]), 0.0)[0] == pytest.approx(
            1.0 / math.sqrt(2.0 * math.pi), rel=1e-12)

    def test_deterministic_limit(self):
        assert expected_improvement(np.array([2.0]), np.array([0.0]), 3.0)[0] == 1.0
        assert expected_improvement(np.array([4.0]), np.array([0.0]), 3.0)[0] == 0.0

    @given(st.floats(-100, 100), st.floats(0.0, 50.0), st.floats(-100, 100))
    def test_non_negative(self, mu, sigma, best):
        assert expected_improvement(np.array([mu]), np.array([sigma]), best)[0] >= 0.0

    @given(st.floats(-10, 10), st.floats(0.01, 5.0), st.floats(0.01, 5.0), st.floats(-10, 10))
    def test_monotone_in_sigma(self, mu, s1, s2, best):
        lo, hi = sorted((s1, s2))
        ei = expected_improvement(np.array([mu, mu]), np.array([lo, hi]), best)
        assert ei[1] >= ei[0] - 1e-12


class TestCost:
    def test_lap_cost(self):
        c = lap_cost([10.0, 11.0, 12.0], [0.1, -0.3], 0.4, CostWeights())
        assert c == pytest.approx(11.0 + 2.0 * 0.2 - 0.4)

    def test_crash_penalty(self):
        st_ = TuneState(2)
        assert crash_penalty(st_) == 1e3
        st_.add([0.1, 0.2], 10.0)
        st_.add([0.3, 0.4], 12.0)
        st_.add([0.5, 0.6], 24.0, crashed=True)
        assert crash_penalty(st_) == 24.0

    def test_state_rejects_non_finite(self):
        with pytest.raises(ValueError):
            TuneState(1).add([0.5], float("inf"))

    def test_bounds_mapping(self):
        st_ = TuneState(3, bounds=(0.6, 0.9))
        assert st_.scalers([0.0, 0.5, 1.0]) == pytest.approx([0.6, 0.75, 0.9])

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            tune_sectors(Scenario(), bounds=(0.5, 0.4))


class TestBoStep:
    def test_seeding_is_space_filling(self):
        st_ = TuneState(3, seed=4)
        x0 = bo_step(st_)
        st_.add(x0, 1.0)
        x1 = bo_step(st_)
        assert np.all((0 <= x0) & (x0 <= 1)) and np.all((0 <= x1) & (x1 <= 1))
        # Latin hypercube with two points: each coordinate falls in a different half
        assert np.all((x0 < 0.5) != (x1 < 0.5))

    def test_explores_away_from_equal_costs(self):
        st_ = TuneState(1, seed=0)
        st_.add([0.1], 5.0)
        st_.add([0.9], 5.0)
        x = bo_step(st_)
        gp = fit_gp(np.array([[0.1], [0.9]]), np.array([5.0, 5.0]))
        grid = np.linspace(0, 1, 201).reshape(-1, 1)
        mu, sd = gp.predict(grid, return_std=True)
        ei = expected_improvement(mu, sd, 5.0)
        assert abs(x[0] - 0.1) > 0.15 and abs(x[0] - 0.9) > 0.15
        assert expected_improvement(*gp.predict(x.reshape(1, -1), return_std=True), 5.0)[0] >= \
            0.99 * ei.max()

    def test_quadratic_bowl(self):
        opt = np.array([0.3, 0.7])

        def bowl(x):
            return float(np.sum((x - opt) ** 2)), False

        st_ = bayes_optimize(bowl, 2, iters=10, seed=0)
        best_x, _ = st_.best
        assert np.all(np.abs(best_x - opt) <= 0.05)
        assert np.all(np.diff(st_.best_trace) <= 0)

    def test_crashes_are_penalised_not_dropped(self):
        calls = iter([(3.0, False), (float("inf"), True), (2.0, False)])
        st_ = bayes_optimize(lambda x: next(calls), 1, iters=3, seed=1)
        assert st_.y == [3.0, 6.0, 2.0]
        assert st_.crashed == [False, True, False]


class TestScenario:
    def test_scenario_with_scalers(self):
        sc = Scenario(track="oval", opponent=OpponentConfig(), laps=10)
        out = scenario_with_scalers(sc, [0.5, 0.6, 0.7], 30.0)
        assert out.laps == 3 and out.opponent is None
        assert out.ego.sectors["boundaries"] == pytest.approx([0.0, 10.0, 20.0])
        assert out.ego.sectors["scalers"] == [0.5, 0.6, 0.7]
        assert sc.laps == 10 and sc.opponent is not None

    @pytest.mark.parametrize("bad", [[], [1.2, 0.5], [[0.5]]])
    def test_bad_scalers(self, bad):
        with pytest.raises(ValueError):
            scenario_with_scalers(Scenario(), bad, 30.0)


@pytest.mark.slow
class TestClosedLoop:
    @pytest.fixture(scope="class")
    @classmethod
    def scenario(cls):
        return Scenario(track="oval", ego=StackConfig(localization="truth"), seed=3)

    def test_default_is_safe_and_deterministic(self, scenario, oval_assets):
        a = run_scalers([0.5] * 4, scenario, oval_assets)
        assert not a.crashed and len(a.metrics.lap_times["ego"]) >= 3
        assert math.isfinite(a.cost)
        b = run_scalers([0.5] * 4, scenario, oval_assets)
        assert a.cost == b.cost

    def test_crash_costs_more_than_completed_runs(self, scenario, oval_assets):
        st_ = TuneState(4)
        ok = evaluate_scalers([0.5] * 4, scenario, st_, oval_assets)
        st_.add([0.5] * 4, ok)
        fast = evaluate_scalers([1.0] * 4, scenario, st_, oval_assets)
        assert fast >= ok
