"""Bayesian optimization of sector velocity scalers."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel, WhiteKernel

log = logging.getLogger(__name__)


@dataclass
class CostWeights:
    w_t: float = 1.0
    w_d: float = 2.0
    w_b: float = 1.0


@dataclass
class TuneState:
    dim: int
    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    crashed: list = field(default_factory=list)
    best_trace: list = field(default_factory=list)
    seed: int = 0
    kernel_params: dict = field(default_factory=dict)
    # scaler box searched; X holds unit-cube coordinates mapped affinely onto it
    bounds: tuple = (0.0, 1.0)

    def scalers(self, x) -> np.ndarray:
        lo, hi = self.bounds
        return lo + (hi - lo) * np.asarray(x, dtype=float)

    @property
    def n(self) -> int:
        return len(self.y)

    def add(self, x, cost: float, crashed: bool = False) -> None:
        if not np.isfinite(cost):
            raise ValueError("costs must be finite")
        self.X.append(np.asarray(x, dtype=float).copy())
        self.y.append(float(cost))
        self.crashed.append(bool(crashed))
        self.best_trace.append(min(self.y))

    @property
    def best(self) -> tuple[np.ndarray, float]:
        i = int(np.argmin(self.y))
        return self.X[i], self.y[i]

    def worst_feasible(self) -> float | None:
        ok = [c for c, cr in zip(self.y, self.crashed) if not cr]
        return max(ok) if ok else None


def lap_cost(lap_times, lateral_errors, min_boundary: float, w: CostWeights | None = None) -> float:
    w = w or CostWeights()
    return (w.w_t * float(np.mean(lap_times)) + w.w_d * float(np.mean(np.abs(lateral_errors)))
            - w.w_b * float(min_boundary))


def crash_penalty(state: TuneState, fallback: float = 1e3) -> float:
    worst = state.worst_feasible()
    return 2.0 * worst if worst is not None and worst > 0 else fallback


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float, xi: float = 0.0) -> np.ndarray:
    """EI for minimization; non-negative by construction."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = best - mu - xi
    out = np.maximum(imp, 0.0)
    pos = sigma > 1e-12
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)


def fit_gp(X: np.ndarray, y: np.ndarray, seed: int = 0) -> GaussianProcessRegressor:
    dim = X.shape[1]
    kernel = (ConstantKernel(1.0, (1e-3, 1e3)) * RBF(np.full(dim, 0.3), (0.05, 1.0))
              + WhiteKernel(1e-3, (1e-8, 1e-1)))
    gp = GaussianProcessRegressor(kernel, normalize_y=True, n_restarts_optimizer=3, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        gp.fit(X, y)
    return gp


def latin_hypercube(dim: int, n: int, seed: int) -> np.ndarray:
    return qmc.LatinHypercube(d=dim, seed=seed).random(n)


def bo_step(state: TuneState, n_starts: int = 64, xi: float = 0.0) -> np.ndarray:
    """Next scaler vector in [0, 1]^dim."""
    rng = np.random.default_rng(state.seed + state.n)
    if state.n < 2:
        pts = latin_hypercube(state.dim, 2, state.seed)
        return pts[state.n]
    X = np.vstack(state.X)
    y = np.asarray(state.y)
    try:
        gp = fit_gp(X, y, state.seed)
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.warning("GP fit failed (%s); random search point", exc)
        return rng.random(state.dim)
    state.kernel_params = {k: repr(v) for k, v in gp.kernel_.get_params().items() if k.endswith("length_scale")}
    best = float(y.min())

    def neg_ei(x):
        mu, sd = gp.predict(x.reshape(1, -1), return_std=True)
        return -float(expected_improvement(mu, sd, best, xi)[0])

    starts = rng.random((n_starts, state.dim))
    bounds = [(0.0, 1.0)] * state.dim
    best_x, best_val = starts[0], np.inf
    for x0 in starts:
        r = minimize(neg_ei, x0, method="L-BFGS-B", bounds=bounds, options={"maxiter": 50})
        if r.fun < best_val:
            best_x, best_val = r.x, r.fun
    return np.clip(best_x, 0.0, 1.0)


def bayes_optimize(objective, dim: int, iters: int = 10, seed: int = 0,
                   state: TuneState | None = None, n_starts: int = 64) -> TuneState:
    """Minimize ``objective(x) -> (cost, crashed)`` for ``iters`` evaluations."""
    state = state or TuneState(dim, seed=seed)
    for k in range(iters):
        x = bo_step(state, n_starts)
        cost, crashed = objective(x)
        if crashed or not np.isfinite(cost):
            cost = crash_penalty(state)
            crashed = True
        state.add(x, cost, crashed)
        log.info("BO iter %d cost %.4f best %.4f", k, cost, state.best[1])
    return state


@dataclass
class Evaluation:
    cost: float
    crashed: bool
    metrics: object = None
    reason: str = ""


def scenario_with_scalers(scenario, sigma, s_max: float):
    """Copy of ``scenario`` whose ego follows ``sigma`` over equal-length sectors."""
    from racestack.harness.runner import sector_boundaries
    from racestack.harness.scenario import Scenario

    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.size == 0 or np.any(sigma < 0) or np.any(sigma > 1):
        raise ValueError("scalers must be a non-empty vector in [0, 1]")
    sc = Scenario.from_dict(scenario.to_dict())
    sc.ego.sectors = {"boundaries": sector_boundaries(s_max, sigma.size).tolist(),
                      "scalers": sigma.tolist()}
    sc.laps = 3
    sc.opponent = None
    return sc


def run_scalers(sigma, scenario, assets=None, weights: CostWeights | None = None) -> Evaluation:
    """Three closed-loop laps with the given scalers; the raw cost, inf on a crash."""
    from racestack.errors import SimulationFault
    from racestack.harness.runner import load_assets, simulate

    assets = assets or load_assets(scenario.track, scenario.map_yaml, scenario.raceline_csv)
    sc = scenario_with_scalers(scenario, sigma, assets.raceline.s_max)
    try:
        m = simulate(sc, assets).metrics
    except SimulationFault as exc:
        log.warning("scaler evaluation failed: %s", exc)
        return Evaluation(float("inf"), True, None, f"simulation fault: {exc}")
    laps = m.lap_times.get("ego", [])
    if m.crashes.get("ego", 0) or len(laps) < 3:
        return Evaluation(float("inf"), True, m, "crash" if m.crashes.get("ego", 0) else "incomplete")
    cost = lap_cost(laps[:3], [m.lateral_error_mean], m.min_boundary, weights)
    return Evaluation(cost, False, m)


def evaluate_scalers(sigma, scenario, state: TuneState | None = None, assets=None,
                     weights: CostWeights | None = None) -> float:
    """Lap cost of ``sigma``; crashes cost twice the worst feasible cost in ``state``."""
    ev = run_scalers(sigma, scenario, assets, weights)
    if ev.crashed:
        return crash_penalty(state or TuneState(len(np.atleast_1d(sigma))))
    return ev.cost


def tune_sectors(scenario, n_sectors: int = 7, iters: int = 10, seed: int = 0, assets=None,
                 weights: CostWeights | None = None, n_starts: int = 64,
                 bounds: tuple = (0.0, 1.0)) -> TuneState:
    """Bayesian optimization of ``n_sectors`` scalers inside the box ``bounds``."""
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("scaler bounds must satisfy 0 <= lo < hi <= 1")
    state = TuneState(n_sectors, seed=seed, bounds=(lo, hi))

    def objective(x):
        ev = run_scalers(state.scalers(x), scenario, assets, weights)
        return ev.cost, ev.crashed

    return bayes_optimize(objective, n_sectors, iters, seed, state, n_starts)
