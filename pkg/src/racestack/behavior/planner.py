"""Race-time behaviour layer: derives the transition conditions and picks waypoints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racestack.behavior.spliner import (LocalTrajectory, SplinerParams, current_trajectory,
                                        plan_overtake)
from racestack.behavior.state_machine import BehaviorState, Conditions, StateMachine
from racestack.perception.tracking import OpponentEstimate, StaticObstacle
from racestack.track import Raceline, boundary_distance, s_residual


@dataclass
class BehaviorParams:
    opp_horizon: float = 8.0
    speed_advantage: float = 1.1
    car_length: float = 0.45
    ic_hold: float = 1.0
    # pass-zone feasibility: the overtake must finish on low-curvature track
    zone_kappa: float = 0.1
    gap_ref: float = 2.0
    check_pass_zone: bool = True
    allow_overtake: bool = True


@dataclass
class Target:
    """Obstacle the longitudinal controller trails."""

    s: float
    d: float
    v_s: float
    in_los: bool
    is_static: bool


@dataclass
class BehaviorOutput:
    state: BehaviorState
    trajectory: LocalTrajectory
    target: Target | None
    conditions: Conditions


def low_curvature_zone(raceline: Raceline, s: float, kappa_max: float) -> float:
    """Length of the contiguous stretch starting at ``s`` with |kappa| <= kappa_max."""
    k0 = raceline.index_at(s)
    n = raceline.n
    idx = (k0 + np.arange(n)) % n
    bad = np.abs(raceline.kappa[idx]) > kappa_max
    if not bad.any():
        return raceline.s_max
    return float(np.argmax(bad) * raceline.step)


class BehaviorPlanner:
    def __init__(self, raceline: Raceline, params: BehaviorParams | None = None,
                 spliner: SplinerParams | None = None):
        self.raceline = raceline
        self.p = params or BehaviorParams()
        self.sp = spliner or SplinerParams()
        self.sm = StateMachine()
        self.overtake: LocalTrajectory | None = None
        self.ofc_clear_since: float | None = 0.0
        self.attempts = 0

    @property
    def state(self) -> BehaviorState:
        return self.sm.state

    def _ahead(self, s_obj: float, s_ego: float) -> float:
        return s_residual(s_obj, s_ego, self.raceline.s_max)

    def _in_corridor(self, s: float, d: float) -> bool:
        return -boundary_distance(self.raceline, s, "right") < d < boundary_distance(self.raceline, s, "left")

    def _select_target(self, s_ego: float, opp: OpponentEstimate | None,
                       statics: list[StaticObstacle]) -> Target | None:
        h = self.p.opp_horizon
        dyn = None
        if opp is not None and not opp.is_static:
            a = self._ahead(opp.s, s_ego)
            if 0.0 < a <= h and self._in_corridor(opp.s, opp.d):
                dyn = Target(opp.s, opp.d, opp.v_s, opp.in_los, False)
        if dyn is not None:
            return dyn
        cands = []
        if opp is not None and opp.is_static:
            cands.append(Target(opp.s, opp.d, 0.0, opp.in_los, True))
        cands += [Target(o.s, o.d, 0.0, True, True) for o in statics]
        cands = [c for c in cands if 0.0 < self._ahead(c.s, s_ego) <= h and self._in_corridor(c.s, c.d)]
        if not cands:
            return None
        return min(cands, key=lambda c: self._ahead(c.s, s_ego))

    def _pass_zone_ok(self, s_ego: float, opp: OpponentEstimate) -> bool:
        if not self.p.check_pass_zone:
            return True
        v_line = self.raceline.velocity_at(opp.s)
        r = opp.v_s / max(v_line, 1e-3)
        if r >= 1.0:
            return False
        gap = self._ahead(opp.s, s_ego)
        needed = (gap + 2.0 * self.p.car_length) / (1.0 - r)
        return low_curvature_zone(self.raceline, s_ego, self.p.zone_kappa) >= needed

    def step(self, t: float, s_ego: float, v_s_ego: float, opp: OpponentEstimate | None,
             statics: list[StaticObstacle] | None = None, fault: bool = False) -> BehaviorOutput:
        statics = statics or []
        target = self._select_target(s_ego, opp, statics)
        dynamic = opp is not None and not opp.is_static
        ahead = self._ahead(opp.s, s_ego) if dynamic else 0.0

        ot = False
        state = self.sm.state
        if self.p.allow_overtake and dynamic and state in (BehaviorState.TRAILING,
                                                           BehaviorState.OVERTAKE):
            if ahead > self.p.car_length or self.overtake is None:
                plan = plan_overtake(opp.s, opp.d, s_ego, v_s_ego, self.raceline, self.sp)
                if state is BehaviorState.TRAILING:
                    fast = self.raceline.velocity_at(opp.s) >= self.p.speed_advantage * opp.v_s
                    ot = (plan is not None and plan.valid and fast and opp.in_los
                          and target is not None and not target.is_static
                          and self._pass_zone_ok(s_ego, opp))
                    self.overtake = plan if ot else None
                else:
                    if plan is not None and plan.valid:
                        self.overtake = plan
                    ot = self.overtake is not None and self.overtake.valid
            else:
                ot = self.overtake is not None and self.overtake.valid
        done = dynamic and state is BehaviorState.OVERTAKE and ahead <= -self.p.car_length

        if fault:
            self.ofc_clear_since = None
        elif self.ofc_clear_since is None:
            self.ofc_clear_since = t
        ic = self.ofc_clear_since is not None and t - self.ofc_clear_since >= self.p.ic_hold

        cond = Conditions(opp=target is not None, ot=ot, done=done, ofc=fault, ic=ic)
        prev = self.sm.state
        new = self.sm.step(cond, t)
        if new is BehaviorState.OVERTAKE and prev is not BehaviorState.OVERTAKE:
            self.attempts += 1
        if new is not BehaviorState.OVERTAKE and prev is BehaviorState.OVERTAKE:
            self.overtake = None
        traj, corrected = current_trajectory(new, self.raceline, self.overtake)
        if corrected is not new:
            self.sm.force(corrected, "invalid spline", t)
            self.overtake = None
        return BehaviorOutput(self.sm.state, traj, target, cond)
