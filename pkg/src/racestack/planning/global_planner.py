"""End-to-end offline raceline generation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from racestack.planning.centerline import (Centerline, ExtractionParams, boundary_widths,
                                           extract_centerline)
from racestack.planning.mincurv import PlannerParams, QPResult, min_curvature_qp, path_geometry
from racestack.planning.velocity import velocity_profile
from racestack.track import OccupancyGrid, Raceline

log = logging.getLogger(__name__)


@dataclass
class PlanReport:
    laptime_estimate: float
    max_kappa: float
    min_boundary_margin: float
    iterations: int
    converged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def raceline_from_qp(qp: QPResult, params: PlannerParams, grid: OccupancyGrid | None = None
                     ) -> Raceline:
    geo = path_geometry(qp.x, qp.y, qp.w_left, qp.w_right, params.out_step)
    d_left, d_right = geo.d_left, geo.d_right
    if grid is not None:
        d_left, d_right = boundary_widths(grid, geo.x, geo.y, geo.psi)
    v = velocity_profile(geo.kappa, geo.step, params.a_lat_max, params.a_long_max, params.v_max)
    return Raceline(step=geo.step, x=geo.x, y=geo.y, psi=geo.psi, kappa=geo.kappa, v=v,
                    d_left=np.maximum(d_left, 0.0), d_right=np.maximum(d_right, 0.0))


def plan_global(center: Centerline, params: PlannerParams | None = None,
                grid: OccupancyGrid | None = None) -> tuple[Raceline, PlanReport]:
    p = params or PlannerParams()
    qp = min_curvature_qp(center, p)
    rl = raceline_from_qp(qp, p, grid)
    report = PlanReport(
        laptime_estimate=float(np.sum(rl.step / np.maximum(rl.v, 1e-3))),
        max_kappa=float(np.max(np.abs(rl.kappa))),
        min_boundary_margin=float(min(rl.d_left.min(), rl.d_right.min())),
        iterations=qp.iterations,
        converged=qp.converged,
    )
    log.info("raceline: %.2f m, est. lap %.2f s, max kappa %.3f", rl.s_max, report.laptime_estimate,
             report.max_kappa)
    return rl, report


def plan_from_grid(grid: OccupancyGrid, params: PlannerParams | None = None
                   ) -> tuple[Raceline, PlanReport]:
    p = params or PlannerParams()
    center = extract_centerline(grid, ExtractionParams(stepsize=p.stepsize_reg))
    return plan_global(center, p, grid)
