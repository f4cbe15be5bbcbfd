"""Shared fixtures: analytic racelines and cached harness assets."""

from __future__ import annotations

import math

import numpy as np
import pytest

from racestack.track import Raceline


def circle_raceline(radius: float = 1.0, n: int = 63, half_width: float = 0.5,
                    v: float = 2.0) -> Raceline:
    """Counter-clockwise circle sampled at ``n`` equal arc steps."""
    th = 2.0 * math.pi * np.arange(n) / n
    return Raceline(step=2.0 * math.pi * radius / n, x=radius * np.cos(th), y=radius * np.sin(th),
                    psi=th + math.pi / 2.0, kappa=np.full(n, 1.0 / radius), v=np.full(n, v),
                    d_left=np.full(n, half_width), d_right=np.full(n, half_width))


def stadium_points(length: float, radius: float, s: np.ndarray):
    """Pose and curvature on a stadium loop; the first straight runs along +x from the origin."""
    arc = math.pi * radius
    total = 2.0 * length + 2.0 * arc
    s = np.mod(s, total)
    x, y, psi, kappa = (np.empty_like(s) for _ in range(4))
    a = s < length
    x[a], y[a], psi[a], kappa[a] = s[a], 0.0, 0.0, 0.0
    b = (s >= length) & (s < length + arc)
    th = (s[b] - length) / radius
    x[b], y[b] = length + radius * np.sin(th), radius - radius * np.cos(th)
    psi[b], kappa[b] = th, 1.0 / radius
    c = (s >= length + arc) & (s < 2.0 * length + arc)
    u = s[c] - length - arc
    x[c], y[c], psi[c], kappa[c] = length - u, 2.0 * radius, math.pi, 0.0
    e = s >= 2.0 * length + arc
    th = (s[e] - 2.0 * length - arc) / radius
    x[e], y[e] = -radius * np.sin(th), radius + radius * np.cos(th)
    psi[e], kappa[e] = math.pi + th, 1.0 / radius
    return x, y, psi, kappa


def stadium_raceline(length: float = 10.0, radius: float = 2.0, step: float = 0.1,
                     half_width: float = 1.0, v: float = 3.0) -> Raceline:
    total = 2.0 * length + 2.0 * math.pi * radius
    n = int(round(total / step))
    h = total / n
    x, y, psi, kappa = stadium_points(length, radius, np.arange(n) * h)
    return Raceline(step=h, x=x, y=y, psi=psi, kappa=kappa, v=np.full(n, v),
                    d_left=np.full(n, half_width), d_right=np.full(n, half_width))


@pytest.fixture(scope="session")
def circle():
    return circle_raceline()


@pytest.fixture(scope="session")
def stadium():
    return stadium_raceline()


@pytest.fixture(scope="session")
def oval_assets():
    from racestack.harness.runner import load_assets
    return load_assets("oval")


@pytest.fixture(scope="session")
def reference_assets():
    from racestack.harness.runner import load_assets
    return load_assets("reference")


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
