import math

import numpy as np
import pytest

from deadzone_rcac.errors import InvalidParameterError
from deadzone_rcac.mission import (
    MissionPlan,
    hilbert_d2xy,
    hilbert_waypoints,
    setpoints_at,
    write_waypoints_csv,
)


def hilbert_oracle(order):
    """Build the curve by recursive quadrant substitution."""
    if order == 0:
        return [(0, 0)]
    prev = hilbert_oracle(order - 1)
    m = 1 << (order - 1)
    return (
        [(y, x) for x, y in prev]
        + [(x, y + m) for x, y in prev]
        + [(x + m, y + m) for x, y in prev]
        + [(2 * m - 1 - y, m - 1 - x) for x, y in prev]
    )


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5])
def test_hilbert_matches_recursive_oracle(order):
    cells = [hilbert_d2xy(order, d) for d in range(4**order)]
    assert cells == hilbert_oracle(order)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_hilbert_is_a_space_filling_unit_step_path(order):
    cells = [hilbert_d2xy(order, d) for d in range(4**order)]
    n = 1 << order
    assert len(set(cells)) == n * n
    steps = np.abs(np.diff(np.array(cells), axis=0)).sum(axis=1)
    assert np.all(steps == 1)
    assert cells[0] == (0, 0) and cells[-1] == (n - 1, 0)


def test_waypoints_scaling_and_altitude():
    wps = hilbert_waypoints(2, 6.0, 2.0)
    assert len(wps) == 16
    arr = np.array(wps)
    assert arr[:, 0].min() == 0.0 and arr[:, 0].max() == pytest.approx(6.0)
    assert np.all(arr[:, 2] == -2.0)
    legs = np.linalg.norm(np.diff(arr, axis=0), axis=1)
    np.testing.assert_allclose(legs, 2.0)


@pytest.mark.parametrize("order,side", [(0, 1.0), (7, 1.0), (2, 0.0)])
def test_waypoints_validation(order, side):
    with pytest.raises(InvalidParameterError):
        hilbert_waypoints(order, side, 1.0)


def test_plan_timing_and_endpoints():
    plan = MissionPlan.hilbert(cruise_speed=1.0, hold_time_s=5.0, ramp_s=0.5)
    # 15 legs of 2 m, each 2 m / 1 m/s plus one ramp's worth of slow-down
    assert plan.path_length == pytest.approx(30.0)
    assert plan.end_time == pytest.approx(5.0 + 15 * 2.5)
    start = plan.setpoints_at(0.0)
    np.testing.assert_array_equal(start.position_sp, [0.0, 0.0, -2.0])
    np.testing.assert_array_equal(start.velocity_sp, 0.0)
    end = plan.setpoints_at(plan.end_time + 10)
    np.testing.assert_array_equal(end.position_sp, plan.waypoints[-1])


def test_setpoints_stop_at_every_waypoint():
    plan = MissionPlan.hilbert()
    for t0, duration, *_ in plan._legs:
        sp = plan.setpoints_at(t0 + duration - 1e-9)
        assert np.linalg.norm(sp.velocity_sp) < 1e-6


def test_position_is_integral_of_velocity():
    plan = MissionPlan.hilbert()
    dt = 1e-3
    ts = np.arange(0.0, plan.end_time, dt)
    pos = np.array([plan.setpoints_at(t).position_sp for t in ts])
    vel = np.array([plan.setpoints_at(t).velocity_sp for t in ts])
    integrated = pos[0] + np.cumsum(0.5 * (vel[1:] + vel[:-1]) * dt, axis=0)
    assert np.max(np.abs(integrated - pos[1:])) < 1e-2
    assert np.max(np.linalg.norm(vel, axis=1)) <= 1.0 + 1e-12


def test_short_leg_uses_triangular_profile():
    plan = MissionPlan(waypoints=[[0, 0, 0], [0.1, 0, 0]], cruise_speed=1.0, hold_time_s=0.0, ramp_s=0.5)
    t_acc = math.sqrt(0.1 / 2.0)
    assert plan.end_time == pytest.approx(2 * t_acc)
    peak = plan.setpoints_at(t_acc)
    assert np.linalg.norm(peak.velocity_sp) == pytest.approx(2.0 * t_acc)


def test_module_level_setpoints_and_validation(tmp_path):
    plan = MissionPlan.hilbert()
    assert setpoints_at(7.0, plan).t == 7.0
    with pytest.raises(InvalidParameterError):
        plan.setpoints_at(-1.0)
    with pytest.raises(InvalidParameterError):
        MissionPlan(waypoints=[[0, 0, 0]])
    with pytest.raises(InvalidParameterError):
        MissionPlan(waypoints=[[0, 0, 0], [1, 0, 0]], cruise_speed=0.0)
    path = tmp_path / "wp.csv"
    write_waypoints_csv(path, plan.waypoints)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,north,east,down" and len(lines) == 17
