import csv
import io
import math

import numpy as np
import pytest

from models.scenario import ObstacleState, ObstacleTimeline, VehicleParams, rectangle_corners
from services.reference_traj import ReferenceTrajectory, TrajectorySample
from services.simulator import (
    ControlInput,
    ControllerGains,
    VehicleState,
    _subproblem_goals,
    collision_check,
    friction_margin,
    predict_constant_velocity,
    rectangles_overlap,
    run_closed_loop,
    step_plant,
    track,
)

CAR = VehicleParams(length=4.5, width=2.0, wheelbase=2.6, a_max=6.0, s_max=0.7)


# ── Plant ─────────────────────────────────────────────────────────────────────

def test_plant_constant_acceleration():
    nxt = step_plant(VehicleState(0.0, 0.0, 10.0, 0.0), ControlInput(2.0, 0.0), 0.1, 2.6)
    assert nxt.x == pytest.approx(1.01)
    assert nxt.y == pytest.approx(0.0)
    assert nxt.v == pytest.approx(10.2)


def test_plant_stops_at_standstill():
    nxt = step_plant(VehicleState(0.0, 0.0, 1.0, 0.0), ControlInput(-6.0, 0.0), 0.1, 2.6)
    assert nxt.v == 0.0
    assert nxt.x == pytest.approx(1.0 / 12.0)
    assert step_plant(nxt, ControlInput(-6.0, 0.0), 0.1, 2.6).x == nxt.x


def test_plant_turns_with_steering():
    nxt = step_plant(VehicleState(0.0, 0.0, 10.0, 0.0), ControlInput(0.0, 0.2), 0.1, 2.6)
    assert nxt.orientation == pytest.approx(10.0 / 2.6 * math.tan(0.2) * 0.1, rel=1e-9)
    assert nxt.y > 0.0


def _integrate(h, t_end=1.0):
    state = VehicleState(0.0, 0.0, 10.0, 0.0)
    for _ in range(int(round(t_end / h))):
        state = step_plant(state, ControlInput(0.5, 0.3), h, 2.6)
    return state


def test_plant_converges_at_fourth_order():
    exact = _integrate(0.1 / 64)
    errors = [
        math.hypot(s.x - exact.x, s.y - exact.y) for s in (_integrate(0.1), _integrate(0.05))
    ]
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_friction_margin():
    assert friction_margin(VehicleState(0.0, 0.0, 10.0, 0.0), ControlInput(6.0, 0.0), CAR) == pytest.approx(0.0)
    assert friction_margin(VehicleState(0.0, 0.0, 0.0, 0.0), ControlInput(-2.0, 0.5), CAR) == pytest.approx(4.0)
    steer = math.atan(0.3 * CAR.wheelbase / 10.0)
    margin = friction_margin(VehicleState(0.0, 0.0, 10.0, 0.0), ControlInput(3.0, steer), CAR)
    assert margin == pytest.approx(6.0 - math.sqrt(18.0))


# ── Controller ────────────────────────────────────────────────────────────────

def _line_reference(v=10.0, n=31, dt=0.1):
    samples = tuple(
        TrajectorySample(t=i * dt, x=i * dt * v, y=0.0, v=v, orientation=0.0, xi=i * dt * v, eta=0.0, lanelet=1)
        for i in range(n)
    )
    return ReferenceTrajectory(samples, dt)


def test_speed_error_feedback():
    u = track(_line_reference(), VehicleState(10.0, 0.0, 9.0, 0.0), 1.0, CAR)
    assert u.a == pytest.approx(1.5)
    assert u.s == pytest.approx(0.0)


def test_position_error_feedback_and_clipping():
    gains = ControllerGains(k_v=1.5, k_xi=0.5)
    u = track(_line_reference(), VehicleState(8.0, 0.0, 10.0, 0.0), 1.0, CAR, gains)
    assert u.a == pytest.approx(1.0)
    u = track(_line_reference(), VehicleState(10.0, 0.0, 0.0, 0.0), 1.0, CAR, gains)
    assert u.a == CAR.a_max


def test_steers_back_to_the_path():
    u = track(_line_reference(), VehicleState(10.0, -1.0, 10.0, 0.0), 1.0, CAR)
    assert 0.0 < u.s <= CAR.s_max


# ── Collision checking ────────────────────────────────────────────────────────

def test_coincident_rectangles_collide():
    c = rectangle_corners(0.0, 0.0, 0.3, 4.0, 2.0)
    assert rectangles_overlap(c, c)


def test_touching_counts_as_collision():
    a = rectangle_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    b = rectangle_corners(4.0, 0.0, 0.0, 4.0, 2.0)
    assert rectangles_overlap(a, b)
    c = rectangle_corners(4.01, 0.0, 0.0, 4.0, 2.0)
    assert not rectangles_overlap(a, c)


def test_rotated_rectangles_separated_on_edge_axis():
    a = rectangle_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    b = rectangle_corners(3.3, 2.3, math.pi / 4, 2.0, 2.0)
    assert not rectangles_overlap(a, b)


def test_collision_check_gap():
    ob = ObstacleTimeline(1, 4.0, 2.0, (ObstacleState(0.0, 10.0, 0.0, 0.0),))
    collided, gap = collision_check(VehicleState(0.0, 0.0, 10.0, 0.0), CAR, [ob], 0.0)
    assert not collided
    assert gap == pytest.approx(5.75)
    collided, gap = collision_check(VehicleState(7.0, 0.0, 10.0, 0.0), CAR, [ob], 0.0)
    assert collided and gap == 0.0
    assert collision_check(VehicleState(0.0, 0.0, 0.0, 0.0), CAR, [], 0.0) == (False, math.inf)


# ── Replanning helpers ────────────────────────────────────────────────────────

def test_constant_velocity_prediction(load):
    (bicycle,) = load("overtake").obstacles
    pred = predict_constant_velocity(bicycle, 2.0, 3.0)
    assert pred.state_at(0.0).x == pytest.approx(31.0)
    assert pred.state_at(3.0).x == pytest.approx(40.0)
    assert pred.state_at(3.0).y == pytest.approx(1.5)


def test_subproblem_goals(load):
    scenario = load("straight")
    strict, relaxed = _subproblem_goals(scenario, 0.0, 3.0)
    assert strict.time == (0.0, 3.0)
    assert strict.xi == (30.0, 190.0)
    assert relaxed.time == (3.0, 3.0)
    assert relaxed.xi is None
    (only,) = _subproblem_goals(scenario, 5.0, 3.0)
    assert only.time == (3.0, 3.0)


# ── Closed loop ───────────────────────────────────────────────────────────────

def test_closed_loop_reaches_goal(load):
    log = run_closed_loop(load("straight"))
    assert log.reached and not log.collided
    assert log.reason == "goal"
    assert log.ticks[-1].t < 3.0
    assert log.ticks[-1].state.x >= 30.0 - 1e-6
    assert log.replan_ms
    assert log.max_cross_track() < 0.1
    summary = log.summary()
    assert summary["reached"] and summary["fallback_ticks"] == 0
    assert summary["min_gap"] is None


def test_closed_loop_brakes_when_blocked(load):
    log = run_closed_loop(load("blocked"))
    assert log.reason == "stopped"
    assert not log.collided
    assert log.ticks[-1].state.v == 0.0
    assert log.ticks[-1].t == pytest.approx(1.67, abs=0.02)
    assert all(tk.fallback for tk in log.ticks)
    assert log.summary()["min_gap"] > 0.0


def test_closed_loop_timeout(load):
    log = run_closed_loop(load("straight"), max_time=0.5)
    assert log.reason == "timeout"
    assert len(log.ticks) == 51


def test_sim_csv(load):
    log = run_closed_loop(load("straight"), max_time=0.2)
    rows = list(csv.DictReader(io.StringIO(log.to_csv())))
    assert len(rows) == len(log.ticks)
    assert rows[0]["replan_ms"] != ""
    assert rows[1]["replan_ms"] == ""
    assert float(rows[0]["x"]) == pytest.approx(10.0)


@pytest.mark.slow
def test_closed_loop_passes_bicycle(load):
    scenario = load("overtake")
    log = run_closed_loop(scenario)
    assert not log.collided
    assert log.reason == "goal"
    gaps = np.array([tk.min_gap for tk in log.ticks])
    assert gaps.min() >= scenario.config.d_min - 0.1
    assert log.summary()["fallback_ticks"] == 0
    (bicycle,) = scenario.obstacles
    end = log.ticks[-1]
    assert end.state.x - scenario.vehicle.length / 2.0 > bicycle.state_at(end.t).x + bicycle.length / 2.0


def _trace(log):
    return [
        (tk.t, tk.state, tk.control, tk.reference, tk.min_gap, tk.cross_track, tk.fallback)
        for tk in log.ticks
    ]


@pytest.mark.parametrize("name", ["straight", pytest.param("lane_change", marks=pytest.mark.slow)])
def test_closed_loop_is_deterministic(load, name):
    first = run_closed_loop(load(name))
    second = run_closed_loop(load(name))
    assert first.reason == second.reason
    assert _trace(first) == _trace(second)
