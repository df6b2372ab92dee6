"""
Closed-loop harness: kinematic single-track plant, tracking controller,
constant-velocity obstacle prediction, periodic replanning and collision
monitoring.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Point, Polygon

from config import Settings, settings as default_settings
from models.errors import PlannerError
from models.scenario import (
    GoalSpec,
    InitialState,
    ObstacleState,
    ObstacleTimeline,
    Scenario,
    VehicleParams,
    rectangle_corners,
)
from services.freespace import effective_speed_limit
from services.geometry_service import find_lanelets, from_curvilinear
from services.planner import plan
from services.reference_traj import ReferenceTrajectory

logger = logging.getLogger(__name__)

SEPARATION_TOLERANCE = 1e-9


# ── Types ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    v: float
    orientation: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.orientation])


@dataclass(frozen=True)
class ControlInput:
    a: float
    s: float


@dataclass(frozen=True)
class ControllerGains:
    k_v: float = 1.5
    k_xi: float = 0.5
    lookahead_min: float = 3.0
    lookahead_gain: float = 0.5

    @classmethod
    def from_settings(cls, s: Settings = default_settings) -> "ControllerGains":
        return cls(k_v=s.k_v, k_xi=s.k_xi, lookahead_min=s.lookahead_min, lookahead_gain=s.lookahead_gain)


@dataclass(frozen=True)
class SimTick:
    t: float
    state: VehicleState
    control: ControlInput
    reference: tuple[float, float, float] | None   # x, y, v of the active reference sample
    min_gap: float
    friction_margin: float
    cross_track: float | None
    replan_ms: float | None = None
    fallback: bool = False


@dataclass
class SimLog:
    dt: float
    ticks: list[SimTick] = field(default_factory=list)
    reached: bool = False
    collided: bool = False
    reason: str = ""

    @property
    def replan_ms(self) -> list[float]:
        return [tk.replan_ms for tk in self.ticks if tk.replan_ms is not None]

    def summary(self) -> dict:
        replans = self.replan_ms
        gaps = [tk.min_gap for tk in self.ticks if math.isfinite(tk.min_gap)]
        return {
            "reached": self.reached,
            "collided": self.collided,
            "ticks": len(self.ticks),
            "min_gap": min(gaps) if gaps else None,
            "mean_replan_ms": float(np.mean(replans)) if replans else 0.0,
            "p95_replan_ms": float(np.percentile(replans, 95)) if replans else 0.0,
            "fallback_ticks": sum(1 for tk in self.ticks if tk.fallback),
            "reason": self.reason,
        }

    def max_cross_track(self) -> float:
        errs = [tk.cross_track for tk in self.ticks if tk.cross_track is not None and not tk.fallback]
        return max(errs, default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "t", "x", "y", "v", "orientation", "a", "s", "ref_x", "ref_y", "ref_v",
            "min_gap", "friction_margin", "cross_track", "replan_ms", "fallback",
        ])
        for tk in self.ticks:
            ref = tk.reference or ("", "", "")
            writer.writerow([
                f"{tk.t:.9g}", f"{tk.state.x:.9g}", f"{tk.state.y:.9g}", f"{tk.state.v:.9g}",
                f"{tk.state.orientation:.9g}", f"{tk.control.a:.9g}", f"{tk.control.s:.9g}",
                *(f"{r:.9g}" if r != "" else "" for r in ref),
                f"{tk.min_gap:.9g}", f"{tk.friction_margin:.9g}",
                "" if tk.cross_track is None else f"{tk.cross_track:.9g}",
                "" if tk.replan_ms is None else f"{tk.replan_ms:.3f}",
                int(tk.fallback),
            ])
        return buf.getvalue()


# ── Plant ─────────────────────────────────────────────────────────────────────

def _derivative(z: np.ndarray, u: ControlInput, wheelbase: float) -> np.ndarray:
    _, _, v, phi = z
    return np.array([v * math.cos(phi), v * math.sin(phi), u.a, v / wheelbase * math.tan(u.s)])


def _rk4(z: np.ndarray, u: ControlInput, dt: float, wheelbase: float) -> np.ndarray:
    k1 = _derivative(z, u, wheelbase)
    k2 = _derivative(z + 0.5 * dt * k1, u, wheelbase)
    k3 = _derivative(z + 0.5 * dt * k2, u, wheelbase)
    k4 = _derivative(z + dt * k3, u, wheelbase)
    return z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_plant(state: VehicleState, u: ControlInput, dt: float, wheelbase: float) -> VehicleState:
    """One RK4 step of the kinematic single-track model; v never drops below 0."""
    stops = u.a < 0.0 and state.v + u.a * dt <= 0.0
    if stops:
        # integrate only until standstill
        dt = state.v / -u.a
    z = _rk4(state.as_array(), u, dt, wheelbase)
    v = 0.0 if stops else max(0.0, float(z[2]))
    return VehicleState(float(z[0]), float(z[1]), v, float(z[3]))


def friction_margin(state: VehicleState, u: ControlInput, vehicle: VehicleParams) -> float:
    yaw_rate = state.v / vehicle.wheelbase * math.tan(u.s)
    return vehicle.a_max - math.hypot(u.a, state.v * yaw_rate)


# ── Controller ────────────────────────────────────────────────────────────────

def _pursuit_steering(state: VehicleState, target: np.ndarray, vehicle: VehicleParams) -> float:
    dx, dy = target[0] - state.x, target[1] - state.y
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        return 0.0
    alpha = math.atan2(dy, dx) - state.orientation
    steer = math.atan(2.0 * vehicle.wheelbase * math.sin(alpha) / dist)
    return float(np.clip(steer, -vehicle.s_max, vehicle.s_max))


def _lookahead_point(reference: ReferenceTrajectory, state: VehicleState, distance: float) -> np.ndarray:
    path = reference.path()
    s0 = path.project(Point(state.x, state.y))
    remaining = path.length - s0
    if remaining >= distance:
        p = path.interpolate(s0 + distance)
        return np.array([p.x, p.y])
    end = reference.samples[-1]
    extra = distance - remaining
    return np.array([end.x + extra * math.cos(end.orientation), end.y + extra * math.sin(end.orientation)])


def track(
    reference: ReferenceTrajectory,
    state: VehicleState,
    t: float,
    vehicle: VehicleParams,
    gains: ControllerGains = ControllerGains(),
) -> ControlInput:
    """Feed-forward acceleration with speed/position feedback, pure-pursuit steering.

    `t` is measured from the reference's first sample.
    """
    i = min(max(int(round(t / reference.dt)), 0), len(reference.samples) - 1)
    ref = reference.samples[i]
    acc = reference.accelerations()
    a_ref = float(acc[i]) if i < len(acc) else 0.0
    c, s = math.cos(ref.orientation), math.sin(ref.orientation)
    along = c * (ref.x - state.x) + s * (ref.y - state.y)
    a = a_ref + gains.k_v * (ref.v - state.v) + gains.k_xi * along
    a = float(np.clip(a, -vehicle.a_max, vehicle.a_max))

    lookahead = max(gains.lookahead_min, gains.lookahead_gain * state.v)
    steer = _pursuit_steering(state, _lookahead_point(reference, state, lookahead), vehicle)
    return ControlInput(a, steer)


def _fallback(scenario: Scenario, state: VehicleState, gains: ControllerGains) -> ControlInput:
    """Full braking, steering towards the centerline of the current lanelet."""
    vehicle = scenario.vehicle
    steer = 0.0
    hits = find_lanelets(scenario.network, state.x, state.y, state.orientation)
    if hits:
        ll, xi, _ = hits[0]
        ahead = min(xi + max(gains.lookahead_min, gains.lookahead_gain * state.v), ll.length)
        x, y, _ = from_curvilinear(ll, ahead)
        if ahead > xi:
            steer = _pursuit_steering(state, np.array([x, y]), vehicle)
    return ControlInput(-vehicle.a_max, steer)


# ── Collision checking ────────────────────────────────────────────────────────

def _project(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    p = corners @ axis
    return float(p.min()), float(p.max())


def rectangles_overlap(c1: np.ndarray, c2: np.ndarray) -> bool:
    """Separating-axis test for two oriented rectangles; touching counts as overlap."""
    for corners in (c1, c2):
        for i in range(4):
            edge = corners[(i + 1) % 4] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            axis = axis / np.linalg.norm(axis)
            min1, max1 = _project(c1, axis)
            min2, max2 = _project(c2, axis)
            if max1 < min2 - SEPARATION_TOLERANCE or max2 < min1 - SEPARATION_TOLERANCE:
                return False
    return True


def collision_check(
    state: VehicleState, vehicle: VehicleParams, obstacles: list[ObstacleTimeline] | tuple, t: float
) -> tuple[bool, float]:
    ego = rectangle_corners(state.x, state.y, state.orientation, vehicle.length, vehicle.width)
    ego_poly = Polygon(ego)
    collided = False
    min_gap = math.inf
    for ob in obstacles:
        corners = ob.corners(t)
        if rectangles_overlap(ego, corners):
            collided = True
            min_gap = 0.0
        else:
            min_gap = min(min_gap, float(ego_poly.distance(Polygon(corners))))
    return collided, min_gap


# ── Closed loop ───────────────────────────────────────────────────────────────

def predict_constant_velocity(ob: ObstacleTimeline, t: float, horizon: float) -> ObstacleTimeline:
    """Obstacle timeline relative to t, extrapolated with its current velocity."""
    now = ob.state_at(t)
    vx, vy = ob.velocity_at(t)
    return ob.with_states([
        ObstacleState(0.0, now.x, now.y, now.orientation),
        ObstacleState(horizon, now.x + vx * horizon, now.y + vy * horizon, now.orientation),
    ])


def _subproblem_goals(scenario: Scenario, t: float, horizon: float) -> list[GoalSpec]:
    problem = scenario.problem
    goals = []
    lo, hi = problem.goal_time[0] - t, min(problem.goal_time[1] - t, horizon)
    if hi >= 0.0 and max(lo, 0.0) <= hi:
        goals.append(GoalSpec(
            lanelets=frozenset({problem.goal_lanelet}),
            xi=problem.goal_long,
            v=problem.goal_vel,
            time=(max(lo, 0.0), hi),
        ))
    v_top = max(ll.speed_limit for ll in scenario.network.lanelets)
    goals.append(GoalSpec(
        lanelets=scenario.network.lanelets_reaching(problem.goal_lanelet),
        xi=None,
        v=(0.0, v_top),
        time=(horizon, horizon),
    ))
    return goals


def _at_goal(scenario: Scenario, state: VehicleState) -> bool:
    problem = scenario.problem
    for ll, xi, _ in find_lanelets(scenario.network, state.x, state.y, state.orientation):
        if ll.id != problem.goal_lanelet:
            continue
        if (problem.goal_long[0] <= xi <= problem.goal_long[1]
                and problem.goal_vel[0] <= state.v <= problem.goal_vel[1]):
            return True
    return False


def _replan(scenario: Scenario, state: VehicleState, t: float, horizon: float) -> ReferenceTrajectory | None:
    hits = find_lanelets(scenario.network, state.x, state.y, state.orientation)
    if not hits:
        logger.debug("t=%.2f: ego off the network, no replan", t)
        return None
    v_cap = effective_speed_limit(hits[0][0], scenario.vehicle.a_max)
    v0 = min(state.v, v_cap)
    if v0 < state.v:
        logger.warning("t=%.2f: initial speed %.3f clamped to %.3f", t, state.v, v0)
    sub = scenario.replace(
        obstacles=tuple(predict_constant_velocity(ob, t, horizon) for ob in scenario.obstacles),
        problem=replace(scenario.problem, initial=InitialState(state.x, state.y, v0, state.orientation)),
        traffic_lights=tuple(
            replace(tl, red=tuple((a - t, b - t) for a, b in tl.red)) for tl in scenario.traffic_lights
        ),
    )
    for goal in _subproblem_goals(scenario, t, horizon):
        try:
            result = plan(sub, goal)
        except PlannerError as e:
            logger.debug("t=%.2f: planning failed: %s", t, e)
            continue
        if result.solved:
            return result.reference
    return None


def run_closed_loop(
    scenario: Scenario,
    plan_horizon: float = 3.0,
    replan_period: float = 0.3,
    sim_dt: float = 0.01,
    max_time: float | None = None,
    gains: ControllerGains | None = None,
) -> SimLog:
    gains = gains or ControllerGains.from_settings()
    vehicle = scenario.vehicle
    max_time = scenario.problem.goal_time[1] if max_time is None else max_time
    init = scenario.problem.initial
    state = VehicleState(init.x, init.y, init.v, init.orientation)
    log = SimLog(dt=sim_dt)

    reference: ReferenceTrajectory | None = None
    ref_t0 = 0.0
    next_replan = 0.0
    warned_friction = False
    n_ticks = int(round(max_time / sim_dt))

    for k in range(n_ticks + 1):
        t = k * sim_dt
        replan_ms = None
        if t >= next_replan - 1e-9:
            started = time.perf_counter()
            reference = _replan(scenario, state, t, plan_horizon)
            replan_ms = (time.perf_counter() - started) * 1e3
            ref_t0 = t
            next_replan += replan_period

        fallback = reference is None
        if fallback:
            u = _fallback(scenario, state, gains)
            ref_view, cross = None, None
        else:
            u = track(reference, state, t - ref_t0, vehicle, gains)
            r = reference.sample_at(t - ref_t0)
            ref_view = (r.x, r.y, r.v)
            cross = float(reference.path().distance(Point(state.x, state.y)))

        collided, gap = collision_check(state, vehicle, scenario.obstacles, t)
        margin = friction_margin(state, u, vehicle)
        if margin < 0.0 and not warned_friction:
            logger.warning("t=%.2f: friction circle exceeded by %.3f m/s^2", t, -margin)
            warned_friction = True
        log.ticks.append(SimTick(t, state, u, ref_view, gap, margin, cross, replan_ms, fallback))

        if collided:
            log.collided, log.reason = True, "collision"
            break
        if _at_goal(scenario, state):
            log.reached, log.reason = True, "goal"
            break
        if fallback and state.v == 0.0:
            log.reason = "stopped"
            break
        state = step_plant(state, u, sim_dt, vehicle.wheelbase)
    else:
        log.reason = "timeout"

    logger.info("Closed loop ended after %d ticks: %s", len(log.ticks), log.reason)
    return log
