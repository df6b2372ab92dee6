from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import networkx as nx
import numpy as np
from shapely.geometry import LineString, Polygon

from config import Settings, settings as default_settings


# ── Road network ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Lanelet:
    id: int
    centerline: tuple[tuple[float, float], ...]
    width: float
    speed_limit: float
    left: int | None = None
    right: int | None = None
    successors: tuple[int, ...] = ()

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.centerline, dtype=float)

    @cached_property
    def segment_lengths(self) -> np.ndarray:
        return np.hypot(*np.diff(self.vertices, axis=0).T)

    @cached_property
    def arc_lengths(self) -> np.ndarray:
        """Arc length at every centerline vertex, starting at 0."""
        return np.concatenate(([0.0], np.cumsum(self.segment_lengths)))

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1])

    @cached_property
    def headings(self) -> np.ndarray:
        d = np.diff(self.vertices, axis=0)
        return np.arctan2(d[:, 1], d[:, 0])

    @cached_property
    def line(self) -> LineString:
        return LineString(self.centerline)

    @cached_property
    def strip(self) -> Polygon:
        return self.line.buffer(self.width / 2.0, cap_style="flat", join_style="mitre")


@dataclass(frozen=True)
class RoadNetwork:
    lanelets: tuple[Lanelet, ...]

    @cached_property
    def index(self) -> dict[int, Lanelet]:
        return {ll.id: ll for ll in self.lanelets}

    def __getitem__(self, lanelet_id: int) -> Lanelet:
        return self.index[lanelet_id]

    def __contains__(self, lanelet_id: object) -> bool:
        return lanelet_id in self.index

    @cached_property
    def graph(self) -> nx.DiGraph:
        """Lanelet graph; edges carry kind = left | right | successor."""
        g = nx.DiGraph()
        g.add_nodes_from(ll.id for ll in self.lanelets)
        for ll in self.lanelets:
            for suc in ll.successors:
                g.add_edge(ll.id, suc, kind="successor")
            if ll.left is not None:
                g.add_edge(ll.id, ll.left, kind="left")
            if ll.right is not None:
                g.add_edge(ll.id, ll.right, kind="right")
        return g

    def neighbours(self, lanelet_id: int) -> list[tuple[str, int]]:
        ll = self[lanelet_id]
        out: list[tuple[str, int]] = []
        if ll.left is not None:
            out.append(("left", ll.left))
        if ll.right is not None:
            out.append(("right", ll.right))
        out.extend(("successor", s) for s in ll.successors)
        return out

    def lanelets_reaching(self, target: int) -> frozenset[int]:
        """Lanelets from which `target` can be reached, target included."""
        return frozenset(nx.ancestors(self.graph, target) | {target})


# ── Obstacles ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ObstacleState:
    t: float
    x: float
    y: float
    orientation: float


@dataclass(frozen=True)
class ObstacleTimeline:
    id: int
    length: float
    width: float
    states: tuple[ObstacleState, ...]

    @cached_property
    def _times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @cached_property
    def _orientations(self) -> np.ndarray:
        return np.unwrap([s.orientation for s in self.states])

    def state_at(self, t: float) -> ObstacleState:
        """Linear interpolation between samples, held constant outside them."""
        ts = self._times
        x = float(np.interp(t, ts, [s.x for s in self.states]))
        y = float(np.interp(t, ts, [s.y for s in self.states]))
        phi = float(np.interp(t, ts, self._orientations))
        return ObstacleState(t=t, x=x, y=y, orientation=phi)

    def velocity_at(self, t: float) -> tuple[float, float]:
        """Velocity vector of the sample interval containing t (zero outside)."""
        ts = self._times
        if len(ts) < 2 or t < ts[0] or t > ts[-1]:
            return 0.0, 0.0
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        a, b = self.states[i], self.states[i + 1]
        dt = b.t - a.t
        return (b.x - a.x) / dt, (b.y - a.y) / dt

    def corners(self, t: float) -> np.ndarray:
        s = self.state_at(t)
        return rectangle_corners(s.x, s.y, s.orientation, self.length, self.width)

    def footprint(self, t: float) -> Polygon:
        return Polygon(self.corners(t))

    def with_states(self, states: list[ObstacleState]) -> "ObstacleTimeline":
        return ObstacleTimeline(id=self.id, length=self.length, width=self.width, states=tuple(states))


def rectangle_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle, counter-clockwise, shape (4, 2)."""
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    half = np.array([
        [length / 2, -width / 2],
        [length / 2, width / 2],
        [-length / 2, width / 2],
        [-length / 2, -width / 2],
    ])
    return half @ rot.T + np.array([x, y])


# ── Rules ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrafficLightRule:
    lanelet: int
    stop_xi: float
    red: tuple[tuple[float, float], ...]

    STOP_BAND = 0.5

    @property
    def blocked(self) -> tuple[float, float]:
        return self.stop_xi - self.STOP_BAND, self.stop_xi

    def is_red(self, t: float) -> bool:
        return any(a <= t <= b for a, b in self.red)


# ── Vehicle / problem / planner parameters ───────────────────────────────────

@dataclass(frozen=True)
class VehicleParams:
    length: float
    width: float
    wheelbase: float
    a_max: float
    s_max: float

    @classmethod
    def from_settings(cls, s: Settings = default_settings) -> "VehicleParams":
        return cls(
            length=s.vehicle_length,
            width=s.vehicle_width,
            wheelbase=s.wheelbase,
            a_max=s.a_max,
            s_max=s.s_max,
        )


@dataclass(frozen=True)
class InitialState:
    x: float
    y: float
    v: float
    orientation: float


@dataclass(frozen=True)
class PlanningProblem:
    initial: InitialState
    goal_lanelet: int
    goal_long: tuple[float, float]
    goal_vel: tuple[float, float]
    goal_time: tuple[float, float]


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.1
    d_min: float = 1.0
    a_des: float = 1.0
    w_change: float = 10.0
    w_profile: float = 1.0
    min_lateral_width: float = 0.0
    time_budget: float = 10.0
    lateral_margin: float = 0.25
    w_safe: float = 0.0
    safe_time_gap: float = 1.0

    @classmethod
    def from_settings(cls, s: Settings = default_settings) -> "PlannerConfig":
        return cls(
            dt=s.dt,
            d_min=s.d_min,
            a_des=s.a_des,
            w_change=s.w_change,
            w_profile=s.w_profile,
            min_lateral_width=s.min_lateral_width,
            time_budget=s.time_budget,
            lateral_margin=s.lateral_margin,
            w_safe=s.w_safe,
            safe_time_gap=s.safe_time_gap,
        )

    def steps_for(self, t: float) -> int:
        """Number of steps covering t seconds, ⌈t/Δt⌉."""
        return max(0, math.ceil(t / self.dt - 1e-9))


@dataclass(frozen=True)
class GoalSpec:
    """Goal predicate evaluated by the corridor search.

    `xi` of None means the whole lanelet; `time` is relative to planning start.
    """
    lanelets: frozenset[int]
    xi: tuple[float, float] | None
    v: tuple[float, float]
    time: tuple[float, float]

    @classmethod
    def from_problem(cls, problem: PlanningProblem) -> "GoalSpec":
        return cls(
            lanelets=frozenset({problem.goal_lanelet}),
            xi=problem.goal_long,
            v=problem.goal_vel,
            time=problem.goal_time,
        )


@dataclass(frozen=True)
class Scenario:
    network: RoadNetwork
    obstacles: tuple[ObstacleTimeline, ...]
    problem: PlanningProblem
    vehicle: VehicleParams
    config: PlannerConfig
    traffic_lights: tuple[TrafficLightRule, ...] = ()
    epsg: int | None = None
    name: str = "scenario"

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)
