from __future__ import annotations
from typing import Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator


Interval = tuple[float, float]


# ── Scenario document ─────────────────────────────────────────────────────────

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LaneletIn(_Strict):
    id: int = Field(..., ge=0)
    left: Optional[int] = None
    right: Optional[int] = None
    successors: list[int] = []
    speed_limit: float = Field(..., gt=0.0)
    width: float = Field(..., gt=0.0)
    centerline: list[tuple[float, float]] = Field(..., min_length=2)


class TrajectoryPointIn(_Strict):
    t: float
    x: float
    y: float
    orientation: float = 0.0


class ObstacleIn(_Strict):
    id: int
    length: float = Field(..., gt=0.0)
    width: float = Field(..., gt=0.0)
    trajectory: list[TrajectoryPointIn] = Field(..., min_length=1)


class InitialStateIn(_Strict):
    x: float
    y: float
    v: float = Field(..., ge=0.0)
    orientation: float = 0.0


class GoalIn(_Strict):
    lanelet: int
    xi: Interval
    v: Interval
    time: Interval

    @field_validator("xi", "v", "time")
    @classmethod
    def _ordered(cls, value: Interval) -> Interval:
        if value[0] > value[1]:
            raise ValueError(f"interval [{value[0]}, {value[1]}] is empty")
        return value


class PlanningProblemIn(_Strict):
    initial: InitialStateIn
    goal: GoalIn


class VehicleIn(_Strict):
    length: Optional[float] = Field(default=None, gt=0.0)
    width: Optional[float] = Field(default=None, gt=0.0)
    wheelbase: Optional[float] = Field(default=None, gt=0.0)
    a_max: Optional[float] = Field(default=None, gt=0.0)
    s_max: Optional[float] = Field(default=None, gt=0.0, lt=1.5707963267948966)


class ConfigIn(_Strict):
    dt: Optional[float] = Field(default=None, gt=0.0)
    d_min: Optional[float] = Field(default=None, ge=0.0)
    a_des: Optional[float] = Field(default=None, gt=0.0)
    w_change: Optional[float] = Field(default=None, ge=0.0)
    w_profile: Optional[float] = Field(default=None, ge=0.0)
    w_safe: Optional[float] = Field(default=None, ge=0.0)
    safe_time_gap: Optional[float] = Field(default=None, ge=0.0)
    min_lateral_width: Optional[float] = Field(default=None, ge=0.0)
    lateral_margin: Optional[float] = Field(default=None, ge=0.0)
    time_budget: Optional[float] = Field(default=None, gt=0.0)


class TrafficLightIn(_Strict):
    lanelet: int
    stop_xi: float
    red: list[Interval] = []


class LocationIn(_Strict):
    epsg: int


class ScenarioDocument(_Strict):
    name: str = "scenario"
    lanelets: list[LaneletIn] = Field(..., min_length=1)
    obstacles: list[ObstacleIn] = []
    planning_problem: PlanningProblemIn
    vehicle: VehicleIn = VehicleIn()
    config: ConfigIn = ConfigIn()
    traffic_lights: list[TrafficLightIn] = []
    location: Optional[LocationIn] = None


# ── Planning responses ────────────────────────────────────────────────────────

class AreaOut(BaseModel):
    lanelet: int
    step: int
    parts: list[list[list[float]]]      # convex parts -> vertices [xi, v]


class CorridorSummary(BaseModel):
    lanelets: list[int]
    n_change: int
    goal_step: int
    J: float
    d_profile: float
    safe_distance_penalty: float
    areas: list[AreaOut] = []


class TrajectorySampleOut(BaseModel):
    t: float
    x: float
    y: float
    v: float
    orientation: float
    xi: float
    eta: float
    lanelet: int


class PlanResponse(BaseModel):
    scenario: str
    status: Literal["solved", "no_corridor", "timeout"]
    corridor_count: int
    elapsed_ms: float
    corridor: Optional[CorridorSummary] = None
    trajectory: list[TrajectorySampleOut] = []


class CheckResult(BaseModel):
    valid: bool
    errors: list[str] = []
    lanelets: int = 0
    obstacles: int = 0


class SimSummary(BaseModel):
    reached: bool
    collided: bool
    ticks: int
    min_gap: Optional[float] = None
    mean_replan_ms: float
    p95_replan_ms: float
    fallback_ticks: int = 0
    reason: str = ""


class BatchRow(BaseModel):
    scenario: str
    ms_per_s: float
    solved: bool
    corridors: int
    n_change: Optional[int] = None
    J: Optional[float] = None
    collision: Optional[bool] = None
