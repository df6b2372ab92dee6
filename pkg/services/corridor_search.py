"""
Breadth-first exploration of the lanelet graph with per-lanelet drivable
areas, goal detection, corridor cost and selection.
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from models.errors import BudgetExceeded, OutOfLaneletError, PreconditionError
from models.scenario import GoalSpec, PlannerConfig, Scenario
from services.drivable_area import AreaTimeline, Transition, compute_lanelet_area
from services.freespace import FreeSpaceTable, free_at
from services.geometry_service import find_lanelets, occupied_long_intervals
from services.setops import PVBox, PVPoint, PVRegion, closest_point, intersect

logger = logging.getLogger(__name__)

COVER_TOLERANCE = 1e-6


# ── Corridor types ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CorridorNode:
    """One lanelet of a corridor. `offset` maps lanelet ξ to corridor ξ."""
    lanelet: int
    timeline: AreaTimeline
    entry: Transition | None
    offset: float = 0.0
    parent: "CorridorNode | None" = field(default=None, repr=False, compare=False)

    def chain(self) -> tuple["CorridorNode", ...]:
        nodes = []
        node: CorridorNode | None = self
        while node is not None:
            nodes.append(node)
            node = node.parent
        return tuple(reversed(nodes))


@dataclass(frozen=True)
class Corridor:
    nodes: tuple[CorridorNode, ...]
    goal_step: int
    goal_box: PVBox
    horizon: int

    @property
    def n_change(self) -> int:
        return sum(1 for n in self.nodes if n.entry is not None and n.entry.is_lane_change)

    @property
    def lanelet_ids(self) -> tuple[int, ...]:
        return tuple(n.lanelet for n in self.nodes)

    @property
    def entry_steps(self) -> tuple[int, ...]:
        return tuple(n.timeline.start for n in self.nodes)

    @property
    def last(self) -> CorridorNode:
        return self.nodes[-1]

    def areas_at(self, step: int) -> list[tuple[CorridorNode, PVRegion]]:
        return [(n, n.timeline.at(step)) for n in self.nodes if step in n.timeline]


@dataclass(frozen=True)
class SearchResult:
    corridors: list[Corridor]
    nodes_expanded: int
    timed_out: bool
    elapsed: float


# ── Search ────────────────────────────────────────────────────────────────────

@dataclass
class _QueueEntry:
    lanelet: int
    seeds: list[tuple[int, PVRegion]]
    parent: CorridorNode | None
    entry: Transition | None
    offset: float


def goal_steps(goal: GoalSpec, dt: float, horizon: int) -> range:
    lo = max(0, math.ceil(goal.time[0] / dt - 1e-9))
    hi = min(horizon, math.floor(goal.time[1] / dt + 1e-9))
    return range(lo, hi + 1)


class CorridorSearch:
    """Queue-driven corridor enumeration for one planning problem."""

    def __init__(
        self,
        scenario: Scenario,
        goal: GoalSpec | None = None,
        free: FreeSpaceTable | None = None,
        prune: bool = True,
        time_budget: float | None = None,
    ):
        self.scenario = scenario
        self.goal = goal or GoalSpec.from_problem(scenario.problem)
        self.free = free or FreeSpaceTable(
            scenario.network, scenario.obstacles, scenario.vehicle, scenario.config,
            scenario.traffic_lights,
        )
        self.prune = prune
        self.time_budget = scenario.config.time_budget if time_budget is None else time_budget
        self.horizon = scenario.config.steps_for(self.goal.time[1])
        self._coverage: dict[tuple[int, int], list[PVRegion]] = {}

    def initial_seed(self) -> tuple[int, PVPoint]:
        init = self.scenario.problem.initial
        hits = find_lanelets(self.scenario.network, init.x, init.y, init.orientation)
        if not hits:
            raise OutOfLaneletError(f"initial state ({init.x}, {init.y}) lies on no lanelet")
        lanelet, xi, _ = hits[0]
        return lanelet.id, PVPoint(xi, init.v)

    def run(self) -> SearchResult:
        started = time.perf_counter()
        lanelet_id, z0 = self.initial_seed()
        if not free_at(self.free.cells(lanelet_id, 0), z0.xi, z0.v):
            logger.warning(
                "Initial state (xi=%.3f, v=%.3f) on lanelet %d is outside the free space",
                z0.xi, z0.v, lanelet_id,
            )
            return SearchResult([], 0, False, time.perf_counter() - started)

        queue = deque([_QueueEntry(lanelet_id, [(0, PVRegion.point(z0.xi, z0.v))], None, None, 0.0)])
        corridors: list[Corridor] = []
        expanded = 0
        timed_out = False
        network = self.scenario.network

        while queue:
            if time.perf_counter() - started > self.time_budget:
                timed_out = True
                logger.info("Corridor search hit its %.1f s budget with %d queued", self.time_budget, len(queue))
                break
            item = queue.popleft()
            lanelet = network[item.lanelet]
            try:
                timeline, transitions = compute_lanelet_area(
                    lanelet, item.seeds, self.free, self.horizon, self.scenario.vehicle, self.scenario.config,
                    deadline=started + self.time_budget,
                )
            except BudgetExceeded as exc:
                timed_out = True
                logger.info("Corridor search hit its %.1f s budget: %s", self.time_budget, exc)
                break
            expanded += 1
            node = CorridorNode(item.lanelet, timeline, item.entry, item.offset, item.parent)
            for step, area in timeline.items():
                self._coverage.setdefault((item.lanelet, step), []).append(area)

            corridor = self._goal_corridor(node)
            if corridor is not None:
                corridors.append(corridor)

            for tr in transitions:
                if self.prune and self._covered(tr):
                    logger.debug("Pruned %s transition %d->%d at steps %d..%d",
                                 tr.kind, tr.source, tr.target, tr.first, tr.last)
                    continue
                offset = item.offset + lanelet.length if tr.kind == "successor" else item.offset
                queue.append(_QueueEntry(tr.target, tr.seed_items(), node, tr, offset))

        elapsed = time.perf_counter() - started
        logger.info(
            "Corridor search: %d nodes expanded, %d corridors, %.1f ms%s",
            expanded, len(corridors), elapsed * 1e3, " (timed out)" if timed_out else "",
        )
        return SearchResult(corridors, expanded, timed_out, elapsed)

    def _covered(self, tr: Transition) -> bool:
        for step, seed in tr.seed_items():
            known = self._coverage.get((tr.target, step))
            if not known:
                return False
            if not PVRegion(tuple(p for r in known for p in r.parts)).covers(seed, COVER_TOLERANCE):
                return False
        return True

    def goal_box(self, lanelet_id: int) -> PVBox:
        xi = self.goal.xi if self.goal.xi is not None else (0.0, self.scenario.network[lanelet_id].length)
        return PVBox(xi=tuple(xi), v=tuple(self.goal.v))

    def _goal_corridor(self, node: CorridorNode) -> Corridor | None:
        if node.lanelet not in self.goal.lanelets:
            return None
        box = self.goal_box(node.lanelet)
        target = PVRegion.from_box(box)
        for step in reversed(goal_steps(self.goal, self.scenario.config.dt, self.horizon)):
            if step in node.timeline and not intersect(node.timeline.at(step), target).is_empty:
                logger.debug("Goal reached on lanelet %d at step %d", node.lanelet, step)
                return Corridor(node.chain(), step, box, self.horizon)
        return None


def find_corridors(scenario: Scenario, goal: GoalSpec | None = None, **kwargs) -> list[Corridor]:
    return CorridorSearch(scenario, goal, **kwargs).run().corridors


# ── Desired profile ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ProfileLeg:
    lanelet: int
    offset: float
    v_max: float
    kind: str            # "initial" | "left" | "right" | "successor"
    entry_step: int


@dataclass(frozen=True)
class DesiredProfile:
    """Desired states in corridor coordinates, one per step."""
    states: tuple[PVPoint, ...]
    lanelets: tuple[int, ...]
    offsets: tuple[float, ...]

    def local(self, step: int, offset: float) -> PVPoint:
        z = self.states[step]
        return PVPoint(z.xi - offset, z.v)


def desired_profile(
    xi0: float, v0: float, legs: Sequence[ProfileLeg], horizon: int, config: PlannerConfig
) -> DesiredProfile:
    """Accelerate at most a_des towards the governing lanelet's speed limit.

    Successor legs take over once the profile passes their offset, lane-change
    legs at their entry step.
    """
    dt, a_des = config.dt, config.a_des
    k = 0
    xi, v = xi0, v0
    states, lanelets, offsets = [], [], []
    for i in range(horizon + 1):
        while k + 1 < len(legs):
            nxt = legs[k + 1]
            if nxt.kind == "successor" and xi >= nxt.offset:
                k += 1
            elif nxt.kind != "successor" and i >= nxt.entry_step:
                k += 1
            else:
                break
        leg = legs[k]
        states.append(PVPoint(xi, v))
        lanelets.append(leg.lanelet)
        offsets.append(leg.offset)
        a = max(-a_des, min(a_des, (leg.v_max - v) / dt))
        xi, v = xi + v * dt + 0.5 * a * dt * dt, v + a * dt
    return DesiredProfile(tuple(states), tuple(lanelets), tuple(offsets))


def corridor_legs(corridor: Corridor, free: FreeSpaceTable) -> list[ProfileLeg]:
    return [
        ProfileLeg(
            lanelet=n.lanelet,
            offset=n.offset,
            v_max=free.v_eff(n.lanelet),
            kind=n.entry.kind if n.entry is not None else "initial",
            entry_step=n.timeline.start,
        )
        for n in corridor.nodes
    ]


def profile_for(corridor: Corridor, free: FreeSpaceTable, z0: PVPoint, config: PlannerConfig) -> DesiredProfile:
    return desired_profile(z0.xi, z0.v, corridor_legs(corridor, free), corridor.horizon, config)


# ── Cost ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CostBreakdown:
    n_change: int
    d_profile: float
    safe_distance_penalty: float
    J: float


class StepPenalty(Protocol):
    def __call__(self, step: int, lanelet_id: int, z: PVPoint) -> float: ...


class SafeDistancePenalty:
    """Soft penalty for following the nearest leader closer than d_safe."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        cfg = scenario.config
        self.weight = cfg.w_safe
        self.d_min = cfg.d_min
        self.time_gap = cfg.safe_time_gap
        self.half_length = scenario.vehicle.length / 2.0

    def gap(self, step: int, lanelet_id: int, z: PVPoint) -> float:
        lanelet = self.scenario.network[lanelet_id]
        t = step * self.scenario.config.dt
        front = z.xi + self.half_length
        rears = [
            lo
            for ob in self.scenario.obstacles
            for lo, _ in occupied_long_intervals(lanelet, ob, t)
            if lo >= z.xi
        ]
        return min(rears) - front if rears else math.inf

    def __call__(self, step: int, lanelet_id: int, z: PVPoint) -> float:
        if self.weight <= 0.0:
            return 0.0
        d_safe = max(self.d_min, self.time_gap * z.v)
        return self.weight * max(0.0, d_safe - self.gap(step, lanelet_id, z))


def corridor_cost(
    corridor: Corridor,
    profile: DesiredProfile,
    config: PlannerConfig,
    penalty: StepPenalty | None = None,
) -> CostBreakdown:
    total = 0.0
    penalty_sum = 0.0
    summed = 0
    for step in range(corridor.horizon + 1):
        best: tuple[float, int, PVPoint] | None = None
        for node, area in corridor.areas_at(step):
            if area.is_empty:
                continue
            z_star, dist = closest_point(area, profile.local(step, node.offset))
            if best is None or dist < best[0]:
                best = (dist, node.lanelet, z_star)
        if best is None:
            continue
        total += best[0]
        summed += 1
        if penalty is not None:
            penalty_sum += penalty(step, best[1], best[2])
    # steps where the corridor has no area carry no deviation and are not averaged
    d_profile = total / summed if summed else 0.0
    n = corridor.n_change
    J = config.w_change * n + config.w_profile * d_profile + penalty_sum
    return CostBreakdown(n_change=n, d_profile=d_profile, safe_distance_penalty=penalty_sum, J=J)


def selection_key(corridor: Corridor, cost: CostBreakdown) -> tuple:
    return (cost.J, cost.n_change, corridor.goal_step, corridor.lanelet_ids, corridor.entry_steps)


def select_best(scored: Sequence[tuple[Corridor, CostBreakdown]]) -> tuple[Corridor, CostBreakdown]:
    if not scored:
        raise PreconditionError("no corridor to select from")
    return min(scored, key=lambda item: selection_key(*item))


def rank_corridors(
    corridors: Sequence[Corridor],
    free: FreeSpaceTable,
    z0: PVPoint,
    config: PlannerConfig,
    penalty: StepPenalty | None = None,
    profile_fn: Callable[[Corridor], DesiredProfile] | None = None,
) -> list[tuple[Corridor, CostBreakdown]]:
    """Cost of every corridor, cheapest first."""
    profile_fn = profile_fn or (lambda c: profile_for(c, free, z0, config))
    scored = [(c, corridor_cost(c, profile_fn(c), config, penalty)) for c in corridors]
    return sorted(scored, key=lambda item: selection_key(*item))
