"""
End-to-end planning: find corridors, select, refine, build the reference.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

from models.api_models import AreaOut, CorridorSummary, PlanResponse, TrajectorySampleOut
from models.scenario import GoalSpec, Scenario
from services.corridor_search import (
    CostBreakdown,
    Corridor,
    CorridorSearch,
    SafeDistancePenalty,
    profile_for,
    rank_corridors,
    select_best,
)
from services.reference_traj import (
    ReferenceTrajectory,
    check_dynamic_consistency,
    generate_curvilinear,
    lateral_correction,
    to_global,
)
from services.refine import refine_corridor

logger = logging.getLogger(__name__)

PlanStatus = Literal["solved", "no_corridor", "timeout"]


@dataclass
class PlanResult:
    status: PlanStatus
    corridors: list[Corridor] = field(default_factory=list)
    costs: list[CostBreakdown] = field(default_factory=list)
    selected: Corridor | None = None
    cost: CostBreakdown | None = None
    refined: Corridor | None = None
    reference: ReferenceTrajectory | None = None
    elapsed: float = 0.0
    nodes_expanded: int = 0

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def plan(scenario: Scenario, goal: GoalSpec | None = None) -> PlanResult:
    """Times in the result are relative to the scenario start."""
    started = time.perf_counter()
    search = CorridorSearch(scenario, goal)
    outcome = search.run()
    if not outcome.corridors:
        status: PlanStatus = "timeout" if outcome.timed_out else "no_corridor"
        return PlanResult(status, elapsed=time.perf_counter() - started, nodes_expanded=outcome.nodes_expanded)

    config, vehicle, network = scenario.config, scenario.vehicle, scenario.network
    _, z0 = search.initial_seed()
    penalty = SafeDistancePenalty(scenario) if config.w_safe > 0.0 else None
    ranked = rank_corridors(outcome.corridors, search.free, z0, config, penalty)
    selected, cost = select_best(ranked)
    logger.info("Selected corridor %s with J=%.3f (%d candidates)",
                list(selected.lanelet_ids), cost.J, len(ranked))

    refined = refine_corridor(selected, selected.goal_box, network, vehicle, config)
    profile = profile_for(refined, search.free, z0, config)
    points = generate_curvilinear(refined, profile, z0, vehicle, config)
    check_dynamic_consistency(points, config.dt, vehicle.a_max)
    reference = to_global(points, refined, network, vehicle, config)
    reference = lateral_correction(reference, scenario.obstacles, network, vehicle, config)

    return PlanResult(
        status="solved",
        corridors=[c for c, _ in ranked],
        costs=[k for _, k in ranked],
        selected=selected,
        cost=cost,
        refined=refined,
        reference=reference,
        elapsed=time.perf_counter() - started,
        nodes_expanded=outcome.nodes_expanded,
    )


# ── Wire summaries ────────────────────────────────────────────────────────────

def corridor_summary(corridor: Corridor, cost: CostBreakdown) -> CorridorSummary:
    return CorridorSummary(
        lanelets=list(corridor.lanelet_ids),
        n_change=cost.n_change,
        goal_step=corridor.goal_step,
        J=cost.J,
        d_profile=cost.d_profile,
        safe_distance_penalty=cost.safe_distance_penalty,
        areas=[
            AreaOut(lanelet=node.lanelet, step=step, parts=area.vertex_lists())
            for node in corridor.nodes
            for step, area in node.timeline.items()
        ],
    )


def plan_response(scenario: Scenario, result: PlanResult) -> PlanResponse:
    corridor = None
    trajectory = []
    if result.selected is not None and result.cost is not None:
        corridor = corridor_summary(result.selected, result.cost)
    if result.reference is not None:
        trajectory = [
            TrajectorySampleOut(
                t=s.t, x=s.x, y=s.y, v=s.v, orientation=s.orientation,
                xi=s.xi, eta=s.eta, lanelet=s.lanelet,
            )
            for s in result.reference.samples
        ]
    return PlanResponse(
        scenario=scenario.name,
        status=result.status,
        corridor_count=len(result.corridors),
        elapsed_ms=result.elapsed * 1e3,
        corridor=corridor,
        trajectory=trajectory,
    )
