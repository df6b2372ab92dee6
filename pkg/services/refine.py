"""
Backward refinement of a corridor: keep only states from which the goal box
can still be reached. Nodes are swept from the goal node back to the initial
one; every step of a transition's seed run is a possible handoff.
"""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import Mapping

from models.errors import InvariantViolation, PreconditionError
from models.scenario import PlannerConfig, RoadNetwork, VehicleParams
from services.corridor_search import Corridor, CorridorNode
from services.drivable_area import AreaTimeline, Transition
from services.setops import PVBox, PVRegion, backward_step, intersect, shift_long, union_merge

logger = logging.getLogger(__name__)

_NONE = PVRegion.empty()


def _sweep(
    timeline: AreaTimeline,
    top: int,
    now: Mapping[int, PVRegion],
    ahead: Mapping[int, PVRegion],
    window: Mapping[int, PVRegion],
    dt: float,
    a_max: float,
) -> dict[int, PVRegion]:
    """Refined sets of one node for steps top..start.

    A state at step s survives when it lies in `now[s]` (it may leave the node
    right there) or one step reaches the node's own refined set at s+1 or
    `ahead[s+1]`. `window[s]`, where present, bounds the node at step s.
    """
    out: dict[int, PVRegion] = {}
    above = ahead.get(top + 1, _NONE)
    for s in range(top, timeline.start - 1, -1):
        cur = now.get(s, _NONE)
        if above:
            cur = union_merge(cur, backward_step(above, dt, a_max))
        cur = intersect(timeline.at(s), cur)
        if s in window:
            cur = intersect(cur, window[s])
        out[s] = cur
        above = union_merge(cur, ahead.get(s, _NONE))
    return out


def _exits(entry: Transition, child: dict[int, PVRegion], parent_length: float) -> dict[int, PVRegion]:
    """Seed states that stay viable on the child, in parent coordinates."""
    out = {}
    for s, seed in entry.seed_items():
        hit = intersect(seed, child.get(s, _NONE))
        if hit:
            out[s] = shift_long(hit, parent_length) if entry.kind == "successor" else hit
    return out


def refine_corridor(
    corridor: Corridor,
    goal_box: PVBox,
    network: RoadNetwork,
    vehicle: VehicleParams,
    config: PlannerConfig,
) -> Corridor:
    dt, a_max = config.dt, vehicle.a_max
    nodes = corridor.nodes
    g = corridor.goal_step

    goal = intersect(nodes[-1].timeline.at(g), PVRegion.from_box(goal_box))
    if goal.is_empty:
        raise PreconditionError(f"goal-step area at step {g} misses the goal box")

    refined: list[dict[int, PVRegion]] = [{} for _ in nodes]
    refined[-1] = _sweep(nodes[-1].timeline, g, {g: goal}, {}, {}, dt, a_max)
    for k in range(len(nodes) - 2, -1, -1):
        node, entry = nodes[k], nodes[k + 1].entry
        if entry is None:
            raise InvariantViolation(f"lanelet {nodes[k + 1].lanelet}: corridor node without an entry")
        exits = _exits(entry, refined[k + 1], network[node.lanelet].length)
        if entry.kind == "successor":
            refined[k] = _sweep(node.timeline, node.timeline.end, {}, exits, {}, dt, a_max)
        else:
            # the vehicle stays inside the running overlap from the window start to its handoff
            window = {s: entry.window_set_at(s) for s in range(entry.window_start, entry.last + 1)}
            top = min(node.timeline.end, entry.last)
            refined[k] = _sweep(node.timeline, top, exits, {}, window, dt, a_max)
        logger.debug(
            "Refined %s %d->%d: %d exit steps in %d..%d",
            entry.kind, entry.source, entry.target, len(exits), entry.first, entry.last,
        )

    if refined[0].get(0, _NONE).is_empty:
        raise InvariantViolation("refinement lost the initial state")

    new_nodes: list[CorridorNode] = []
    prev: CorridorNode | None = None
    for node, areas in zip(nodes, refined):
        steps = [s for s, region in areas.items() if region]
        if not steps:
            raise InvariantViolation(f"lanelet {node.lanelet}: no state survives refinement")
        start, end = min(steps), max(steps)
        timeline = AreaTimeline(node.lanelet, start, tuple(areas[s] for s in range(start, end + 1)))
        prev = replace(node, timeline=timeline, parent=prev)
        new_nodes.append(prev)
    return replace(corridor, nodes=tuple(new_nodes))
