from dataclasses import replace

import numpy as np
import pytest
import shapely

from models.errors import PreconditionError
from services.corridor_search import CorridorSearch
from services.refine import refine_corridor
from services.scenario_gen import random_scenario
from services.scenario_service import scenario_from_dict
from services.setops import PVBox, PVRegion, backward_step, intersect, shift_long

MARGIN = 1e-3      # grid points this close to a boundary are not classified
SLACK = 1e-4       # numeric slack of the one-step test, well below MARGIN


def _search(scenario):
    search = CorridorSearch(scenario)
    corridors = search.run().corridors
    assert corridors
    return search, corridors


def _refine(scenario, corridor):
    return refine_corridor(corridor, corridor.goal_box, scenario.network, scenario.vehicle, scenario.config)


def _longest(scenario):
    search, corridors = _search(scenario)
    return search, max(corridors, key=lambda c: len(c.nodes))


def _grid(bounds, n=40):
    lo_x, lo_v, hi_x, hi_v = bounds
    hx = (hi_x - lo_x) / n or 1.0
    hv = (hi_v - lo_v) / n or 1.0
    xs = lo_x + (np.arange(n) + 0.37) * hx
    vs = lo_v + (np.arange(n) + 0.37) * hv
    x, v = np.meshgrid(xs, vs)
    return x.ravel(), v.ravel()


def _inside(region, x, v, grow):
    return shapely.contains_xy(region.geometry.buffer(grow), x, v)


def _certify(scenario, corridor, refined):
    """Grid check of the one-step viability that defines every refined set.

    A state of the original corridor counts as viable at step s when it may
    leave its node right there (lane-change entry or goal box) or one bounded
    acceleration takes it into the node's refined set, or a successor's
    refined entry set, at s + 1. Returns how many grid points were classified.
    """
    dt, a_max = scenario.config.dt, scenario.vehicle.a_max
    g = corridor.goal_step
    goal = intersect(corridor.last.timeline.at(g), PVRegion.from_box(corridor.goal_box))
    nodes, kept = corridor.nodes, refined.nodes
    classified = 0
    for k, (node, rnode) in enumerate(zip(nodes, kept)):
        child = nodes[k + 1] if k + 1 < len(nodes) else None
        rchild = kept[k + 1] if child is not None else None
        length = scenario.network[node.lanelet].length
        for s, area in node.timeline.items():
            if child is None and s > g:
                break
            if area.area <= 0.0:
                continue
            now, window = PVRegion.empty(), None
            targets = [rnode.timeline.at(s + 1)]
            if child is None:
                if s == g:
                    now = goal
            elif child.entry.is_lane_change:
                seed = child.entry.seed_at(s)
                if seed is not None:
                    now = intersect(seed, rchild.timeline.at(s))
                window = child.entry.window_set_at(s)
            else:
                seed = child.entry.seed_at(s + 1)
                if seed is not None:
                    targets.append(shift_long(intersect(seed, rchild.timeline.at(s + 1)), length))

            x, v = _grid(area.bounds)
            kept_region = rnode.timeline.at(s)
            inside = _inside(kept_region, x, v, -MARGIN)
            outside = _inside(area, x, v, -MARGIN) & ~_inside(kept_region, x, v, MARGIN)
            if window is not None:
                outside &= _inside(window, x, v, -MARGIN)

            nx = x + v * dt
            du, dv = 0.5 * dt * dt * a_max, dt * a_max
            ends = np.stack([np.column_stack([nx - du, v - dv]), np.column_stack([nx + du, v + dv])], axis=1)
            moves = shapely.linestrings(ends)
            viable = _inside(now, x, v, SLACK) if now else np.zeros(len(x), dtype=bool)
            for target in targets:
                if target:
                    viable |= shapely.intersects(moves, target.geometry.buffer(SLACK))
            if window is not None:
                viable &= _inside(window, x, v, SLACK)

            assert viable[inside].all(), f"lanelet {node.lanelet} step {s}: kept state is not viable"
            assert not viable[outside].any(), f"lanelet {node.lanelet} step {s}: viable state was dropped"
            classified += int(inside.sum() + outside.sum())
    return classified


# ── Soundness ─────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("name", ["straight", "lane_change", "merge"])
def test_refined_corridor_is_sound(load, name):
    scenario = load(name)
    search, corridor = _longest(scenario)
    refined = _refine(scenario, corridor)

    assert refined.lanelet_ids == corridor.lanelet_ids
    assert refined.goal_step == corridor.goal_step
    for old, new in zip(corridor.nodes, refined.nodes):
        for step, area in new.timeline.items():
            assert old.timeline.at(step).covers(area, 1e-6)

    # starts at the initial state
    _, z0 = search.initial_seed()
    first = refined.nodes[0]
    assert first.timeline.start == 0
    assert first.timeline.at(0).contains(z0, 1e-6)

    # ends inside the goal box
    last = refined.last.timeline.at(refined.goal_step)
    assert PVRegion.from_box(corridor.goal_box).covers(last, 1e-6)


@pytest.mark.parametrize("name", ["straight", "lane_change", "merge"])
def test_refined_sets_match_one_step_viability(load, name):
    scenario = load(name)
    _, corridor = _longest(scenario)
    assert _certify(scenario, corridor, _refine(scenario, corridor)) > 0


def test_tight_goal_box_viability(load):
    scenario = load("straight")
    _, (corridor,) = _search(scenario)
    corridor = replace(corridor, goal_box=PVBox((38.0, 39.0), (10.0, 11.0)))
    assert _certify(scenario, corridor, _refine(scenario, corridor)) > 0


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(25))
def test_random_corridors_match_one_step_viability(seed):
    scenario = scenario_from_dict(random_scenario(seed))
    search = CorridorSearch(scenario)
    for corridor in search.run().corridors:
        _certify(scenario, corridor, _refine(scenario, corridor))


# ── Handoffs ──────────────────────────────────────────────────────────────────

def test_every_viable_lane_change_step_is_kept(load):
    scenario = load("lane_change")
    _, corridor = _longest(scenario)
    refined = _refine(scenario, corridor)
    parent, child = refined.nodes[0], refined.nodes[1]
    handoffs = []
    for step, seed in child.entry.seed_items():
        exit_set = intersect(seed, child.timeline.at(step))
        if exit_set:
            assert parent.timeline.at(step).covers(exit_set, 1e-6)
            handoffs.append(step)
    assert len(handoffs) > 1
    assert parent.timeline.end >= handoffs[-1]


def test_every_viable_successor_step_is_kept(load):
    scenario = load("merge")
    _, corridor = _longest(scenario)
    refined = _refine(scenario, corridor)
    dt, a_max = scenario.config.dt, scenario.vehicle.a_max
    for k in range(len(refined.nodes) - 1):
        parent, child = refined.nodes[k], refined.nodes[k + 1]
        if child.entry.kind != "successor":
            continue
        length = scenario.network[parent.lanelet].length
        for step, seed in child.entry.seed_items():
            entering = shift_long(intersect(seed, child.timeline.at(step)), length)
            if not entering:
                continue
            before = intersect(corridor.nodes[k].timeline.at(step - 1), backward_step(entering, dt, a_max))
            assert parent.timeline.at(step - 1).covers(before, 1e-6)


@pytest.mark.parametrize("name", ["straight", "lane_change", "merge"])
def test_refinement_is_idempotent(load, name):
    scenario = load(name)
    _, corridor = _longest(scenario)
    once = _refine(scenario, corridor)
    twice = _refine(scenario, once)
    for a, b in zip(once.nodes, twice.nodes):
        assert (a.timeline.start, a.timeline.end) == (b.timeline.start, b.timeline.end)
        for step, area in a.timeline.items():
            diff = area.geometry.symmetric_difference(b.timeline.at(step).geometry)
            assert diff.area <= 1e-6


# ── Goal box ──────────────────────────────────────────────────────────────────

def test_refinement_shrinks_blocked_approach(load):
    scenario = load("straight")
    _, (corridor,) = _search(scenario)
    tight = PVBox((38.0, 39.0), (10.0, 11.0))
    refined = refine_corridor(corridor, tight, scenario.network, scenario.vehicle, scenario.config)
    before = corridor.nodes[0].timeline.at(15).area
    after = refined.nodes[0].timeline.at(15).area
    assert after < before


def test_goal_box_missed(load):
    scenario = load("straight")
    _, (corridor,) = _search(scenario)
    with pytest.raises(PreconditionError, match="misses the goal box"):
        refine_corridor(
            corridor, PVBox((0.0, 1.0), (0.0, 1.0)), scenario.network, scenario.vehicle, scenario.config
        )
