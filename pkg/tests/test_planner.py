import time
from dataclasses import replace

import numpy as np
import pytest

from services.planner import corridor_summary, plan, plan_response
from services.scenario_gen import random_scenario
from services.scenario_service import scenario_from_dict
from services.setops import PVRegion


def test_straight_plan(load):
    scenario = load("straight")
    result = plan(scenario)
    assert result.solved
    assert result.status == "solved"
    assert result.cost.n_change == 0
    assert result.selected.lanelet_ids == (1,)
    assert len(result.reference) == result.refined.goal_step + 1 == 31
    assert result.nodes_expanded == 1
    assert result.elapsed > 0.0


def test_lane_change_plan_is_cheapest(load):
    result = plan(load("lane_change"))
    assert result.solved
    assert result.cost.n_change == 1
    assert result.refined.lanelet_ids == (1, 2)
    Js = [c.J for c in result.costs]
    assert Js == sorted(Js)
    assert result.cost == result.costs[0]


def test_blocked_plan(load):
    result = plan(load("blocked"))
    assert result.status == "no_corridor"
    assert not result.solved
    assert result.reference is None
    assert result.nodes_expanded == 1


def test_zero_budget_times_out(load):
    scenario = load("merge")
    scenario = scenario.replace(config=replace(scenario.config, time_budget=0.0))
    result = plan(scenario)
    assert result.status == "timeout"
    assert result.corridors == []


def test_safe_distance_weight_is_reported(load):
    scenario = load("lane_change")
    scenario = scenario.replace(config=replace(scenario.config, w_safe=1.0))
    result = plan(scenario)
    assert result.solved
    assert result.cost.safe_distance_penalty >= 0.0
    assert result.cost.J == pytest.approx(
        scenario.config.w_change * result.cost.n_change
        + scenario.config.w_profile * result.cost.d_profile
        + result.cost.safe_distance_penalty
    )


def test_traffic_light_plan(load):
    scenario = load("traffic_light")
    result = plan(scenario)
    assert result.solved
    for node in result.refined.nodes:
        for step, area in node.timeline.items():
            if step * scenario.config.dt <= 2.0 and not area.is_empty:
                lo, _, hi, _ = area.bounds
                assert hi <= 59.5 + 1e-6 or lo >= 60.0 - 1e-6


@pytest.mark.slow
@pytest.mark.parametrize(
    "name", ["straight", "lane_change", "merge", "overtake", "curve", "traffic_light", "blocked"]
)
def test_bundled_scenarios_plan_quickly(load, name):
    scenario = load(name)
    runs = []
    for _ in range(3):
        started = time.perf_counter()
        plan(scenario)
        runs.append(time.perf_counter() - started)
    assert float(np.median(runs)) < 1.0


# ── Wire summaries ────────────────────────────────────────────────────────────

def test_plan_response(load):
    scenario = load("straight")
    result = plan(scenario)
    response = plan_response(scenario, result)
    assert response.scenario == "straight"
    assert response.status == "solved"
    assert response.corridor_count == len(result.corridors)
    assert response.corridor.lanelets == [1]
    assert len(response.trajectory) == 31
    assert response.trajectory[0].x == pytest.approx(10.0)


def test_no_corridor_response(load):
    scenario = load("blocked")
    response = plan_response(scenario, plan(scenario))
    assert response.status == "no_corridor"
    assert response.corridor is None
    assert response.trajectory == []


def test_corridor_summary_areas(load):
    result = plan(load("straight"))
    summary = corridor_summary(result.refined, result.cost)
    assert [a.step for a in summary.areas] == list(range(31))
    first = PVRegion.from_polygons(summary.areas[0].parts)
    assert first.contains(np.array([10.0, 10.0]), 1e-6)


# ── Generated scenarios ───────────────────────────────────────────────────────

@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_random_scenarios_plan_consistently(seed):
    scenario = scenario_from_dict(random_scenario(seed))
    result = plan(scenario)
    assert result.status in ("solved", "no_corridor")
    if result.solved:
        acc = result.reference.accelerations()
        assert np.all(np.abs(acc) <= scenario.vehicle.a_max + 1e-9)
        assert len(result.reference) == result.refined.goal_step + 1
        assert result.refined.last.lanelet == scenario.problem.goal_lanelet
