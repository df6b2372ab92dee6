from __future__ import annotations

import json
from pathlib import Path

import pytest

from models.scenario import Lanelet, PlannerConfig, RoadNetwork, VehicleParams
from services.scenario_service import load_scenario_file, scenario_from_dict

SCENARIOS = Path(__file__).parent.parent / "scenarios"


def scenario_path(name: str) -> Path:
    return SCENARIOS / f"{name}.json"


def scenario_document(name: str) -> dict:
    return json.loads(scenario_path(name).read_text(encoding="utf-8"))


def straight_lanelet(lid: int = 1, length: float = 100.0, y: float = 0.0, width: float = 3.5,
                     speed_limit: float = 13.9, **kwargs) -> Lanelet:
    return Lanelet(id=lid, centerline=((0.0, y), (length, y)), width=width, speed_limit=speed_limit, **kwargs)


@pytest.fixture
def vehicle() -> VehicleParams:
    return VehicleParams(length=4.0, width=2.0, wheelbase=2.6, a_max=2.0, s_max=0.7)


@pytest.fixture
def config() -> PlannerConfig:
    return PlannerConfig(dt=0.1, d_min=1.0)


@pytest.fixture
def l_lanelet() -> Lanelet:
    return Lanelet(id=5, centerline=((0.0, 0.0), (10.0, 0.0), (10.0, 10.0)), width=4.0, speed_limit=10.0)


@pytest.fixture
def two_lanes() -> RoadNetwork:
    return RoadNetwork((
        straight_lanelet(1, 150.0, 0.0, left=2),
        straight_lanelet(2, 150.0, 3.5, right=1),
    ))


@pytest.fixture
def minimal_document() -> dict:
    return {
        "lanelets": [
            {"id": 1, "speed_limit": 10.0, "width": 3.5, "centerline": [[0.0, 0.0], [100.0, 0.0]]},
        ],
        "planning_problem": {
            "initial": {"x": 5.0, "y": 0.0, "v": 5.0, "orientation": 0.0},
            "goal": {"lanelet": 1, "xi": [20.0, 100.0], "v": [0.0, 10.0], "time": [0.0, 2.0]},
        },
    }


@pytest.fixture
def load():
    return lambda name: load_scenario_file(scenario_path(name))


@pytest.fixture
def from_dict():
    return scenario_from_dict
