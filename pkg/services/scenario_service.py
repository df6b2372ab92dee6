"""
Scenario ingestion: JSON document -> validated, immutable domain model.

Schema errors surface as ScenarioParseError carrying the dotted path of the
offending field; semantic problems (adjacency, unknown ids, goal outside its
lanelet) as ScenarioValidationError.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from config import Settings, settings as default_settings
from models.api_models import ScenarioDocument
from models.errors import ScenarioParseError, ScenarioValidationError
from models.scenario import (
    InitialState,
    Lanelet,
    ObstacleState,
    ObstacleTimeline,
    PlannerConfig,
    PlanningProblem,
    RoadNetwork,
    Scenario,
    TrafficLightRule,
    VehicleParams,
)
from services.geometry_service import find_lanelets

logger = logging.getLogger(__name__)


# ── Public entry points ───────────────────────────────────────────────────────

def load_scenario(text: str | bytes, s: Settings = default_settings) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError("$", f"invalid JSON: {e.msg} (line {e.lineno}, column {e.colno})")
    return scenario_from_dict(data, s)


def load_scenario_file(path: str | Path, s: Settings = default_settings) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError("$", f"cannot read {path}: {e.strerror}")
    scenario = load_scenario(text, s)
    if scenario.name == "scenario":
        scenario = scenario.replace(name=path.stem)
    return scenario


def scenario_from_dict(data: Any, s: Settings = default_settings) -> Scenario:
    doc = parse_document(data)
    scenario = _build(doc, s)
    validate_scenario(scenario)
    logger.info(
        "Loaded scenario %s: %d lanelets, %d obstacles, %d traffic lights",
        scenario.name, len(scenario.network.lanelets), len(scenario.obstacles),
        len(scenario.traffic_lights),
    )
    return scenario


def parse_document(data: Any) -> ScenarioDocument:
    if not isinstance(data, dict):
        raise ScenarioParseError("$", "scenario document must be a JSON object")
    try:
        return ScenarioDocument.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(p) for p in first["loc"]) or "$"
        extra = f" (+{e.error_count() - 1} more)" if e.error_count() > 1 else ""
        raise ScenarioParseError(path, first["msg"] + extra) from None


# ── Document -> domain ────────────────────────────────────────────────────────

def _build(doc: ScenarioDocument, s: Settings) -> Scenario:
    lanelets = tuple(
        Lanelet(
            id=ll.id,
            centerline=tuple((float(x), float(y)) for x, y in ll.centerline),
            width=ll.width,
            speed_limit=ll.speed_limit,
            left=ll.left,
            right=ll.right,
            successors=tuple(ll.successors),
        )
        for ll in doc.lanelets
    )
    obstacles = tuple(
        ObstacleTimeline(
            id=ob.id,
            length=ob.length,
            width=ob.width,
            states=tuple(ObstacleState(p.t, p.x, p.y, p.orientation) for p in ob.trajectory),
        )
        for ob in doc.obstacles
    )
    pp = doc.planning_problem
    problem = PlanningProblem(
        initial=InitialState(pp.initial.x, pp.initial.y, pp.initial.v, pp.initial.orientation),
        goal_lanelet=pp.goal.lanelet,
        goal_long=tuple(pp.goal.xi),
        goal_vel=tuple(pp.goal.v),
        goal_time=tuple(pp.goal.time),
    )
    vehicle = VehicleParams(
        **{**asdict(VehicleParams.from_settings(s)), **doc.vehicle.model_dump(exclude_none=True)}
    )
    config = PlannerConfig(
        **{**asdict(PlannerConfig.from_settings(s)), **doc.config.model_dump(exclude_none=True)}
    )
    lights = tuple(
        TrafficLightRule(lanelet=tl.lanelet, stop_xi=tl.stop_xi, red=tuple(tuple(r) for r in tl.red))
        for tl in doc.traffic_lights
    )
    return Scenario(
        network=RoadNetwork(lanelets),
        obstacles=obstacles,
        problem=problem,
        vehicle=vehicle,
        config=config,
        traffic_lights=lights,
        epsg=doc.location.epsg if doc.location else None,
        name=doc.name,
    )


# ── Semantic validation ───────────────────────────────────────────────────────

def validate_scenario(scenario: Scenario) -> None:
    network = scenario.network
    ids = [ll.id for ll in network.lanelets]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ScenarioValidationError(f"duplicate lanelet ids: {dup}")

    for ll in network.lanelets:
        _check_lanelet(ll, network)

    for ob in scenario.obstacles:
        ts = [st.t for st in ob.states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScenarioValidationError(f"obstacle {ob.id}: trajectory times not strictly increasing")

    problem = scenario.problem
    if problem.goal_lanelet not in network:
        raise ScenarioValidationError(f"goal lanelet {problem.goal_lanelet} does not exist")
    goal_ll = network[problem.goal_lanelet]
    lo, hi = problem.goal_long
    if lo < -1e-9 or hi > goal_ll.length + 1e-9:
        raise ScenarioValidationError(
            f"goal xi [{lo}, {hi}] outside [0, {goal_ll.length:.3f}] of lanelet {goal_ll.id}"
        )

    init = problem.initial
    if not find_lanelets(network, init.x, init.y, init.orientation):
        raise ScenarioValidationError(f"initial state ({init.x}, {init.y}) lies on no lanelet")

    for tl in scenario.traffic_lights:
        if tl.lanelet not in network:
            raise ScenarioValidationError(f"traffic light on unknown lanelet {tl.lanelet}")
        if any(a > b for a, b in tl.red):
            raise ScenarioValidationError(f"traffic light on lanelet {tl.lanelet}: empty red phase")

    if scenario.vehicle.s_max >= math.pi / 2:
        raise ScenarioValidationError("vehicle s_max must be below pi/2")


def _check_lanelet(ll: Lanelet, network: RoadNetwork) -> None:
    pts = ll.centerline
    for i, (a, b) in enumerate(zip(pts, pts[1:])):
        if a == b:
            raise ScenarioValidationError(f"lanelet {ll.id}: centerline points {i} and {i + 1} coincide")

    for side, other_side in (("left", "right"), ("right", "left")):
        other_id = getattr(ll, side)
        if other_id is None:
            continue
        if other_id not in network:
            raise ScenarioValidationError(f"lanelet {ll.id}: {side} neighbour {other_id} does not exist")
        back = getattr(network[other_id], other_side)
        if back != ll.id:
            raise ScenarioValidationError(
                f"inconsistent adjacency ({ll.id}, {other_id}): "
                f"{ll.id}.{side}={other_id} but {other_id}.{other_side}={back}"
            )

    for suc in ll.successors:
        if suc == ll.id:
            raise ScenarioValidationError(f"lanelet {ll.id} lists itself as successor")
        if suc not in network:
            raise ScenarioValidationError(f"lanelet {ll.id}: successor {suc} does not exist")


# ── Domain -> document ────────────────────────────────────────────────────────

def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    """Inverse of scenario_from_dict; vehicle and config are written out in full."""
    p = scenario.problem
    doc: dict[str, Any] = {
        "name": scenario.name,
        "lanelets": [
            {
                "id": ll.id,
                "left": ll.left,
                "right": ll.right,
                "successors": list(ll.successors),
                "speed_limit": ll.speed_limit,
                "width": ll.width,
                "centerline": [list(pt) for pt in ll.centerline],
            }
            for ll in scenario.network.lanelets
        ],
        "obstacles": [
            {
                "id": ob.id,
                "length": ob.length,
                "width": ob.width,
                "trajectory": [
                    {"t": st.t, "x": st.x, "y": st.y, "orientation": st.orientation}
                    for st in ob.states
                ],
            }
            for ob in scenario.obstacles
        ],
        "planning_problem": {
            "initial": {
                "x": p.initial.x, "y": p.initial.y, "v": p.initial.v,
                "orientation": p.initial.orientation,
            },
            "goal": {
                "lanelet": p.goal_lanelet,
                "xi": list(p.goal_long),
                "v": list(p.goal_vel),
                "time": list(p.goal_time),
            },
        },
        "vehicle": asdict(scenario.vehicle),
        "config": asdict(scenario.config),
        "traffic_lights": [
            {"lanelet": tl.lanelet, "stop_xi": tl.stop_xi, "red": [list(r) for r in tl.red]}
            for tl in scenario.traffic_lights
        ],
    }
    if scenario.epsg is not None:
        doc["location"] = {"epsg": scenario.epsg}
    return doc
