from typing import Any

from fastapi import APIRouter, Body, File, HTTPException, Query, UploadFile
from fastapi.responses import Response

from config import settings
from models.api_models import CheckResult, PlanResponse, SimSummary
from models.errors import PlannerError
from models.scenario import Scenario
from services.planner import plan, plan_response
from services.scenario_service import load_scenario, scenario_from_dict
from services.simulator import run_closed_loop
from services.svg_service import render_scene

router = APIRouter()


def _scenario(document: Any) -> Scenario:
    try:
        return scenario_from_dict(document)
    except PlannerError as e:
        raise HTTPException(status_code=422, detail=str(e))


def _plan(scenario: Scenario) -> PlanResponse:
    try:
        result = plan(scenario)
    except PlannerError as e:
        raise HTTPException(status_code=422, detail=str(e))
    response = plan_response(scenario, result)
    if result.status == "no_corridor":
        raise HTTPException(status_code=404, detail=f"No corridor found for scenario '{scenario.name}'")
    return response


@router.post("/plan", response_model=PlanResponse)
def plan_scenario(document: dict = Body(...)):
    return _plan(_scenario(document))


@router.post("/plan/upload", response_model=PlanResponse)
async def plan_upload(file: UploadFile = File(...)):
    text = await file.read()
    try:
        scenario = load_scenario(text)
    except PlannerError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return _plan(scenario)


@router.post("/plan/svg")
def plan_svg(
    document: dict = Body(...),
    times: list[float] = Query(default=[0.0]),
    scale: float = Query(default=settings.svg_scale, gt=0.0),
):
    scenario = _scenario(document)
    try:
        result = plan(scenario)
    except PlannerError as e:
        raise HTTPException(status_code=422, detail=str(e))
    svg = render_scene(scenario, result, times, scale)
    return Response(content=svg, media_type="image/svg+xml")


@router.post("/check", response_model=CheckResult)
def check_scenario(document: dict = Body(...)):
    try:
        scenario = scenario_from_dict(document)
    except PlannerError as e:
        return CheckResult(valid=False, errors=[str(e)])
    return CheckResult(valid=True, lanelets=len(scenario.network.lanelets), obstacles=len(scenario.obstacles))


@router.post("/simulate", response_model=SimSummary)
def simulate(
    document: dict = Body(...),
    horizon: float = Query(default=settings.plan_horizon, gt=0.0),
    replan: float = Query(default=settings.replan_period, gt=0.0),
):
    scenario = _scenario(document)
    log = run_closed_loop(scenario, horizon, replan, settings.sim_dt)
    return SimSummary(**log.summary())
