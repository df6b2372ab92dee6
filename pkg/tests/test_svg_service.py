import re

import pytest

from services.planner import plan
from services.svg_service import corridor_footprint, render_scene


def _group(svg: str, name: str) -> str:
    match = re.search(rf'<g id="{name}">(.*?)</g>', svg, re.S)
    assert match is not None
    return match.group(1)


def test_scene_without_plan(load):
    svg = render_scene(load("overtake"))
    assert svg.startswith("<?xml")
    # outline and centerline per lanelet
    assert _group(svg, "lanelets").count("<path") == 4
    assert 'id="reference"' not in svg
    assert _group(svg, "drivable-area").strip() == ""
    assert "obstacle 7 at t=0.0" in _group(svg, "obstacles")


def test_scene_with_plan(load):
    scenario = load("lane_change")
    svg = render_scene(scenario, plan(scenario), times=(0.0, 1.0), scale=5.0)
    assert _group(svg, "drivable-area").count("<path") == 2
    assert "<path" in _group(svg, "reference")
    assert _group(svg, "obstacles").count("<path") == 2


def test_scale_sets_canvas_size(load):
    scenario = load("straight")
    width = lambda svg: float(re.search(r'<svg[^>]* width="([0-9.]+)"', svg).group(1))
    assert width(render_scene(scenario, scale=10.0)) == pytest.approx(10.0 * width(render_scene(scenario, scale=1.0)),
                                                                      abs=1.0)


def test_corridor_footprint_covers_travelled_range(load):
    scenario = load("straight")
    result = plan(scenario)
    (footprint,) = corridor_footprint(result.refined, scenario)
    minx, _, maxx, _ = footprint.bounds
    assert minx <= 10.0 + 1e-6
    assert maxx >= result.reference.samples[-1].x - 1e-6
