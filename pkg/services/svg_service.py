"""
SVG rendering of a scenario and its plan: lanelets, goal region, drivable
areas of the selected corridor, obstacle snapshots and the reference path.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import shapely
from jinja2 import Environment, FileSystemLoader, select_autoescape
from shapely.geometry import LineString, Polygon
from shapely.geometry.base import BaseGeometry

from config import settings
from models.scenario import Scenario, rectangle_corners
from services.corridor_search import Corridor
from services.geometry_service import strip_segment
from services.planner import PlanResult

# ── Jinja2 environment ────────────────────────────────────────────────────────

templates_dir = Path(__file__).parent.parent / "templates"
_jinja_env = Environment(
    loader=FileSystemLoader(str(templates_dir)),
    autoescape=select_autoescape(["svg", "xml", "j2"]),
)

PADDING = 5.0


class _Frame:
    """Map metres -> SVG pixels, y axis pointing up."""

    def __init__(self, bounds: tuple[float, float, float, float], scale: float):
        self.minx, self.miny, self.maxx, self.maxy = bounds
        self.scale = scale

    @property
    def width(self) -> float:
        return (self.maxx - self.minx) * self.scale

    @property
    def height(self) -> float:
        return (self.maxy - self.miny) * self.scale

    def point(self, x: float, y: float) -> str:
        return f"{(x - self.minx) * self.scale:.2f},{(self.maxy - y) * self.scale:.2f}"

    def path(self, geom: BaseGeometry) -> str:
        out = []
        for part in shapely.get_parts(geom):
            if isinstance(part, Polygon):
                rings = [part.exterior, *part.interiors]
                for ring in rings:
                    coords = list(ring.coords)[:-1]
                    out.append("M" + " L".join(self.point(x, y) for x, y in coords) + " Z")
            elif isinstance(part, LineString):
                out.append("M" + " L".join(self.point(x, y) for x, y in part.coords))
        return " ".join(out)


def corridor_footprint(corridor: Corridor, scenario: Scenario) -> list[BaseGeometry]:
    """One map polygon per corridor node: the union of its areas' ξ extents."""
    out = []
    for node in corridor.nodes:
        ll = scenario.network[node.lanelet]
        pieces = []
        for _, area in node.timeline.items():
            if area.is_empty:
                continue
            lo, _, hi, _ = area.bounds
            pieces.append(strip_segment(ll, lo, hi))
        if pieces:
            out.append(shapely.union_all(pieces))
    return out


def render_scene(
    scenario: Scenario,
    result: PlanResult | None = None,
    times: Sequence[float] = (0.0,),
    scale: float | None = None,
) -> str:
    scale = settings.svg_scale if scale is None else scale
    strips = [ll.strip for ll in scenario.network.lanelets]
    minx, miny, maxx, maxy = shapely.union_all(strips).bounds
    frame = _Frame((minx - PADDING, miny - PADDING, maxx + PADDING, maxy + PADDING), scale)

    lanelets = [{"outline": frame.path(ll.strip), "centerline": frame.path(ll.line)}
                for ll in scenario.network.lanelets]

    p = scenario.problem
    goal_ll = scenario.network[p.goal_lanelet]
    goal = frame.path(strip_segment(goal_ll, *p.goal_long))

    areas = []
    reference = None
    if result is not None and result.selected is not None:
        areas = [frame.path(g) for g in corridor_footprint(result.selected, scenario)]
    if result is not None and result.reference is not None:
        reference = frame.path(result.reference.path())

    obstacles = []
    for i, t in enumerate(times):
        opacity = 0.3 + 0.6 * (i + 1) / len(times)
        for ob in scenario.obstacles:
            obstacles.append({
                "id": ob.id, "t": t, "opacity": round(opacity, 2),
                "outline": frame.path(ob.footprint(t)),
            })

    init = p.initial
    ego = frame.path(Polygon(rectangle_corners(
        init.x, init.y, init.orientation, scenario.vehicle.length, scenario.vehicle.width,
    )))

    tmpl = _jinja_env.get_template("scene.svg.j2")
    return tmpl.render(
        title=scenario.name,
        width=frame.width,
        height=frame.height,
        lanelets=lanelets,
        goal=goal,
        areas=areas,
        obstacles=obstacles,
        reference=reference,
        ego=ego,
    )
