"""
Free space per lanelet and time step: the lanelet's [0, ℓ] range minus the
bloated obstacle occupancy and red-phase stop bands, times [0, v_eff].
"""
from __future__ import annotations

import logging
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString

from models.scenario import (
    Lanelet,
    ObstacleTimeline,
    PlannerConfig,
    RoadNetwork,
    TrafficLightRule,
    VehicleParams,
)
from services.geometry_service import lateral_band, occupied_long_intervals
from services.limits import max_corner_speed
from services.setops import PVBox

logger = logging.getLogger(__name__)


# ── Speed limits ──────────────────────────────────────────────────────────────

def max_curvature(lanelet: Lanelet) -> float:
    """Largest heading change per unit arc length over the centerline vertices."""
    if len(lanelet.headings) < 2:
        return 0.0
    dphi = np.diff(lanelet.headings)
    dphi = np.abs(np.arctan2(np.sin(dphi), np.cos(dphi)))
    seg = lanelet.segment_lengths
    dxi = 0.5 * (seg[:-1] + seg[1:])
    return float(np.max(dphi / dxi))


def effective_speed_limit(lanelet: Lanelet, a_max: float) -> float:
    return min(lanelet.speed_limit, max_corner_speed(max_curvature(lanelet), a_max))


# ── Partial occupancy ─────────────────────────────────────────────────────────

def free_lateral_bands(
    lanelet: Lanelet, obstacle: ObstacleTimeline, t: float
) -> list[tuple[float, float]]:
    """Lateral bands (η intervals) of the lanelet left free by the obstacle."""
    return _free_bands(lanelet, lateral_band(lanelet, obstacle, t))


def _free_bands(lanelet: Lanelet, band: tuple[float, float] | None) -> list[tuple[float, float]]:
    half = lanelet.width / 2.0
    if band is None:
        return [(-half, half)]
    lo, hi = band
    return [b for b in ((-half, lo), (hi, half)) if b[1] > b[0]]


def lateral_pass(
    lanelet: Lanelet,
    obstacle: ObstacleTimeline,
    t: float,
    vehicle_width: float,
    min_lateral_width: float = 0.0,
    margin: float = 0.25,
) -> bool:
    """True if the ego fits beside the obstacle within the lanelet."""
    band = lateral_band(lanelet, obstacle, t)
    if band is None:
        return True
    widest = max((hi - lo for lo, hi in _free_bands(lanelet, band)), default=0.0)
    return widest >= max(vehicle_width + 2.0 * margin, min_lateral_width)


# ── Free-space cells ──────────────────────────────────────────────────────────

def _subtract_intervals(
    length: float, blocked: Iterable[tuple[float, float]]
) -> list[tuple[float, float]]:
    road = LineString([(0.0, 0.0), (length, 0.0)])
    cuts = [LineString([(lo, 0.0), (hi, 0.0)]) for lo, hi in blocked if hi > lo]
    if not cuts:
        return [(0.0, length)]
    rest = road.difference(shapely.union_all(cuts))
    out = []
    for part in shapely.get_parts(rest):
        xs = shapely.get_coordinates(part)[:, 0]
        if len(xs) and xs.max() > xs.min():
            out.append((float(xs.min()), float(xs.max())))
    return sorted(out)


def compute_free_space(
    lanelet: Lanelet,
    obstacles: Sequence[ObstacleTimeline],
    rules: Sequence[TrafficLightRule],
    t: float,
    vehicle: VehicleParams,
    config: PlannerConfig,
    v_eff: float | None = None,
) -> list[PVBox]:
    if v_eff is None:
        v_eff = effective_speed_limit(lanelet, vehicle.a_max)
    bloat = vehicle.length / 2.0 + config.d_min
    blocked: list[tuple[float, float]] = []
    for ob in obstacles:
        if lateral_pass(lanelet, ob, t, vehicle.width, config.min_lateral_width, config.lateral_margin):
            continue
        blocked.extend((lo - bloat, hi + bloat) for lo, hi in occupied_long_intervals(lanelet, ob, t))
    for rule in rules:
        if rule.lanelet == lanelet.id and rule.is_red(t):
            blocked.append(rule.blocked)
    return [PVBox(xi=iv, v=(0.0, v_eff)) for iv in _subtract_intervals(lanelet.length, blocked)]


class FreeSpaceTable:
    """Lazily filled free-space cells keyed by (lanelet id, step)."""

    def __init__(
        self,
        network: RoadNetwork,
        obstacles: Sequence[ObstacleTimeline],
        vehicle: VehicleParams,
        config: PlannerConfig,
        rules: Sequence[TrafficLightRule] = (),
    ):
        self.network = network
        self.obstacles = tuple(obstacles)
        self.vehicle = vehicle
        self.config = config
        self.rules = tuple(rules)
        self._cells: dict[tuple[int, int], list[PVBox]] = {}
        self._v_eff: dict[int, float] = {}

    def v_eff(self, lanelet_id: int) -> float:
        if lanelet_id not in self._v_eff:
            self._v_eff[lanelet_id] = effective_speed_limit(self.network[lanelet_id], self.vehicle.a_max)
        return self._v_eff[lanelet_id]

    def cells(self, lanelet_id: int, step: int) -> list[PVBox]:
        key = (lanelet_id, step)
        if key not in self._cells:
            self._cells[key] = compute_free_space(
                self.network[lanelet_id],
                self.obstacles,
                self.rules,
                step * self.config.dt,
                self.vehicle,
                self.config,
                v_eff=self.v_eff(lanelet_id),
            )
        return self._cells[key]

    def partial_occupiers(self, lanelet_id: int, t: float) -> list[ObstacleTimeline]:
        """Obstacles on the lanelet at t that leave a passable lateral band."""
        ll = self.network[lanelet_id]
        out = []
        for ob in self.obstacles:
            if lateral_band(ll, ob, t) is None:
                continue
            if lateral_pass(ll, ob, t, self.vehicle.width,
                            self.config.min_lateral_width, self.config.lateral_margin):
                out.append(ob)
        return out


def free_at(cells: Sequence[PVBox], xi: float, v: float, tol: float = 1e-9) -> bool:
    return any(c.xi[0] - tol <= xi <= c.xi[1] + tol and c.v[0] - tol <= v <= c.v[1] + tol for c in cells)
