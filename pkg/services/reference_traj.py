"""
Reference trajectory inside a refined corridor: greedy one-step choice in
(ξ, v), mapping to the map frame with sigmoid lane-change blends, lateral
correction around partial occupiers, and exports.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np
import shapely
import shapely.ops
from shapely.geometry import LineString

from models.errors import InvariantViolation, ScenarioValidationError
from models.scenario import ObstacleTimeline, PlannerConfig, RoadNetwork, VehicleParams
from services.corridor_search import Corridor, DesiredProfile
from services.drivable_area import lane_change_steps
from services.freespace import free_lateral_bands, lateral_pass
from services.geometry_service import (
    from_curvilinear,
    geom_to_geojson,
    heading_at,
    lateral_distance,
    make_transformer,
    occupied_long_intervals,
    reproject_geom,
)
from services.limits import min_lane_change_time
from services.setops import PVPoint, PVRegion, intersect, shift_long

logger = logging.getLogger(__name__)

BLEND_STEEPNESS = 10.0
LATERAL_RATE = 0.1
MEMBERSHIP_TOLERANCE = 1e-7
HANDOFF_TOLERANCE = 1e-6


# ── Types ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float
    v: float
    orientation: float
    xi: float
    eta: float
    lanelet: int
    s: float = 0.0      # corridor coordinate

    def record(self) -> dict[str, float]:
        return {"t": self.t, "x": self.x, "y": self.y, "v": self.v, "orientation": self.orientation}


@dataclass(frozen=True)
class LaneChangeBlend:
    t_init: float
    t_fin: float
    source: int
    target: int

    def validate(self, network: RoadNetwork, a_max: float) -> None:
        needed = min_lane_change_time(lateral_distance(network[self.source], network[self.target]), a_max)
        if self.t_fin - self.t_init < needed - 1e-9:
            raise ScenarioValidationError(
                f"lane change {self.source}->{self.target} lasts {self.t_fin - self.t_init:.3f} s, "
                f"needs {needed:.3f} s"
            )

    def __contains__(self, t: float) -> bool:
        return self.t_init - 1e-9 <= t <= self.t_fin + 1e-9

    def weight(self, t: float) -> float:
        return sigmoid((t - self.t_init) / (self.t_fin - self.t_init))


@dataclass(frozen=True)
class CurvilinearPoint:
    step: int
    node: int          # index into corridor.nodes
    z: PVPoint         # corridor coordinates


@dataclass(frozen=True)
class ReferenceTrajectory:
    samples: tuple[TrajectorySample, ...]
    dt: float
    blends: tuple[LaneChangeBlend, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    def accelerations(self) -> np.ndarray:
        v = np.array([s.v for s in self.samples])
        return np.diff(v) / self.dt

    def sample_at(self, t: float) -> TrajectorySample:
        """Sample nearest in time, held at both ends."""
        i = int(round((t - self.samples[0].t) / self.dt))
        return self.samples[min(max(i, 0), len(self.samples) - 1)]

    def path(self) -> LineString:
        pts = [(s.x, s.y) for s in self.samples]
        if len(pts) == 1:
            pts = pts * 2
        return LineString(pts)

    # ── Exports ───────────────────────────────────────────────────────────────

    def to_records(self) -> list[dict[str, float]]:
        return [s.record() for s in self.samples]

    def to_json(self) -> str:
        return json.dumps([{k: float(f"{v:.9g}") for k, v in r.items()} for r in self.to_records()], indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "x", "y", "v", "orientation"])
        for r in self.to_records():
            writer.writerow([f"{r[k]:.9g}" for k in ("t", "x", "y", "v", "orientation")])
        return buf.getvalue()

    def to_geojson(self, epsg: int) -> dict[str, Any]:
        transformer = make_transformer(epsg)
        geom = self.path()
        if transformer:
            geom = reproject_geom(geom, transformer)
        return {
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "geometry": geom_to_geojson(geom),
                "properties": {"t0": self.samples[0].t, "dt": self.dt, "samples": len(self.samples)},
            }],
        }


def sigmoid(delta: float) -> float:
    return 1.0 / (1.0 + math.exp(-BLEND_STEEPNESS * (delta - 0.5)))


# ── Curvilinear reference ─────────────────────────────────────────────────────

def _handoff(corridor: Corridor, node_idx: int, step: int, z: PVPoint) -> bool:
    """Whether z may finish the lane change into the next node at `step`."""
    nodes = corridor.nodes
    if node_idx + 1 >= len(nodes):
        return False
    child = nodes[node_idx + 1]
    seed = child.entry.seed_at(step) if child.entry.is_lane_change else None
    if seed is None:
        return False
    exit_set = shift_long(intersect(seed, child.timeline.at(step)), child.offset)
    return exit_set.contains(z, HANDOFF_TOLERANCE)


def _candidate_regions(corridor: Corridor, node_idx: int, step: int) -> list[tuple[int, PVRegion]]:
    """Regions in corridor coordinates the state may enter at `step`, with their node index."""
    nodes = corridor.nodes
    node = nodes[node_idx]
    out = [(node_idx, shift_long(node.timeline.at(step), node.offset))]
    if node_idx + 1 < len(nodes):
        child = nodes[node_idx + 1]
        seed = child.entry.seed_at(step) if child.entry.kind == "successor" else None
        if seed is not None:
            out.append((node_idx + 1, shift_long(intersect(seed, child.timeline.at(step)), child.offset)))
    return out


def _admissible_intervals(
    base: np.ndarray, d: np.ndarray, a_max: float, region: PVRegion
) -> list[tuple[float, float]]:
    """Accelerations a in [-a_max, a_max] with base + a·d inside the region."""
    seg = LineString([base - a_max * d, base + a_max * d])
    dd = float(d @ d)
    out = []
    for part in region.parts:
        if len(part.vertices) <= 2:
            # a point or segment lying on the control line: project its vertices
            rel = part.vertices - base
            off = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / math.sqrt(dd)
            if np.all(off <= MEMBERSHIP_TOLERANCE):
                a = rel @ d / dd
                lo, hi = float(max(a.min(), -a_max)), float(min(a.max(), a_max))
                if lo <= hi + MEMBERSHIP_TOLERANCE:
                    out.append((lo, max(lo, hi)))
                continue
        hit = seg.intersection(part.geometry)
        if hit.is_empty:
            if seg.distance(part.geometry) > MEMBERSHIP_TOLERANCE:
                continue
            near = shapely.ops.nearest_points(seg, part.geometry)[0]
            coords = np.array([[near.x, near.y]])
        else:
            coords = shapely.get_coordinates(hit)
        a = (coords - base) @ d / dd
        out.append((float(max(a.min(), -a_max)), float(min(a.max(), a_max))))
    return out


def generate_curvilinear(
    corridor: Corridor,
    profile: DesiredProfile,
    z0: PVPoint,
    vehicle: VehicleParams,
    config: PlannerConfig,
    scale: tuple[float, float] = (1.0, 1.0),
) -> list[CurvilinearPoint]:
    """Greedy reference through the refined corridor.

    A lane change is finished at the first step the state lies in the child's
    viable entry set; that point already carries the child's node index.
    """
    dt, a_max = config.dt, vehicle.a_max
    d = np.array([0.5 * dt * dt, dt])
    w = np.array([1.0 / scale[0] ** 2, 1.0 / scale[1] ** 2])

    node_idx = 0
    z = z0
    points: list[CurvilinearPoint] = []
    for step in range(corridor.goal_step + 1):
        while _handoff(corridor, node_idx, step, z):
            node_idx += 1
        points.append(CurvilinearPoint(step, node_idx, z))
        if step == corridor.goal_step:
            break

        base = np.array([z.xi + z.v * dt, z.v])
        target = profile.states[step + 1].as_array()
        a_free = float(((target - base) * w) @ d / ((d * w) @ d))
        best: tuple[float, float, int] | None = None
        for idx, region in _candidate_regions(corridor, node_idx, step + 1):
            for lo, hi in _admissible_intervals(base, d, a_max, region):
                a = min(max(a_free, lo), hi)
                cost = float((((base + a * d) - target) ** 2) @ w)
                if best is None or cost < best[0]:
                    best = (cost, a, idx)
        if best is None:
            raise InvariantViolation(f"no admissible acceleration at step {step}")
        _, a, node_idx = best
        z = PVPoint(z.xi + z.v * dt + 0.5 * a * dt * dt, z.v + a * dt)
    return points


def check_dynamic_consistency(points: Sequence[CurvilinearPoint], dt: float, a_max: float) -> None:
    for p, q in zip(points, points[1:]):
        a = (q.z.v - p.z.v) / dt
        if abs(a) > a_max + 1e-9:
            raise InvariantViolation(f"step {p.step}: |a|={abs(a):.6f} exceeds {a_max}")
        xi = p.z.xi + p.z.v * dt + 0.5 * a * dt * dt
        if abs(xi - q.z.xi) > 1e-9:
            raise InvariantViolation(f"step {p.step}: position recurrence off by {abs(xi - q.z.xi):.3e}")


# ── Map frame ─────────────────────────────────────────────────────────────────

def lane_change_blends(
    points: Sequence[CurvilinearPoint],
    corridor: Corridor,
    network: RoadNetwork,
    vehicle: VehicleParams,
    config: PlannerConfig,
) -> list[LaneChangeBlend]:
    """One blend per lane change, ending at the step the reference switches node."""
    handoffs = {}
    for p in points:
        handoffs.setdefault(p.node, p.step)
    blends = []
    for k, (parent, child) in enumerate(zip(corridor.nodes, corridor.nodes[1:]), start=1):
        if child.entry is None or not child.entry.is_lane_change or k not in handoffs:
            continue
        n_lc = lane_change_steps(network[parent.lanelet], network[child.lanelet], vehicle, config)
        t_fin = handoffs[k] * config.dt
        blend = LaneChangeBlend(max(0.0, t_fin - n_lc * config.dt), t_fin, parent.lanelet, child.lanelet)
        blend.validate(network, vehicle.a_max)
        blends.append(blend)
    return blends


def _centerline_point(network: RoadNetwork, lanelet_id: int, xi: float) -> np.ndarray:
    ll = network[lanelet_id]
    x, y, _ = from_curvilinear(ll, min(max(xi, 0.0), ll.length))
    return np.array([x, y])


def _finite_difference_headings(xy: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    out = fallback.copy()
    n = len(xy)
    for i in range(n):
        a, b = xy[max(i - 1, 0)], xy[min(i + 1, n - 1)]
        d = b - a
        if math.hypot(d[0], d[1]) > 1e-9:
            out[i] = math.atan2(d[1], d[0])
    return out


def to_global(
    points: Sequence[CurvilinearPoint],
    corridor: Corridor,
    network: RoadNetwork,
    vehicle: VehicleParams,
    config: PlannerConfig,
    t0: float = 0.0,
) -> ReferenceTrajectory:
    blends = lane_change_blends(points, corridor, network, vehicle, config)
    xy, headings, rows, blended = [], [], [], []
    for p in points:
        node = corridor.nodes[p.node]
        ll = network[node.lanelet]
        xi = p.z.xi - node.offset
        t = p.step * config.dt
        active = [b for b in blends if t in b]
        if active:
            b = active[-1]
            mu = b.weight(t)
            pos = (1.0 - mu) * _centerline_point(network, b.source, xi) + mu * _centerline_point(network, b.target, xi)
            heading = heading_at(ll, xi)
            blended.append(True)
        else:
            x, y, heading = from_curvilinear(ll, min(max(xi, 0.0), ll.length))
            pos = np.array([x, y])
            blended.append(False)
        xy.append(pos)
        headings.append(heading)
        rows.append((t, p.z.v, xi, node.lanelet, p.z.xi))

    xy_arr = np.array(xy)
    fd = _finite_difference_headings(xy_arr, np.array(headings))
    samples = []
    for i, (t, v, xi, lanelet_id, s) in enumerate(rows):
        phi = fd[i] if blended[i] else headings[i]
        eta = 0.0
        if blended[i]:
            centre = _centerline_point(network, lanelet_id, xi)
            phi_c = heading_at(network[lanelet_id], xi)
            off = xy_arr[i] - centre
            eta = float(-math.sin(phi_c) * off[0] + math.cos(phi_c) * off[1])
        samples.append(TrajectorySample(
            t=t0 + t, x=float(xy_arr[i, 0]), y=float(xy_arr[i, 1]), v=v,
            orientation=float(phi), xi=xi, eta=eta, lanelet=lanelet_id, s=s,
        ))
    return ReferenceTrajectory(tuple(samples), config.dt, tuple(blends))


# ── Partial occupancy ─────────────────────────────────────────────────────────

def _lateral_target(
    sample: TrajectorySample,
    obstacles: Sequence[ObstacleTimeline],
    network: RoadNetwork,
    vehicle: VehicleParams,
    config: PlannerConfig,
) -> float | None:
    ll = network[sample.lanelet]
    t = sample.t
    lo, hi = sample.xi - vehicle.length / 2.0, sample.xi + vehicle.length / 2.0
    targets = []
    for ob in obstacles:
        spans = occupied_long_intervals(ll, ob, t)
        if not spans or not any(a <= hi and b >= lo for a, b in spans):
            continue
        if not lateral_pass(ll, ob, t, vehicle.width, config.min_lateral_width, config.lateral_margin):
            continue
        bands = free_lateral_bands(ll, ob, t)
        b_lo, b_hi = max(bands, key=lambda b: b[1] - b[0])
        targets.append(0.5 * (b_lo + b_hi))
    if not targets:
        return None
    return max(targets, key=abs)


def lateral_correction(
    traj: ReferenceTrajectory,
    obstacles: Sequence[ObstacleTimeline],
    network: RoadNetwork,
    vehicle: VehicleParams,
    config: PlannerConfig,
) -> ReferenceTrajectory:
    """Shift the path sideways around obstacles that leave room to pass."""
    n = len(traj.samples)
    targets = [_lateral_target(s, obstacles, network, vehicle, config) for s in traj.samples]
    if all(tg is None for tg in targets):
        return traj

    idx = np.arange(n)
    pos = np.zeros(n)
    neg = np.zeros(n)
    for j, tg in enumerate(targets):
        if tg is None:
            continue
        ramp = tg - np.sign(tg) * LATERAL_RATE * np.abs(idx - j)
        if tg > 0:
            pos = np.maximum(pos, ramp)
        elif tg < 0:
            neg = np.minimum(neg, ramp)
    shift = np.where(pos >= -neg, pos, neg)

    xy = np.array([[s.x, s.y] for s in traj.samples])
    normals = np.array([
        [-math.sin(heading_at(network[s.lanelet], s.xi)), math.cos(heading_at(network[s.lanelet], s.xi))]
        for s in traj.samples
    ])
    xy = xy + shift[:, None] * normals
    fallback = np.array([s.orientation for s in traj.samples])
    fd = _finite_difference_headings(xy, fallback)

    samples = []
    for i, s in enumerate(traj.samples):
        if shift[i] == 0.0 and (i == 0 or shift[i - 1] == 0.0) and (i == n - 1 or shift[i + 1] == 0.0):
            samples.append(s)
            continue
        samples.append(replace(
            s, x=float(xy[i, 0]), y=float(xy[i, 1]), eta=s.eta + float(shift[i]), orientation=float(fd[i]),
        ))
    logger.debug("Lateral correction applied on %d samples", int(np.count_nonzero(shift)))
    return replace(traj, samples=tuple(samples))
