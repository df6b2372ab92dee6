"""
Lanelet geometry: curvilinear <-> global transforms, obstacle occupancy on a
lanelet strip, neighbour distances, and CRS reprojection via pyproj.
"""
from __future__ import annotations

import math
from typing import Any

import numpy as np
import shapely
import shapely.geometry
import shapely.ops
from pyproj import CRS, Transformer
from shapely.geometry import Point, Polygon
from shapely.geometry.base import BaseGeometry

from models.errors import DomainError, OutOfLaneletError
from models.scenario import Lanelet, ObstacleTimeline, RoadNetwork

PROJECTION_TOLERANCE = 1.0
_XI_EPS = 1e-9


# ── CRS / reprojection ────────────────────────────────────────────────────────

def make_transformer(from_epsg: int, to_epsg: int = 4326) -> Transformer | None:
    """Return a pyproj Transformer or None if source and target coincide."""
    if from_epsg == to_epsg:
        return None
    src = CRS.from_epsg(from_epsg)
    dst = CRS.from_epsg(to_epsg)
    return Transformer.from_crs(src, dst, always_xy=True)


def reproject_geom(geom: BaseGeometry, transformer: Transformer) -> BaseGeometry:
    return shapely.ops.transform(transformer.transform, geom)


def geom_to_geojson(geom: BaseGeometry) -> dict[str, Any]:
    return shapely.geometry.mapping(geom)


# ── Curvilinear frame ─────────────────────────────────────────────────────────

def _project_points(lanelet: Lanelet, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project points (P, 2) onto the centerline; returns (xi, eta, distance)."""
    a = lanelet.vertices[:-1]
    d = np.diff(lanelet.vertices, axis=0)
    seg_len2 = np.einsum("ij,ij->i", d, d)

    rel = pts[:, None, :] - a[None, :, :]                      # (P, S, 2)
    t = np.clip(np.einsum("psk,sk->ps", rel, d) / seg_len2, 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.hypot(*(pts[:, None, :] - foot).transpose(2, 0, 1))

    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    xi = lanelet.arc_lengths[best] + t[rows, best] * lanelet.segment_lengths[best]
    cross = d[best, 0] * rel[rows, best, 1] - d[best, 1] * rel[rows, best, 0]
    dmin = dist[rows, best]
    eta = np.where(dmin > 0.0, np.copysign(dmin, cross), 0.0)
    return xi, eta, dmin


def to_curvilinear(lanelet: Lanelet, x: float, y: float) -> tuple[float, float]:
    """Return (xi, eta): arc length of the closest centerline point and signed
    lateral offset, left positive."""
    xi, eta, dist = _project_points(lanelet, np.array([[x, y]], dtype=float))
    if dist[0] > lanelet.width / 2.0 + PROJECTION_TOLERANCE:
        raise OutOfLaneletError(
            f"Point ({x:.3f}, {y:.3f}) is {dist[0]:.3f} m from lanelet {lanelet.id} centerline"
        )
    return float(xi[0]), float(eta[0])


def from_curvilinear(lanelet: Lanelet, xi: float, eta: float = 0.0) -> tuple[float, float, float]:
    """Return (x, y, orientation) for a curvilinear position on the lanelet."""
    length = lanelet.length
    if xi < -_XI_EPS or xi > length + _XI_EPS:
        raise DomainError(f"xi={xi} outside [0, {length}] on lanelet {lanelet.id}")
    xi = min(max(xi, 0.0), length)
    s = lanelet.arc_lengths
    i = int(np.clip(np.searchsorted(s, xi, side="right") - 1, 0, len(s) - 2))
    t = (xi - s[i]) / lanelet.segment_lengths[i]
    a = lanelet.vertices[i]
    b = lanelet.vertices[i + 1]
    phi = float(lanelet.headings[i])
    x = a[0] + t * (b[0] - a[0]) - eta * math.sin(phi)
    y = a[1] + t * (b[1] - a[1]) + eta * math.cos(phi)
    return float(x), float(y), phi


def heading_at(lanelet: Lanelet, xi: float) -> float:
    return from_curvilinear(lanelet, min(max(xi, 0.0), lanelet.length))[2]


# ── Lanelet lookup ────────────────────────────────────────────────────────────

def find_lanelets(
    network: RoadNetwork, x: float, y: float, orientation: float | None = None
) -> list[tuple[Lanelet, float, float]]:
    """Lanelets whose strip covers (x, y), best match first.

    Ordered by |eta|, then heading mismatch, then id.
    """
    p = Point(x, y)
    hits = []
    for ll in network.lanelets:
        if not ll.strip.buffer(1e-9).covers(p):
            continue
        xi, eta = to_curvilinear(ll, x, y)
        mismatch = 0.0
        if orientation is not None:
            diff = orientation - heading_at(ll, xi)
            mismatch = abs(math.atan2(math.sin(diff), math.cos(diff)))
        hits.append((abs(eta), mismatch, ll.id, ll, xi, eta))
    hits.sort(key=lambda h: h[:3])
    return [(h[3], h[4], h[5]) for h in hits]


# ── Obstacle occupancy ────────────────────────────────────────────────────────

def _strip_overlap(lanelet: Lanelet, obstacle: ObstacleTimeline, t: float) -> BaseGeometry:
    return lanelet.strip.intersection(obstacle.footprint(t))


def occupied_long_intervals(
    lanelet: Lanelet, obstacle: ObstacleTimeline, t: float
) -> list[tuple[float, float]]:
    """Longitudinal intervals whose lanelet cross-section meets the obstacle."""
    overlap = _strip_overlap(lanelet, obstacle, t)
    if overlap.is_empty:
        return []
    intervals = []
    for part in shapely.get_parts(overlap):
        coords = shapely.get_coordinates(part)
        if len(coords) == 0:
            continue
        xi = shapely.line_locate_point(lanelet.line, shapely.points(coords))
        intervals.append((float(np.min(xi)), float(np.max(xi))))
    return merge_intervals(intervals)


def lateral_band(
    lanelet: Lanelet, obstacle: ObstacleTimeline, t: float
) -> tuple[float, float] | None:
    """Lateral band [eta_lo, eta_hi] of the lanelet covered by the obstacle."""
    overlap = _strip_overlap(lanelet, obstacle, t)
    if overlap.is_empty:
        return None
    coords = shapely.get_coordinates(overlap)
    _, eta, _ = _project_points(lanelet, coords)
    half = lanelet.width / 2.0
    return float(max(np.min(eta), -half)), float(min(np.max(eta), half))


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


# ── Neighbour geometry ────────────────────────────────────────────────────────

def lateral_distance(a: Lanelet, b: Lanelet, spacing: float = 1.0) -> float:
    """Mean centerline-to-centerline distance, sampled along `a` every `spacing` m."""
    samples = np.append(np.arange(0.0, a.length, spacing), a.length)
    pts = [from_curvilinear(a, float(s))[:2] for s in samples]
    return float(np.mean(shapely.distance(shapely.points(pts), b.line)))


def strip_segment(lanelet: Lanelet, xi_lo: float, xi_hi: float) -> Polygon:
    """Part of the lanelet strip between two arc lengths."""
    lo = min(max(xi_lo, 0.0), lanelet.length)
    hi = min(max(xi_hi, lo + 1e-3), lanelet.length)
    if hi - lo < 1e-3:
        lo = max(hi - 1e-3, 0.0)
    piece = shapely.ops.substring(lanelet.line, lo, hi)
    return piece.buffer(lanelet.width / 2.0, cap_style="flat", join_style="mitre")
