"""
Set arithmetic on regions of longitudinal position-velocity space.

A region is a finite union of interior-disjoint convex polygons. Parts may be
degenerate (a point or a segment): a single initial state is a point and its
first propagation is a segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import shapely
import shapely.affinity
import shapely.ops
from shapely.geometry import LineString, Point, Polygon
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient

from models.errors import EmptyRegionError

EPS = 1e-9
SNAP = 1e-7


# ── Value types ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PVPoint:
    xi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.xi, self.v])


@dataclass(frozen=True, eq=False)
class ConvexPoly:
    """Convex polygon with counter-clockwise vertices, shape (k, 2), k >= 1."""
    vertices: np.ndarray

    @classmethod
    def hull(cls, points: Iterable[Sequence[float]] | np.ndarray) -> "ConvexPoly | None":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return None
        return cls.from_geometry(shapely.multipoints(pts).convex_hull)

    @classmethod
    def from_geometry(cls, geom: BaseGeometry) -> "ConvexPoly | None":
        if geom.is_empty:
            return None
        hull = geom.convex_hull
        if hull.geom_type == "Polygon":
            coords = np.asarray(orient(hull, 1.0).exterior.coords)[:-1]
        else:
            coords = shapely.get_coordinates(hull)
        return cls(_clean(coords))

    @cached_property
    def geometry(self) -> BaseGeometry:
        v = self.vertices
        if len(v) == 1:
            return Point(v[0])
        if len(v) == 2:
            return LineString(v)
        return Polygon(v)

    @cached_property
    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @property
    def is_degenerate(self) -> bool:
        return self.area <= EPS * EPS

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def linear_map(self, matrix: np.ndarray) -> "ConvexPoly":
        # orientation-preserving maps only (det > 0)
        return ConvexPoly(self.vertices @ matrix.T)

    def translate(self, d: np.ndarray) -> "ConvexPoly":
        return ConvexPoly(self.vertices + d)

    def minkowski_segment(self, d: np.ndarray) -> "ConvexPoly":
        """Minkowski sum with the symmetric segment [-d, d]."""
        if not np.any(d):
            return self
        return ConvexPoly.hull(np.vstack((self.vertices - d, self.vertices + d)))

    def intersection(self, other: "ConvexPoly") -> "ConvexPoly | None":
        a, b = self.bounds, other.bounds
        if (a[0] > b[2] + SNAP or b[0] > a[2] + SNAP
                or a[1] > b[3] + SNAP or b[1] > a[3] + SNAP):
            return None
        hit = ConvexPoly.from_geometry(self.geometry.intersection(other.geometry))
        if hit is not None or not (self.is_degenerate or other.is_degenerate):
            return hit
        # points and segments on a boundary miss it by rounding error
        thin, thick = (self, other) if self.is_degenerate else (other, self)
        if thin.geometry.distance(thick.geometry) > SNAP:
            return None
        return ConvexPoly.from_geometry(thin.geometry.intersection(thick.geometry.buffer(SNAP)))

    def distance(self, z: np.ndarray) -> float:
        return float(self.geometry.distance(Point(z)))

    def depth(self, z: np.ndarray) -> float:
        """Signed distance of z: positive inside, negative outside."""
        p = Point(z)
        outside = self.geometry.distance(p)
        if outside > 0.0 or self.is_degenerate:
            return -float(outside)
        return float(self.geometry.exterior.distance(p))


def _clean(coords: np.ndarray) -> np.ndarray:
    """Drop duplicate and collinear vertices (tolerance EPS)."""
    pts = [np.asarray(c, dtype=float) for c in coords]
    dedup: list[np.ndarray] = []
    for p in pts:
        if not dedup or np.max(np.abs(p - dedup[-1])) > EPS:
            dedup.append(p)
    if len(dedup) > 1 and np.max(np.abs(dedup[0] - dedup[-1])) <= EPS:
        dedup.pop()
    changed = True
    while changed and len(dedup) >= 3:
        changed = False
        for i in range(len(dedup)):
            a, b, c = dedup[i - 1], dedup[i], dedup[(i + 1) % len(dedup)]
            chord = c - a
            n = math.hypot(chord[0], chord[1])
            if n <= EPS:
                continue
            off = abs(chord[0] * (b[1] - a[1]) - chord[1] * (b[0] - a[0])) / n
            if off <= EPS:
                del dedup[i]
                changed = True
                break
    if len(dedup) >= 3:
        return np.array(dedup)
    if len(dedup) == 2 and np.max(np.abs(dedup[0] - dedup[1])) <= EPS:
        dedup = dedup[:1]
    return np.array(dedup)


@dataclass(frozen=True)
class PVBox:
    xi: tuple[float, float]
    v: tuple[float, float]

    @cached_property
    def poly(self) -> ConvexPoly:
        (a, b), (c, d) = self.xi, self.v
        return ConvexPoly.hull([(a, c), (b, c), (b, d), (a, d)])

    def contains(self, z: PVPoint, tol: float = EPS) -> bool:
        return (self.xi[0] - tol <= z.xi <= self.xi[1] + tol
                and self.v[0] - tol <= z.v <= self.v[1] + tol)


@dataclass(frozen=True)
class PVRegion:
    parts: tuple[ConvexPoly, ...] = ()

    @classmethod
    def empty(cls) -> "PVRegion":
        return cls(())

    @classmethod
    def point(cls, xi: float, v: float) -> "PVRegion":
        return cls((ConvexPoly(np.array([[xi, v]], dtype=float)),))

    @classmethod
    def from_box(cls, box: PVBox) -> "PVRegion":
        return cls((box.poly,))

    @classmethod
    def from_polygons(cls, polys: Iterable[Sequence[Sequence[float]]]) -> "PVRegion":
        return cls(tuple(_disjoint([p for p in (ConvexPoly.hull(q) for q in polys) if p is not None])))

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def __bool__(self) -> bool:
        return bool(self.parts)

    @property
    def area(self) -> float:
        return sum(p.area for p in self.parts)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        if not self.parts:
            raise EmptyRegionError("empty region has no bounds")
        b = np.array([p.bounds for p in self.parts])
        return float(b[:, 0].min()), float(b[:, 1].min()), float(b[:, 2].max()), float(b[:, 3].max())

    @cached_property
    def geometry(self) -> BaseGeometry:
        return shapely.union_all([p.geometry for p in self.parts])

    def contains(self, z: PVPoint | np.ndarray, tol: float = EPS) -> bool:
        return signed_distance(self, z) >= -tol

    def covers(self, other: "PVRegion", tol: float = EPS) -> bool:
        """other ⊆ self, up to tol."""
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        grown = self.geometry.buffer(tol)
        return all(grown.covers(p.geometry) for p in other.parts)

    def vertex_lists(self) -> list[list[list[float]]]:
        return [p.vertices.tolist() for p in self.parts]


def _as_array(z: PVPoint | np.ndarray | Sequence[float]) -> np.ndarray:
    if isinstance(z, PVPoint):
        return z.as_array()
    return np.asarray(z, dtype=float)


# ── Disjoint re-partitioning ──────────────────────────────────────────────────

def _is_convex(geom: BaseGeometry, hull: BaseGeometry) -> bool:
    return hull.area - geom.area <= EPS * max(hull.area, 1.0)


def _slab_pieces(component: Polygon) -> list[ConvexPoly]:
    """Convex cover of a polygon: cut it at every vertex abscissa, then glue neighbours back."""
    xs = np.unique(shapely.get_coordinates(component)[:, 0])
    _, lo_v, _, hi_v = component.bounds
    pieces: list[ConvexPoly] = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        if x1 - x0 <= EPS:
            continue
        slab = shapely.box(x0, lo_v - 1.0, x1, hi_v + 1.0)
        for cut in shapely.get_parts(component.intersection(slab)):
            if cut.geom_type != "Polygon" or cut.area <= EPS * EPS:
                continue
            piece = ConvexPoly.from_geometry(cut)
            for i, kept in enumerate(pieces):
                h = ConvexPoly.hull(np.vstack((kept.vertices, piece.vertices)))
                if abs(h.area - kept.area - piece.area) <= EPS * max(h.area, 1.0):
                    pieces[i] = h
                    break
            else:
                pieces.append(piece)
    return pieces


def _solid_pieces(solid: list[ConvexPoly]) -> list[ConvexPoly]:
    if len(solid) <= 1:
        return solid
    union = shapely.union_all([p.geometry for p in solid])
    hull = union.convex_hull
    if _is_convex(union, hull):
        return [ConvexPoly.from_geometry(hull)]
    out: list[ConvexPoly] = []
    for component in shapely.get_parts(union):
        if component.geom_type != "Polygon" or component.area <= EPS * EPS:
            continue
        if not component.interiors and _is_convex(component, component.convex_hull):
            out.append(ConvexPoly.from_geometry(component))
        else:
            out.extend(_slab_pieces(component))
    return out


def _disjoint(parts: list[ConvexPoly]) -> list[ConvexPoly]:
    """Interior-disjoint convex parts covering the union of `parts`."""
    if len(parts) <= 1:
        return parts
    out = _solid_pieces([p for p in parts if not p.is_degenerate])
    thin = sorted((p for p in parts if p.is_degenerate), key=lambda p: -p.geometry.length)
    if not thin:
        return out
    covered = shapely.union_all([p.geometry for p in out]).buffer(SNAP) if out else None
    kept: list[ConvexPoly] = []
    for t in thin:
        if covered is not None and covered.covers(t.geometry):
            continue
        if any(k.geometry.buffer(SNAP).covers(t.geometry) for k in kept):
            continue
        kept.append(t)
    return out + kept


# ── Dynamics ──────────────────────────────────────────────────────────────────

def _shear(dt: float) -> np.ndarray:
    return np.array([[1.0, dt], [0.0, 1.0]])


def _input_direction(dt: float, a_max: float) -> np.ndarray:
    return np.array([0.5 * dt * dt * a_max, dt * a_max])


def propagate(region: PVRegion, dt: float, a_max: float) -> PVRegion:
    """Forward image A R ⊕ B[-a_max, a_max] of the double integrator."""
    A = _shear(dt)
    d = _input_direction(dt, a_max)
    parts = [p.linear_map(A).minkowski_segment(d) for p in region.parts]
    return PVRegion(tuple(_disjoint(parts)))


def backward_step(region: PVRegion, dt: float, a_max: float) -> PVRegion:
    """Preimage A⁻¹(R ⊕ B[-a_max, a_max])."""
    A_inv = _shear(-dt)
    d = _input_direction(dt, a_max)
    parts = [p.minkowski_segment(d).linear_map(A_inv) for p in region.parts]
    return PVRegion(tuple(_disjoint(parts)))


def step_point(z: PVPoint, a: float, dt: float) -> PVPoint:
    return PVPoint(z.xi + z.v * dt + 0.5 * a * dt * dt, z.v + a * dt)


# ── Set operations ────────────────────────────────────────────────────────────

def intersect_cells(region: PVRegion, cells: Sequence[PVBox]) -> list[PVRegion]:
    """One region per intersecting cell, in cell order."""
    out = []
    for cell in cells:
        box = cell.poly
        parts = []
        for p in region.parts:
            b = p.bounds
            if (b[0] >= cell.xi[0] and b[2] <= cell.xi[1]
                    and b[1] >= cell.v[0] and b[3] <= cell.v[1]):
                parts.append(p)
                continue
            clipped = p.intersection(box)
            if clipped is not None:
                parts.append(clipped)
        if parts:
            out.append(PVRegion(tuple(parts)))
    return out


def intersect(a: PVRegion, b: PVRegion) -> PVRegion:
    parts = []
    for p in a.parts:
        for q in b.parts:
            r = p.intersection(q)
            if r is not None:
                parts.append(r)
    return PVRegion(tuple(_disjoint(parts)))


def concat(regions: Iterable[PVRegion]) -> PVRegion:
    """Union of regions already known to be pairwise disjoint."""
    return PVRegion(tuple(p for r in regions for p in r.parts))


def union_merge(a: PVRegion, b: PVRegion) -> PVRegion:
    if b.is_empty:
        return a
    if a.is_empty:
        return b
    if a.covers(b):
        return a
    return PVRegion(tuple(_disjoint(list(a.parts) + list(b.parts))))


def shift_long(region: PVRegion, dxi: float) -> PVRegion:
    if dxi == 0.0:
        return region
    d = np.array([dxi, 0.0])
    return PVRegion(tuple(p.translate(d) for p in region.parts))


def signed_distance(region: PVRegion, z: PVPoint | np.ndarray) -> float:
    """Largest part depth: positive inside, negative distance outside."""
    if region.is_empty:
        return -math.inf
    arr = _as_array(z)
    return max(p.depth(arr) for p in region.parts)


def closest_point(
    region: PVRegion, z: PVPoint, scale: tuple[float, float] = (1.0, 1.0)
) -> tuple[PVPoint, float]:
    """Arg-min of the scaled Euclidean distance to z over the region."""
    if region.is_empty:
        raise EmptyRegionError("closest_point on an empty region")
    sx, sy = scale
    target = Point(z.xi / sx, z.v / sy)
    best: tuple[PVPoint, float] | None = None
    for part in region.parts:
        geom = shapely.affinity.scale(part.geometry, 1.0 / sx, 1.0 / sy, origin=(0.0, 0.0))
        if geom.covers(target):
            return z, 0.0
        near, _ = shapely.ops.nearest_points(geom, target)
        dist = float(geom.distance(target))
        if best is None or dist < best[1]:
            best = (PVPoint(near.x * sx, near.y * sy), dist)
    assert best is not None
    return best
