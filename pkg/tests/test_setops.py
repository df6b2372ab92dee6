import numpy as np
import pytest
import shapely

from models.errors import EmptyRegionError
from services.setops import (
    ConvexPoly,
    PVBox,
    PVPoint,
    PVRegion,
    backward_step,
    closest_point,
    intersect,
    intersect_cells,
    propagate,
    shift_long,
    signed_distance,
    step_point,
    union_merge,
)


def box(xi, v) -> PVRegion:
    return PVRegion.from_box(PVBox(xi, v))


# ── Propagation ───────────────────────────────────────────────────────────────

def test_propagate_point_gives_segment():
    seg = propagate(PVRegion.point(0.0, 10.0), 0.1, 2.0)
    assert len(seg.parts) == 1
    assert seg.area == 0.0
    verts = sorted(map(tuple, seg.parts[0].vertices))
    assert verts[0] == pytest.approx((0.99, 9.8))
    assert verts[1] == pytest.approx((1.01, 10.2))


def test_propagate_two_steps_extremes():
    region = PVRegion.point(0.0, 10.0)
    for _ in range(2):
        region = propagate(region, 0.1, 2.0)
    lo_xi, lo_v, hi_xi, hi_v = region.bounds
    assert (lo_xi, hi_xi) == pytest.approx((1.96, 2.04))
    assert (lo_v, hi_v) == pytest.approx((9.6, 10.4))


def test_propagate_contains_every_bang_bang_state():
    region = PVRegion.point(0.0, 5.0)
    states = [PVPoint(0.0, 5.0)]
    for _ in range(4):
        region = propagate(region, 0.1, 3.0)
        states = [step_point(z, a, 0.1) for z in states for a in (-3.0, 0.0, 3.0)]
    assert all(region.contains(z, 1e-9) for z in states)


def test_backward_step_recovers_the_origin():
    origin = box((0.0, 1.0), (2.0, 3.0))
    back = backward_step(propagate(origin, 0.1, 2.0), 0.1, 2.0)
    assert back.covers(origin, 1e-9)


def test_backward_step_of_reachable_point_contains_its_source():
    z = PVPoint(3.0, 4.0)
    nxt = step_point(z, 1.5, 0.1)
    back = backward_step(PVRegion.point(nxt.xi, nxt.v), 0.1, 2.0)
    assert back.contains(z, 1e-7)


# ── Set operations ────────────────────────────────────────────────────────────

def test_intersect_cells_splits_by_cell():
    region = box((0.0, 10.0), (0.0, 5.0))
    cells = [PVBox((0.0, 3.0), (0.0, 4.0)), PVBox((6.0, 12.0), (0.0, 4.0)), PVBox((20.0, 30.0), (0.0, 4.0))]
    pieces = intersect_cells(region, cells)
    assert len(pieces) == 2
    assert pieces[0].bounds == pytest.approx((0.0, 0.0, 3.0, 4.0))
    assert pieces[1].bounds == pytest.approx((6.0, 0.0, 10.0, 4.0))


def test_union_with_empty_and_itself():
    a = box((0.0, 2.0), (0.0, 2.0))
    assert union_merge(a, PVRegion.empty()) is a
    assert union_merge(a, a).area == pytest.approx(a.area, abs=1e-9)


def test_union_area_by_inclusion_exclusion():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x0, y0, x1, y1 = rng.uniform(0.0, 5.0, 4)
        w0, h0, w1, h1 = rng.uniform(0.5, 3.0, 4)
        a = box((x0, x0 + w0), (y0, y0 + h0))
        b = box((x1, x1 + w1), (y1, y1 + h1))
        ox = max(0.0, min(x0 + w0, x1 + w1) - max(x0, x1))
        oy = max(0.0, min(y0 + h0, y1 + h1) - max(y0, y1))
        merged = union_merge(a, b)
        assert merged.area == pytest.approx(w0 * h0 + w1 * h1 - ox * oy, abs=1e-9)
        assert merged.geometry.area == pytest.approx(merged.area, abs=1e-9)


def test_union_of_covered_region_returns_the_cover():
    outer = box((0.0, 10.0), (0.0, 10.0))
    assert union_merge(outer, box((2.0, 3.0), (2.0, 3.0))) is outer


def test_union_of_overlapping_boxes_is_one_part():
    merged = union_merge(box((0.0, 2.0), (0.0, 1.0)), box((1.0, 3.0), (0.0, 1.0)))
    assert len(merged.parts) == 1
    assert merged.area == pytest.approx(3.0)


def test_non_convex_union_splits_into_disjoint_convex_parts():
    merged = union_merge(box((0.0, 2.0), (0.0, 1.0)), box((0.0, 1.0), (0.0, 2.0)))
    assert len(merged.parts) == 2
    assert merged.area == pytest.approx(3.0)
    assert merged.geometry.area == pytest.approx(3.0)
    assert not merged.contains(PVPoint(1.5, 1.5), 1e-6)


def test_ring_keeps_its_hole():
    ring = PVRegion.from_polygons([
        [(0, 0), (3, 0), (3, 1), (0, 1)],
        [(0, 2), (3, 2), (3, 3), (0, 3)],
        [(0, 0), (1, 0), (1, 3), (0, 3)],
        [(2, 0), (3, 0), (3, 3), (2, 3)],
    ])
    assert ring.area == pytest.approx(8.0)
    assert ring.geometry.area == pytest.approx(8.0)
    assert not ring.contains(PVPoint(1.5, 1.5), 1e-6)
    assert all(p.area > 0.0 for p in ring.parts)


def test_segment_inside_a_box_is_absorbed():
    seg = PVRegion((ConvexPoly(np.array([[0.5, 0.5], [1.5, 1.5]])),))
    merged = union_merge(seg, box((0.0, 2.0), (0.0, 2.0)))
    assert len(merged.parts) == 1
    assert merged.area == pytest.approx(4.0)


def test_intersect_boxes():
    got = intersect(box((0.0, 2.0), (0.0, 2.0)), box((1.0, 3.0), (1.0, 3.0)))
    assert got.area == pytest.approx(1.0)


def test_point_on_segment_survives_rounding():
    seg = PVRegion((ConvexPoly(np.array([[0.0, 0.0], [0.3, 0.1]])),))
    p = PVRegion.point(0.1, 0.1 / 3.0 + 1e-12)
    assert not intersect(p, seg).is_empty


def test_shift_long():
    shifted = shift_long(box((90.0, 100.0), (0.0, 5.0)), -100.0)
    assert shifted.bounds == pytest.approx((-10.0, 0.0, 0.0, 5.0))
    region = box((0.0, 1.0), (0.0, 1.0))
    assert shift_long(region, 0.0) is region
    assert shift_long(shift_long(region, 2.5), 4.0).bounds == pytest.approx(shift_long(region, 6.5).bounds)


# ── Queries ───────────────────────────────────────────────────────────────────

def test_closest_point_on_box():
    z, dist = closest_point(box((0.0, 1.0), (0.0, 1.0)), PVPoint(2.0, 0.5))
    assert (z.xi, z.v) == pytest.approx((1.0, 0.5))
    assert dist == pytest.approx(1.0)


def test_closest_point_inside_is_identity():
    target = PVPoint(0.5, 0.5)
    z, dist = closest_point(box((0.0, 1.0), (0.0, 1.0)), target)
    assert z == target and dist == 0.0


def test_closest_point_respects_scale():
    z, dist = closest_point(box((0.0, 1.0), (0.0, 1.0)), PVPoint(3.0, 0.5), scale=(2.0, 1.0))
    assert z.xi == pytest.approx(1.0)
    assert dist == pytest.approx(1.0)


def test_closest_point_on_empty_region():
    with pytest.raises(EmptyRegionError):
        closest_point(PVRegion.empty(), PVPoint(0.0, 0.0))


def test_closest_point_matches_grid_argmin():
    region = union_merge(box((0.0, 2.0), (0.0, 1.0)), box((4.0, 5.0), (3.0, 4.0)))
    target = PVPoint(3.4, 2.9)
    _, dist = closest_point(region, target)
    xs, vs = np.meshgrid(np.linspace(-1.0, 6.0, 701), np.linspace(-1.0, 5.0, 601))
    inside = shapely.contains_xy(region.geometry.buffer(1e-9), xs, vs)
    grid_best = np.min(np.hypot(xs[inside] - target.xi, vs[inside] - target.v))
    assert dist <= grid_best + 1e-9
    assert dist == pytest.approx(grid_best, abs=0.05)


def test_signed_distance_sign():
    region = box((0.0, 2.0), (0.0, 2.0))
    assert signed_distance(region, PVPoint(1.0, 1.0)) == pytest.approx(1.0)
    assert signed_distance(region, PVPoint(3.0, 1.0)) == pytest.approx(-1.0)
    assert signed_distance(PVRegion.empty(), PVPoint(0.0, 0.0)) == -np.inf


def test_empty_region_has_no_bounds():
    with pytest.raises(EmptyRegionError):
        PVRegion.empty().bounds
