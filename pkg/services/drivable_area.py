"""
Forward drivable-area computation on one lanelet, plus extraction of the
transitions (lane changes and successor continuations) it enables.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Literal, Sequence

from models.errors import BudgetExceeded, PreconditionError
from models.scenario import Lanelet, PlannerConfig, VehicleParams
from services.freespace import FreeSpaceTable
from services.geometry_service import lateral_distance
from services.limits import min_lane_change_time
from services.setops import (
    PVRegion,
    concat,
    intersect,
    intersect_cells,
    propagate,
    shift_long,
    union_merge,
)

logger = logging.getLogger(__name__)

TransitionKind = Literal["left", "right", "successor"]
SEED_TOLERANCE = 1e-6


# ── Types ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AreaTimeline:
    lanelet: int
    start: int
    areas: tuple[PVRegion, ...]

    @property
    def end(self) -> int:
        return self.start + len(self.areas) - 1

    def __contains__(self, step: int) -> bool:
        return self.start <= step <= self.end

    def at(self, step: int) -> PVRegion:
        if step not in self:
            return PVRegion.empty()
        return self.areas[step - self.start]

    def items(self):
        return zip(range(self.start, self.end + 1), self.areas)


@dataclass(frozen=True)
class Transition:
    """A window of steps during which the drivable area may enter `target`.

    `seeds[k]` is the entry set at step `first + k`, expressed in the target's
    coordinates. For lane changes `window_sets` holds the running intersection
    of overlap sets from `window_start` on, in source coordinates.
    """
    kind: TransitionKind
    source: int
    target: int
    first: int
    last: int
    seeds: tuple[PVRegion, ...]
    window_start: int
    window_sets: tuple[PVRegion, ...] = ()

    @property
    def is_lane_change(self) -> bool:
        return self.kind != "successor"

    def seed_at(self, step: int) -> PVRegion | None:
        if self.first <= step <= self.last:
            return self.seeds[step - self.first]
        return None

    def window_set_at(self, step: int) -> PVRegion | None:
        k = step - self.window_start
        if 0 <= k < len(self.window_sets):
            return self.window_sets[k]
        return None

    def seed_items(self) -> list[tuple[int, PVRegion]]:
        return list(zip(range(self.first, self.last + 1), self.seeds))


# ── Lane-change duration ──────────────────────────────────────────────────────

def min_lane_change_steps(lateral_offset: float, a_max: float, dt: float) -> int:
    t_fin = min_lane_change_time(lateral_offset, a_max)
    return max(1, math.ceil(t_fin / dt - 1e-9))


def lane_change_steps(source: Lanelet, target: Lanelet, vehicle: VehicleParams, config: PlannerConfig) -> int:
    return min_lane_change_steps(lateral_distance(source, target), vehicle.a_max, config.dt)


# ── Forward loop ──────────────────────────────────────────────────────────────

def _cells_region(free: FreeSpaceTable, lanelet_id: int, step: int) -> PVRegion:
    return PVRegion(tuple(c.poly for c in free.cells(lanelet_id, step)))


def compute_lanelet_area(
    lanelet: Lanelet,
    seeds: Sequence[tuple[int, PVRegion]],
    free: FreeSpaceTable,
    horizon: int,
    vehicle: VehicleParams,
    config: PlannerConfig,
    deadline: float | None = None,
) -> tuple[AreaTimeline, list[Transition]]:
    """Forward drivable area of one lanelet from its seeds.

    `deadline` is a `time.perf_counter()` value; passing it aborts the loop
    with BudgetExceeded.
    """
    if not seeds:
        raise PreconditionError(f"lanelet {lanelet.id}: no seed sets")
    seed_map: dict[int, PVRegion] = {}
    for step, region in seeds:
        if not _cells_region(free, lanelet.id, step).covers(region, SEED_TOLERANCE):
            raise PreconditionError(f"seed at step {step} leaves the free space of lanelet {lanelet.id}")
        seed_map[step] = union_merge(seed_map.get(step, PVRegion.empty()), region)

    dt, a_max = config.dt, vehicle.a_max
    network = free.network
    neighbours = network.neighbours(lanelet.id)
    overlaps: dict[tuple[str, int], dict[int, PVRegion]] = {nb: {} for nb in neighbours}

    i_init = min(seed_map)
    area = seed_map[i_init]
    areas = [area]
    for step in range(i_init + 1, horizon + 1):
        if deadline is not None and time.perf_counter() > deadline:
            raise BudgetExceeded(f"lanelet {lanelet.id}: deadline passed at step {step}")
        raw = propagate(area, dt, a_max)
        if step in seed_map:
            raw = union_merge(raw, seed_map[step])
        nxt = concat(intersect_cells(raw, free.cells(lanelet.id, step)))
        for kind, target in neighbours:
            if kind == "successor":
                entering = shift_long(raw, -lanelet.length)
            else:
                entering = nxt
            ov = concat(intersect_cells(entering, free.cells(target, step)))
            if ov:
                overlaps[(kind, target)][step] = ov
        if nxt.is_empty:
            break
        areas.append(nxt)
        area = nxt

    timeline = AreaTimeline(lanelet.id, i_init, tuple(areas))
    transitions: list[Transition] = []
    for (kind, target), per_step in overlaps.items():
        if kind == "successor":
            transitions.extend(_successor_runs(lanelet.id, target, per_step))
        else:
            n_lc = lane_change_steps(lanelet, network[target], vehicle, config)
            transitions.extend(_lane_change_windows(kind, lanelet.id, target, per_step, n_lc, dt, a_max))
    transitions.sort(key=lambda tr: (tr.first, tr.kind, tr.target))
    logger.debug(
        "Lanelet %d: area steps %d..%d, %d transitions",
        lanelet.id, timeline.start, timeline.end, len(transitions),
    )
    return timeline, transitions


def _runs(steps: Sequence[int]) -> list[list[int]]:
    runs: list[list[int]] = []
    for s in sorted(steps):
        if runs and s == runs[-1][-1] + 1:
            runs[-1].append(s)
        else:
            runs.append([s])
    return runs


def _successor_runs(source: int, target: int, per_step: dict[int, PVRegion]) -> list[Transition]:
    return [
        Transition(
            kind="successor",
            source=source,
            target=target,
            first=run[0],
            last=run[-1],
            seeds=tuple(per_step[s] for s in run),
            window_start=run[0],
        )
        for run in _runs(list(per_step))
    ]


def _lane_change_windows(
    kind: TransitionKind,
    source: int,
    target: int,
    per_step: dict[int, PVRegion],
    n_lc: int,
    dt: float,
    a_max: float,
) -> list[Transition]:
    """Windows of persistent overlap lasting at least n_lc steps."""
    out: list[Transition] = []

    def close(start: int, sets: list[PVRegion]) -> None:
        if len(sets) < n_lc:
            if sets:
                logger.debug("Dropped %s window %d->%d at step %d: %d < %d steps",
                             kind, source, target, start, len(sets), n_lc)
            return
        first = start + n_lc - 1
        out.append(Transition(
            kind=kind,
            source=source,
            target=target,
            first=first,
            last=start + len(sets) - 1,
            seeds=tuple(sets[n_lc - 1:]),
            window_start=start,
            window_sets=tuple(sets),
        ))

    for run in _runs(list(per_step)):
        start = run[0]
        sets = [per_step[start]]
        for step in run[1:]:
            running = intersect(propagate(sets[-1], dt, a_max), per_step[step])
            if running.is_empty:
                close(start, sets)
                start, sets = step, [per_step[step]]
            else:
                sets.append(running)
        close(start, sets)
    return out
