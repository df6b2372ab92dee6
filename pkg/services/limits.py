"""
Closed-form kinematic limits: cornering speed and minimum lane-change time.
"""
from __future__ import annotations

import math


def max_corner_speed(curvature: float, a_max: float) -> float:
    """Speed at which lateral acceleration reaches a_max on curvature Δφ/Δξ.

    Zero curvature returns +inf; callers clamp with the legal limit.
    """
    if curvature < 0.0:
        raise ValueError(f"curvature must be non-negative, got {curvature}")
    if curvature == 0.0:
        return math.inf
    return math.sqrt(a_max / curvature)


def min_lane_change_time(lateral_offset: float, a_max: float) -> float:
    """Shortest time to move sideways by lateral_offset at bounded acceleration."""
    if lateral_offset < 0.0:
        raise ValueError(f"lateral offset must be non-negative, got {lateral_offset}")
    if a_max <= 0.0:
        raise ValueError(f"a_max must be positive, got {a_max}")
    return math.sqrt(4.0 * lateral_offset / a_max)
