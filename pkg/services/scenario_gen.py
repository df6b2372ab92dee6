"""
Seeded random scenarios on small straight road layouts, for property tests
and `batch --random`.
"""
from __future__ import annotations

from typing import Any

import numpy as np

LANE_WIDTH = 3.5


def _parallel(n: int, length: float, speed: float) -> list[dict[str, Any]]:
    lanes = []
    for i in range(n):
        lid = i + 1
        y = i * LANE_WIDTH
        lanes.append({
            "id": lid,
            "left": lid + 1 if i + 1 < n else None,
            "right": lid - 1 if i > 0 else None,
            "successors": [],
            "speed_limit": speed,
            "width": LANE_WIDTH,
            "centerline": [[0.0, y], [length, y]],
        })
    return lanes


def _chain(n: int, length: float, speed: float) -> list[dict[str, Any]]:
    seg = length / n
    return [
        {
            "id": i + 1,
            "left": None,
            "right": None,
            "successors": [i + 2] if i + 1 < n else [],
            "speed_limit": speed,
            "width": LANE_WIDTH,
            "centerline": [[i * seg, 0.0], [(i + 1) * seg, 0.0]],
        }
        for i in range(n)
    ]


def random_scenario(seed: int, horizon: float = 4.0, max_obstacles: int = 3) -> dict[str, Any]:
    """A scenario document: at most 3 lanelets and `max_obstacles` obstacles."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    length = 120.0
    speed = float(rng.choice([10.0, 13.9, 16.7]))
    layout = "chain" if n > 1 and rng.random() < 0.4 else "parallel"
    lanelets = _chain(n, length, speed) if layout == "chain" else _parallel(n, length, speed)

    v0 = float(np.round(rng.uniform(3.0, min(12.0, speed)), 2))
    obstacles = []
    for k in range(int(rng.integers(0, max_obstacles + 1))):
        lane = lanelets[int(rng.integers(0, n))]
        (x0, y0), (x1, _) = lane["centerline"]
        x = float(np.round(rng.uniform(max(x0, 25.0), x1 - 5.0), 2))
        ov = float(np.round(rng.uniform(0.0, 8.0), 2))
        obstacles.append({
            "id": 100 + k,
            "length": 4.5,
            "width": 1.8,
            "trajectory": [
                {"t": 0.0, "x": x, "y": y0, "orientation": 0.0},
                {"t": horizon, "x": x + ov * horizon, "y": y0, "orientation": 0.0},
            ],
        })

    if layout == "chain":
        cruise_end = 5.0 + v0 * horizon
        goal_lane = lanelets[min(n - 1, int(cruise_end // (length / n)))]
    else:
        goal_lane = lanelets[0]
    goal_len = goal_lane["centerline"][1][0] - goal_lane["centerline"][0][0]
    return {
        "name": f"random_{seed:04d}",
        "lanelets": lanelets,
        "obstacles": obstacles,
        "planning_problem": {
            "initial": {"x": 5.0, "y": 0.0, "v": v0, "orientation": 0.0},
            "goal": {
                "lanelet": goal_lane["id"],
                "xi": [0.0, goal_len],
                "v": [0.0, speed],
                "time": [0.0, horizon],
            },
        },
        "config": {"dt": 0.1},
    }
