"""Bundled benchmark worlds and task definitions.

The goal-reaching maze is a 12x12 serpentine: six horizontal corridors
joined by alternating end gaps, so the longest tasks have path lengths
around six times their straight-line distance. A sealed variant closes
one gap to create a disconnected instance. The multi-agent world is two
parallel corridors joined at both ends; the inspection world is a 3-D
box room with pillar obstacles.
"""

from __future__ import annotations

import numpy as np

from .worlds import World, make_boxworld, make_maze

_W = 1
_F = 0

# six free corridor rows joined by alternating end gaps; row 11 is border.
# Gaps are two cells wide so a straight segment between states on either
# side of a wall can round the U-turn without clipping the wall tip.
ACCEPTANCE_MAZE_CELLS = [
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],   # row 0
    [_W, _W, _W, _W, _W, _W, _W, _W, _W, _W, _F, _F],   # gap right
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],
    [_F, _F, _W, _W, _W, _W, _W, _W, _W, _W, _W, _W],   # gap left
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],
    [_W, _W, _W, _W, _W, _W, _W, _W, _W, _W, _F, _F],   # gap right
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],
    [_F, _F, _W, _W, _W, _W, _W, _W, _W, _W, _W, _W],   # gap left
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],
    [_W, _W, _W, _W, _W, _W, _W, _W, _W, _W, _F, _F],   # gap right
    [_F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F, _F],
    [_W, _W, _W, _W, _W, _W, _W, _W, _W, _W, _W, _W],
]

# same maze with the middle gap closed: rows 6+ unreachable from row 0
SEALED_MAZE_CELLS = [row[:] for row in ACCEPTANCE_MAZE_CELLS]
SEALED_MAZE_CELLS[5] = [_W] * 12

# (name, start position, goal position, long-horizon flag)
GOAL_TASKS = (
    ("short", (0.5, 0.5), (6.5, 0.5), False),
    ("one-turn", (0.5, 0.5), (6.5, 2.5), False),
    ("two-turns", (0.5, 0.5), (6.5, 4.5), False),
    ("four-turns", (0.5, 0.5), (6.5, 8.5), True),
    ("five-turns", (0.5, 0.5), (0.5, 10.5), True),
)

# agents swap ends head-on; both corridors carry a pair at n=4
MAPF_ENDPOINTS = {
    "left_bottom": (0.7, 0.85),
    "right_bottom": (6.3, 0.85),
    "left_top": (0.7, 3.15),
    "right_top": (6.3, 3.15),
}
MAPF_ASSIGNMENTS = (
    ("left_bottom", "right_bottom"),
    ("right_bottom", "left_bottom"),
    ("left_top", "right_top"),
    ("right_top", "left_top"),
)

INSPECTION_STARTS = (
    (0.7, 0.7, 0.7),
    (7.3, 0.7, 0.7),
    (0.7, 7.3, 3.3),
)


def acceptance_maze() -> World:
    return make_maze(ACCEPTANCE_MAZE_CELLS)


def sealed_maze() -> World:
    return make_maze(SEALED_MAZE_CELLS)


def two_corridor_world() -> World:
    """Two parallel corridors joined at both ends by full-height gaps."""
    wall = (np.array([1.0, 1.7]), np.array([6.0, 2.3]))
    return make_boxworld(np.zeros(2), np.array([7.0, 4.0]), [wall])


def inspection_world() -> World:
    """3-D room with two full-height pillars and one floating block."""
    boxes = [
        (np.array([2.0, 2.0, 0.0]), np.array([3.0, 3.0, 4.0])),
        (np.array([5.0, 5.0, 0.0]), np.array([6.0, 6.0, 4.0])),
        (np.array([2.0, 5.0, 1.0]), np.array([3.0, 6.0, 3.0])),
    ]
    return make_boxworld(np.zeros(3), np.array([8.0, 8.0, 4.0]), boxes)


_WORLDS = {
    "maze12": acceptance_maze,
    "maze12-sealed": sealed_maze,
    "two-corridor": two_corridor_world,
    "boxroom3d": inspection_world,
}


def world_by_name(name: str) -> World:
    if name not in _WORLDS:
        raise ValueError(
            f"unknown world {name!r}; available: {sorted(_WORLDS)}")
    return _WORLDS[name]()


def mapf_queries(n_agents: int):
    """(start, goal) position pairs for the first n_agents assignments."""
    if not 1 <= n_agents <= len(MAPF_ASSIGNMENTS):
        raise ValueError(f"n_agents must be in [1, {len(MAPF_ASSIGNMENTS)}]")
    out = []
    for s, g in MAPF_ASSIGNMENTS[:n_agents]:
        out.append((np.array(MAPF_ENDPOINTS[s]), np.array(MAPF_ENDPOINTS[g])))
    return out
