"""Axis-aligned workspace models with inflated collision queries.

Two world kinds share one representation: a bounding box plus a list of
blocked axis-aligned boxes. Maze worlds are built from a 0/1 cell grid
(blocked cells become boxes), 3-D obstacle worlds from an explicit box
list. A point collides when its distance to any blocked box is at most
agent_radius, or when it leaves the bounds inset by agent_radius.

States throughout the package are flat arrays [p_0..p_{d-1}, v_0..v_{d-1}].
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_AGENT_RADIUS = 0.15


@dataclass(frozen=True, eq=False)
class World:
    kind: str                      # "maze2d" or "boxworld3d"
    d: int
    lo: np.ndarray                 # bounds, shape (d,)
    hi: np.ndarray
    boxes_lo: np.ndarray           # blocked regions, shape (n_boxes, d)
    boxes_hi: np.ndarray
    agent_radius: float = DEFAULT_AGENT_RADIUS
    cells: np.ndarray | None = None    # original grid for maze2d worlds
    cell_size: float = 1.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if np.any(self.hi <= self.lo):
            raise ValueError("empty bounds")
        if len(self.boxes_lo) and (
            np.any(self.boxes_lo < self.lo - 1e-9)
            or np.any(self.boxes_hi > self.hi + 1e-9)
        ):
            raise ValueError("blocked region outside bounds")

    @property
    def n_boxes(self) -> int:
        return len(self.boxes_lo)


def make_maze(cells, cell_size: float = 1.0,
              agent_radius: float = DEFAULT_AGENT_RADIUS) -> World:
    """Build a 2-D world from a 0/1 occupancy grid (1 = blocked).

    Row index maps to y, column index to x, so cells[r][c] covers
    [c, c+1) x [r, r+1) in cell units.
    """
    cells = np.asarray(cells, dtype=np.int8)
    if cells.ndim != 2:
        raise ValueError("maze cells must be a 2-D array")
    rows, cols = cells.shape
    blocked = np.argwhere(cells == 1)
    lo = np.zeros(2)
    hi = np.array([cols * cell_size, rows * cell_size], dtype=float)
    boxes_lo = np.array([[c * cell_size, r * cell_size] for r, c in blocked],
                        dtype=float).reshape(-1, 2)
    boxes_hi = boxes_lo + cell_size if len(boxes_lo) else boxes_lo
    return World("maze2d", 2, lo, hi, boxes_lo, boxes_hi,
                 agent_radius=agent_radius, cells=cells, cell_size=cell_size)


def make_boxworld(bounds_lo, bounds_hi, boxes,
                  agent_radius: float = DEFAULT_AGENT_RADIUS) -> World:
    """Build a 3-D world from bounds and a list of (lo, hi) blocked boxes."""
    lo = np.asarray(bounds_lo, dtype=float)
    hi = np.asarray(bounds_hi, dtype=float)
    d = lo.shape[0]
    if boxes:
        bl = np.array([b[0] for b in boxes], dtype=float)
        bh = np.array([b[1] for b in boxes], dtype=float)
    else:
        bl = np.zeros((0, d))
        bh = np.zeros((0, d))
    return World("boxworld3d", d, lo, hi, bl, bh, agent_radius=agent_radius)


def box_distance(world: World, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest blocked box (inf if none)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if world.n_boxes == 0:
        return np.full(len(pts), np.inf)
    # gap per axis: how far outside the box slab each coordinate lies
    gap = np.maximum(world.boxes_lo[None, :, :] - pts[:, None, :], 0.0)
    gap = np.maximum(gap, pts[:, None, :] - world.boxes_hi[None, :, :])
    return np.sqrt((gap * gap).sum(axis=2)).min(axis=1)


def points_blocked(world: World, points: np.ndarray) -> np.ndarray:
    """Inflated collision test for an array of points, vectorized."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = world.agent_radius
    out = np.any(pts < world.lo + r, axis=1) | np.any(pts > world.hi - r, axis=1)
    if world.n_boxes:
        out |= box_distance(world, pts) <= r
    return out


def point_blocked(world: World, point) -> bool:
    return bool(points_blocked(world, np.asarray(point, dtype=float))[0])


def check_segment_collision(p0, p1, world: World, n_samples: int = 5) -> bool:
    """True iff any of n_samples equally spaced points on [p0, p1]
    (endpoints included) collides."""
    if n_samples < 2:
        raise ValueError("need at least the two endpoints")
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    ts = np.linspace(0.0, 1.0, n_samples)
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    return bool(points_blocked(world, pts).any())


def clearance(world: World, point) -> tuple[float, np.ndarray]:
    """Distance to the nearest obstacle surface (box or bound face) and the
    unit direction pointing away from it. Inflation is not applied here."""
    p = np.asarray(point, dtype=float)
    best = np.inf
    direction = np.zeros(world.d)
    for axis in range(world.d):
        for sign, bound in ((1.0, world.lo[axis]), (-1.0, world.hi[axis])):
            dist = sign * (p[axis] - bound)
            if dist < best:
                best = dist
                direction = np.zeros(world.d)
                direction[axis] = sign
    if world.n_boxes:
        gap = np.maximum(world.boxes_lo - p[None, :], 0.0)
        gap = np.maximum(gap, p[None, :] - world.boxes_hi)
        dists = np.sqrt((gap * gap).sum(axis=1))
        i = int(np.argmin(dists))
        if dists[i] < best:
            best = float(dists[i])
            # closest point on the box, away-direction from it
            cp = np.clip(p, world.boxes_lo[i], world.boxes_hi[i])
            delta = p - cp
            nrm = np.linalg.norm(delta)
            if nrm > 1e-12:
                direction = delta / nrm
            else:
                # inside the box: push out through the thinnest slab
                over = np.minimum(p - world.boxes_lo[i], world.boxes_hi[i] - p)
                axis = int(np.argmin(over))
                direction = np.zeros(world.d)
                direction[axis] = 1.0 if (p[axis] - world.boxes_lo[i][axis]
                                          > world.boxes_hi[i][axis] - p[axis]) else -1.0
                best = -float(over[axis])
    return float(best), direction


def obstacle_fields(world: World, point, within: float):
    """All obstacle surfaces closer than `within`: (distances, unit away
    directions), covering blocked boxes and the outer bound faces.
    Opposing contributions from a corridor's two walls then cancel instead
    of slingshotting a potential-field follower across."""
    p = np.asarray(point, dtype=float)
    dists, dirs = [], []
    for axis in range(world.d):
        for sign, bound in ((1.0, world.lo[axis]), (-1.0, world.hi[axis])):
            dist = sign * (p[axis] - bound)
            if dist < within:
                e = np.zeros(world.d)
                e[axis] = sign
                dists.append(dist)
                dirs.append(e)
    if world.n_boxes:
        gap = np.maximum(world.boxes_lo - p[None, :], 0.0)
        gap = np.maximum(gap, p[None, :] - world.boxes_hi)
        bdists = np.sqrt((gap * gap).sum(axis=1))
        for i in np.flatnonzero(bdists < within):
            cp = np.clip(p, world.boxes_lo[i], world.boxes_hi[i])
            delta = p - cp
            nrm = np.linalg.norm(delta)
            if nrm > 1e-12:
                dists.append(float(bdists[i]))
                dirs.append(delta / nrm)
            else:
                over = np.minimum(p - world.boxes_lo[i], world.boxes_hi[i] - p)
                axis = int(np.argmin(over))
                e = np.zeros(world.d)
                e[axis] = 1.0 if (p[axis] - world.boxes_lo[i][axis]
                                  > world.boxes_hi[i][axis] - p[axis]) else -1.0
                dists.append(-float(over[axis]))
                dirs.append(e)
    if not dists:
        return np.zeros(0), np.zeros((0, world.d))
    return np.array(dists), np.array(dirs)


def sample_free_position(world: World, rng: np.random.Generator,
                         max_tries: int = 10000) -> np.ndarray:
    """Rejection-sample a collision-free position inside the bounds."""
    r = world.agent_radius
    lo, hi = world.lo + r, world.hi - r
    for _ in range(max_tries):
        p = rng.uniform(lo, hi)
        if not point_blocked(world, p):
            return p
    raise RuntimeError("no free space found; world too constrained")


def free_cell_centers(world: World) -> np.ndarray:
    """Centers of free cells for maze worlds (used by coverage checks)."""
    if world.cells is None:
        raise ValueError("world has no cell grid")
    free = np.argwhere(world.cells == 0)
    return (free[:, ::-1] + 0.5) * world.cell_size


def save_world(world: World, path) -> None:
    if world.kind == "maze2d" and world.cells is not None:
        doc = {
            "kind": "maze2d",
            "cells": world.cells.tolist(),
            "cell_size": world.cell_size,
            "agent_radius": world.agent_radius,
        }
    else:
        doc = {
            "kind": world.kind,
            "bounds": [world.lo.tolist(), world.hi.tolist()],
            "boxes": [[bl.tolist(), bh.tolist()]
                      for bl, bh in zip(world.boxes_lo, world.boxes_hi)],
            "agent_radius": world.agent_radius,
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_world(path) -> World:
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "maze2d":
        return make_maze(doc["cells"], cell_size=doc.get("cell_size", 1.0),
                         agent_radius=doc.get("agent_radius", DEFAULT_AGENT_RADIUS))
    if kind == "boxworld3d":
        return make_boxworld(doc["bounds"][0], doc["bounds"][1], doc["boxes"],
                             agent_radius=doc.get("agent_radius", DEFAULT_AGENT_RADIUS))
    raise ValueError(f"unknown world kind: {kind!r}")
