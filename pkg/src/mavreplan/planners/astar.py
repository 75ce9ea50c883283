"""26-connected A* over a voxelized obstacle map.

A voxel is blocked when its center lies closer than
``clearance + voxel * sqrt(3) / 2`` to an obstacle point, so every free
voxel center keeps ``clearance`` from the raw points regardless of where
the point sits inside its voxel.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
import numpy as np
from scipy import ndimage

from mavreplan.bspline import smooth_trajectory
from mavreplan.core import Trajectory, as_point
from mavreplan.planners.cost import path_cost
from mavreplan.planners.rrtstar import PlanResult, path_is_clear, scene_bounds


class PlanningError(RuntimeError):
    pass


@dataclass
class VoxelGrid:
    lo: np.ndarray
    voxel: float
    blocked: np.ndarray  # bool, shape (nx, ny, nz)

    @property
    def shape(self):
        return self.blocked.shape

    def index(self, p) -> tuple:
        ijk = np.floor((as_point(p) - self.lo) / self.voxel).astype(int)
        if np.any(ijk < 0) or np.any(ijk >= self.shape):
            raise PlanningError(f"point {as_point(p).tolist()} outside the grid bounds")
        return tuple(int(v) for v in ijk)

    def center(self, ijk) -> np.ndarray:
        return self.lo + (np.asarray(ijk, dtype=float) + 0.5) * self.voxel


def build_grid(obstacle_map, bounds, voxel: float, clearance: float) -> VoxelGrid:
    lo, hi = as_point(bounds[0]), as_point(bounds[1])
    if not voxel > 0:
        raise ValueError("voxel must be > 0")
    if np.any(hi <= lo):
        raise ValueError("empty bounds")
    shape = tuple(int(v) for v in np.ceil((hi - lo) / voxel - 1e-9))
    occupied = np.zeros(shape, dtype=bool)
    pts = obstacle_map.points if len(obstacle_map) else np.zeros((0, 3))
    inflate = clearance + voxel * math.sqrt(3.0) / 2.0
    # obstacle points just outside the box still inflate voxels inside it
    margin = int(math.ceil(inflate / voxel)) + 1
    if len(pts):
        ijk = np.floor((pts - lo) / voxel).astype(int) + margin
        big = tuple(s + 2 * margin for s in shape)
        ok = np.all((ijk >= 0) & (ijk < big), axis=1)
        padded = np.zeros(big, dtype=bool)
        padded[tuple(ijk[ok].T)] = True
        # distance (in voxel units) from each voxel center to the nearest occupied center
        dist = ndimage.distance_transform_edt(~padded)
        sl = tuple(slice(margin, margin + s) for s in shape)
        occupied = dist[sl] * voxel < inflate
    return VoxelGrid(lo, voxel, occupied)


_OFFSETS = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]


def _neighbors(shape):
    """Flat index deltas and step lengths on a grid padded by one voxel."""
    sy, sz = (shape[1] + 2) * (shape[2] + 2), shape[2] + 2
    return [(dx * sy + dy * sz + dz, math.sqrt(dx * dx + dy * dy + dz * dz))
            for dx, dy, dz in _OFFSETS]


def _padded_flat(grid: VoxelGrid) -> np.ndarray:
    padded = np.ones(tuple(s + 2 for s in grid.shape), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = grid.blocked
    return padded.ravel()


def _flat(ijk, shape) -> int:
    return ((ijk[0] + 1) * (shape[1] + 2) + ijk[1] + 1) * (shape[2] + 2) + ijk[2] + 1


def _unflat(k, shape):
    sz = shape[2] + 2
    sy = (shape[1] + 2) * sz
    return (k // sy - 1, (k % sy) // sz - 1, k % sz - 1)


def grid_search(grid: VoxelGrid, s_ijk, g_ijk, heuristic: bool = True):
    """Shortest 26-connected path in voxel units.

    Returns ``(cost, [ijk, ...])``.  With ``heuristic=False`` this is plain
    Dijkstra.
    """
    shape = grid.shape
    blocked = _padded_flat(grid).tolist()
    nbrs = _neighbors(shape)
    s, g = _flat(s_ijk, shape), _flat(g_ijk, shape)
    if blocked[s] or blocked[g]:
        raise PlanningError("start or goal voxel is blocked")
    sz = shape[2] + 2
    sy = (shape[1] + 2) * sz
    gx, gy, gz = g // sy, (g % sy) // sz, g % sz

    def h(k):
        if not heuristic:
            return 0.0
        dx, dy, dz = k // sy - gx, (k % sy) // sz - gy, k % sz - gz
        return math.sqrt(dx * dx + dy * dy + dz * dz)

    best = {s: 0.0}
    parent = {s: -1}
    closed = set()
    heap = [(h(s), 0.0, s)]
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        _, cost, k = pop(heap)
        if k in closed:
            continue
        if k == g:
            out = []
            while k != -1:
                out.append(_unflat(k, shape))
                k = parent[k]
            return cost, out[::-1]
        closed.add(k)
        for dk, step in nbrs:
            n = k + dk
            if blocked[n] or n in closed:
                continue
            c = cost + step
            if c < best.get(n, math.inf):
                best[n] = c
                parent[n] = k
                push(heap, (c + h(n), c, n))
    raise PlanningError("no grid path between start and goal")


def plan_astar_grid(start, goal, obstacle_map, voxel: float = 0.1, bounds=None,
                    clearance: float = 0.5, reference=None,
                    samples_per_segment: int = 10) -> PlanResult:
    """A* from ``start`` to ``goal``; raises :class:`PlanningError` on failure.

    The grid build is part of the measured time; smoothing is not.  The
    returned path is ``start``, the interior voxel centers, then ``goal``.
    """
    t0 = time.perf_counter()
    start, goal = as_point(start), as_point(goal)
    if bounds is None:
        bounds = scene_bounds(start, goal, obstacle_map, pad=voxel)
    grid = build_grid(obstacle_map, bounds, voxel, clearance)
    s_ijk, g_ijk = grid.index(start), grid.index(goal)
    _, cells = grid_search(grid, s_ijk, g_ijk)
    inner = [grid.center(c) for c in cells[1:-1]]
    raw = np.vstack([start] + inner + [goal])
    elapsed = time.perf_counter() - t0
    smoothed = smooth_trajectory(raw, samples_per_segment)
    valid = path_is_clear(smoothed.waypoints, obstacle_map, clearance)
    if not valid:
        smoothed = Trajectory(raw)
    ref = reference if reference is not None and len(reference) else np.array([start, goal])
    return PlanResult(Trajectory(raw), smoothed, len(cells), elapsed, path_cost(smoothed, ref),
                      True, "", len(cells), valid)
