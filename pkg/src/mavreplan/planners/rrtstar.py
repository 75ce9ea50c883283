"""RRT* planners: the improved local replanner and the classical baseline.

Both share steering, parent selection, rewiring and the termination test,
and differ only in how ``x_rand`` and ``x_nearest`` are produced:

* improved: ``x_rand`` is drawn from the prolate ellipsoid spanning start
  and goal; ``x_nearest`` is a clearance-respecting point sampled around the
  waypoint of the desired trajectory closest to the obstacle nearest
  ``x_rand`` (falling back to the nearest tree vertex).  Such a point is
  not a tree vertex: ``x_new`` then joins the tree through its cheapest
  visible neighbor, the nearest vertex included.
* baseline: ``x_rand`` is uniform over the scene box and ``x_nearest`` is
  the nearest tree vertex.

Planning stops at the first feasible path unless
``cfg.refine_to_budget`` is set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from mavreplan.bspline import smooth_trajectory
from mavreplan.core import PlannerConfig, Trajectory, as_point, as_points
from mavreplan.estimator import densify_path
from mavreplan.planners.cost import path_cost
from mavreplan.planners.graph import PlanGraph
from mavreplan.sampler import build_region, sample_ball, sample_uniform


@dataclass(eq=False)
class PlanResult:
    path: Trajectory
    smoothed: Trajectory
    iterations: int
    elapsed: float
    cost: float
    success: bool
    message: str = ""
    vertices: int = 0
    smoothed_valid: bool = True
    graph: Optional[PlanGraph] = field(default=None, repr=False)

    def same_outcome(self, other: "PlanResult") -> bool:
        """Equality on everything except wall-clock time and the graph object."""
        same_cost = (self.cost == other.cost) or (np.isnan(self.cost) and np.isnan(other.cost))
        return (self.path == other.path and self.smoothed == other.smoothed
                and self.iterations == other.iterations and same_cost
                and self.success == other.success and self.message == other.message
                and self.vertices == other.vertices)


def steer(x_from, x_to, step_size: float) -> np.ndarray:
    d = x_to - x_from
    dist = float(np.linalg.norm(d))
    if dist <= step_size:
        return np.array(x_to, dtype=float)
    return x_from + d * (step_size / dist)


def path_is_clear(points, obstacle_map, clearance: float) -> bool:
    pts = as_points(points)
    if len(pts) == 1:
        return obstacle_map.point_free(pts[0], clearance)
    return all(obstacle_map.segment_collision_free(a, b, clearance) for a, b in zip(pts[:-1], pts[1:]))


class _Space:
    """Planner-side queries against one immutable map snapshot.

    Same interface as the map, minus the per-call input validation.
    """

    def __init__(self, obstacle_map):
        if isinstance(obstacle_map, _Space):
            obstacle_map = obstacle_map.snap
        self.snap = obstacle_map.snapshot() if hasattr(obstacle_map, "snapshot") else obstacle_map
        self.tree = self.snap.tree
        self.points = self.snap.points
        self._n = len(self.snap)

    def __len__(self):
        return self._n

    def point_free(self, q, clearance: float) -> bool:
        return not self.tree.any_within(q, clearance)

    def points_free(self, qs, clearance: float) -> np.ndarray:
        return ~self.tree.within_many(qs, clearance)

    def segment_collision_free(self, a, b, clearance: float) -> bool:
        return self.tree.segment_clear(a, b, clearance)

    def nearest_obstacle(self, q):
        hit = self.tree.nearest(q)
        return None if hit is None else (self.points[hit[0]], hit[1])


class _Tree:
    """Growth helpers shared by both planners."""

    def __init__(self, start, goal, obstacle_map, cfg: PlannerConfig):
        self.graph = PlanGraph(start)
        self.goal = goal
        self.map = obstacle_map
        self.cfg = cfg
        self.clearance = cfg.obstacle_fail_safe_dis
        self.goal_vertex = -1

    def free(self, a, b) -> bool:
        return self.map.segment_collision_free(a, b, self.clearance)

    def connect(self, p, default_parent: int = -1) -> int:
        """Add ``p`` under its cheapest collision-free parent and rewire.

        Parent candidates are the vertices within ``neighbor_radius`` plus
        the nearest vertex (or ``default_parent`` whose edge is known free).
        Returns the new vertex index, or -1 when no candidate connects.
        """
        g = self.graph
        near = g.near(p, self.cfg.neighbor_radius)
        cands = set(near.tolist())
        cands.add(default_parent if default_parent >= 0 else g.nearest(p))
        cands = np.fromiter(cands, dtype=np.int64)
        dist = np.linalg.norm(g.points[cands] - p, axis=1)
        total = np.asarray(g.cost)[cands] + dist
        parent = -1
        for k in np.lexsort((cands, total)):
            c = int(cands[k])
            if c == default_parent or self.free(g.points[c], p):
                parent = c
                break
        if parent < 0:
            return -1
        new = g.add(p, parent)
        self._rewire(new, near)
        return new

    def _rewire(self, new: int, near) -> None:
        g = self.graph
        p = g.points[new]
        for v in near:
            v = int(v)
            if v == g.parent[new] or v == 0:
                continue
            c = g.cost[new] + float(np.linalg.norm(g.points[v] - p))
            if c < g.cost[v] and not self._is_ancestor(v, new) and self.free(p, g.points[v]):
                g.reparent(v, new)

    def _is_ancestor(self, a: int, b: int) -> bool:
        k = b
        while k != -1:
            if k == a:
                return True
            k = self.graph.parent[k]
        return False

    def check_goal(self, v: int) -> bool:
        """Record a solution through vertex ``v`` if it reaches the goal region."""
        g = self.graph
        p = g.points[v]
        d = float(np.linalg.norm(p - self.goal))
        hit = -1
        if d <= self.cfg.goal_tolerance:
            hit = v
        elif d <= self.cfg.step_size and self.free(p, self.goal):
            hit = g.add(self.goal, v)
        if hit < 0:
            return False
        if self.goal_vertex < 0 or g.cost[hit] < g.cost[self.goal_vertex]:
            self.goal_vertex = hit
        return True


class _SampleStream:
    def __init__(self, draw: Callable[[int], np.ndarray], batch: int):
        self._draw = draw
        self._batch = batch
        self._buf = np.zeros((0, 3))
        self._i = 0

    def next(self) -> Optional[np.ndarray]:
        if self._i >= len(self._buf):
            self._buf = self._draw(self._batch)
            self._i = 0
            if len(self._buf) == 0:
                return None
        p = self._buf[self._i]
        self._i += 1
        return p


def _points_free(obstacle_map, qs, clearance: float) -> np.ndarray:
    if len(qs) == 0 or len(obstacle_map) == 0:
        return np.ones(len(qs), dtype=bool)
    if hasattr(obstacle_map, "points_free"):
        return obstacle_map.points_free(qs, clearance)
    return np.array([obstacle_map.point_free(q, clearance) for q in qs], dtype=bool)


_NO_HIT = object()
# consecutive failed guided extensions before the improved planner grows
# one step from the nearest vertex instead
STALL_LIMIT = 10
# all-rejected sample batches tolerated before an iteration is given up
MAX_EMPTY_DRAWS = 20


def _select_nearest(graph: PlanGraph, x_rand, traj, obstacle_map, cfg: PlannerConfig,
                    rng: np.random.Generator, hit=_NO_HIT) -> Tuple[np.ndarray, int]:
    """Returns ``(x_nearest, vertex index or -1)``.

    ``hit`` is the obstacle query for ``x_rand`` when the caller already has it.
    """
    if hit is _NO_HIT:
        hit = obstacle_map.nearest_obstacle(x_rand) if len(obstacle_map) else None
    wps = traj.waypoints if isinstance(traj, Trajectory) else as_points(traj)
    if hit is None or len(wps) == 0:
        v = graph.nearest(x_rand)
        return graph.points[v].copy(), v
    obs = hit[0]
    d = wps - obs
    center = wps[int(np.argmin(np.einsum("ij,ij->i", d, d)))]
    radius = cfg.nearest_radius
    clearance = cfg.obstacle_fail_safe_dis
    for _ in range(cfg.nearest_max_attempts):
        cands = sample_ball(center, radius, cfg.nearest_npts, rng)
        # closest to the waypoint first, so x_nearest hugs the trajectory
        cands = cands[np.argsort(np.linalg.norm(cands - center, axis=1), kind="stable")]
        far = np.linalg.norm(cands - obs, axis=1) > clearance
        # sequential: the first free candidate usually comes early
        for c in cands[far]:
            if obstacle_map.point_free(c, clearance):
                return c, -1
        radius *= 2.0
    v = graph.nearest(x_rand)
    return graph.points[v].copy(), v


def nearest_with_clearance(graph: PlanGraph, x_rand, traj, obstacle_map,
                           cfg: PlannerConfig, rng: np.random.Generator) -> np.ndarray:
    """Trajectory-aware choice of ``x_nearest``.

    Finds the obstacle closest to ``x_rand`` and the trajectory waypoint
    closest to that obstacle, then samples ``cfg.nearest_npts`` points in a
    ball of ``cfg.nearest_radius`` around the waypoint (radius doubling per
    attempt, ``cfg.nearest_max_attempts`` attempts).  Samples are tried in
    order of distance to the waypoint; the first one further than the
    clearance from that obstacle and from every other obstacle point is
    returned.  With no obstacles, or when every attempt
    fails, the tree vertex nearest ``x_rand`` is returned instead.
    """
    return _select_nearest(graph, as_point(x_rand), traj, _Space(obstacle_map), cfg, rng)[0]


def _finish(tree: _Tree, iterations: int, t0: float, cfg: PlannerConfig,
            reference, message: str) -> PlanResult:
    g = tree.graph
    if tree.goal_vertex < 0:
        empty = Trajectory()
        return PlanResult(empty, empty, iterations, time.perf_counter() - t0, float("nan"),
                          False, message or "no path within the iteration budget",
                          len(g), graph=g)
    raw = g.path_to(tree.goal_vertex)
    elapsed = time.perf_counter() - t0
    smoothed = smooth_trajectory(densify_path(raw, cfg.step_size), cfg.samples_per_segment)
    valid = path_is_clear(smoothed.waypoints, tree.map, cfg.obstacle_fail_safe_dis)
    if not valid:
        smoothed = Trajectory(raw)
    ref = reference if reference is not None and len(reference) else np.array([raw[0], tree.goal])
    cost = path_cost(smoothed, ref)
    return PlanResult(Trajectory(raw), smoothed, iterations, elapsed, cost, True, message,
                      len(g), valid, graph=g)


def _direct(tree: _Tree, start, goal) -> bool:
    """Solve trivially when the goal is already reached or in plain sight."""
    if np.linalg.norm(goal - start) <= tree.cfg.goal_tolerance:
        tree.goal_vertex = 0
        return True
    if tree.free(start, goal):
        tree.goal_vertex = tree.graph.add(goal, 0)
        return True
    return False


def _check_endpoints(start, goal, obstacle_map, clearance) -> str:
    if not obstacle_map.point_free(start, clearance):
        return "start violates the obstacle clearance"
    if not obstacle_map.point_free(goal, clearance):
        return "goal violates the obstacle clearance"
    return ""


def plan_improved_rrtstar(start, goal, obstacle_map, traj, cfg: PlannerConfig,
                          rng: Optional[np.random.Generator] = None,
                          reference=None) -> PlanResult:
    """Improved RRT* from ``start`` to ``goal`` guided by the desired ``traj``.

    ``reference`` is the trajectory the path cost is measured against; it
    defaults to ``traj``.
    """
    t0 = time.perf_counter()
    start, goal = as_point(start), as_point(goal)
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    traj = traj if isinstance(traj, Trajectory) else Trajectory(traj)
    obstacle_map = _Space(obstacle_map)
    tree = _Tree(start, goal, obstacle_map, cfg)
    reference = traj if reference is None else reference
    err = _check_endpoints(start, goal, obstacle_map, cfg.obstacle_fail_safe_dis)
    if err:
        return _finish(tree, 0, t0, cfg, reference, err)
    if _direct(tree, start, goal):
        return _finish(tree, 0, t0, cfg, reference, "")

    region = build_region(start, goal, cfg.conjugate_diameter)
    clearance = cfg.obstacle_fail_safe_dis

    def draw(n):
        cand = sample_uniform(region, n, rng)
        return cand[_points_free(obstacle_map, cand, clearance)]

    # rejection sampling of free x_rand, one batched clearance query per draw
    samples = _SampleStream(draw, cfg.sample_batch)
    it = stalled = 0
    for it in range(1, cfg.max_iterations + 1):
        for _ in range(MAX_EMPTY_DRAWS):
            x_rand = samples.next()
            if x_rand is not None:
                break
        else:
            continue
        hit = obstacle_map.nearest_obstacle(x_rand) if len(obstacle_map) else None
        x_nearest, v_nearest = _select_nearest(tree.graph, x_rand, traj, obstacle_map, cfg,
                                               rng, hit)
        v_new = _extend(tree, x_nearest, v_nearest, x_rand)
        stalled = stalled + 1 if v_new < 0 else 0
        if stalled >= STALL_LIMIT and v_nearest < 0:
            # guided points keep missing the tree: take one classical step
            v = tree.graph.nearest(x_rand)
            v_new = _extend(tree, tree.graph.points[v], v, x_rand)
        if v_new >= 0 and tree.check_goal(v_new) and not cfg.refine_to_budget:
            break
    return _finish(tree, it, t0, cfg, reference, "")


def _extend(tree: _Tree, x_nearest, v_nearest: int, x_rand) -> int:
    x_new = steer(x_nearest, x_rand, tree.cfg.step_size)
    if v_nearest >= 0 and np.array_equal(x_new, x_nearest):
        return -1
    if not tree.free(x_nearest, x_new):
        return -1
    return tree.connect(x_new, default_parent=v_nearest)


def scene_bounds(start, goal, obstacle_map, pad: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    pts = [np.atleast_2d(start), np.atleast_2d(goal)]
    if len(obstacle_map):
        pts.append(obstacle_map.points)
    allp = np.vstack(pts)
    return allp.min(axis=0) - pad, allp.max(axis=0) + pad


def plan_baseline_rrtstar(start, goal, obstacle_map, cfg: PlannerConfig,
                          rng: Optional[np.random.Generator] = None,
                          bounds=None, reference=None) -> PlanResult:
    """Classical RRT* sampling uniformly over ``bounds`` (default: scene box)."""
    t0 = time.perf_counter()
    start, goal = as_point(start), as_point(goal)
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    obstacle_map = _Space(obstacle_map)
    tree = _Tree(start, goal, obstacle_map, cfg)
    err = _check_endpoints(start, goal, obstacle_map, cfg.obstacle_fail_safe_dis)
    if err:
        return _finish(tree, 0, t0, cfg, reference, err)
    if _direct(tree, start, goal):
        return _finish(tree, 0, t0, cfg, reference, "")
    lo, hi = (scene_bounds(start, goal, obstacle_map) if bounds is None
              else (as_point(bounds[0]), as_point(bounds[1])))
    clearance = cfg.obstacle_fail_safe_dis

    def draw(n):
        cand = lo + (hi - lo) * rng.random((n, 3))
        return cand[_points_free(obstacle_map, cand, clearance)]

    samples = _SampleStream(draw, cfg.sample_batch)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        x_rand = samples.next()
        if x_rand is None:
            continue
        v_nearest = tree.graph.nearest(x_rand)
        x_nearest = tree.graph.points[v_nearest]
        v_new = _extend(tree, x_nearest, v_nearest, x_rand)
        if v_new >= 0 and tree.check_goal(v_new) and not cfg.refine_to_budget:
            break
    return _finish(tree, it, t0, cfg, reference, "")
