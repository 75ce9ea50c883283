"""Trajectory estimator: target construction and the online/rest window.

The desired trajectory is densified so no two consecutive waypoints are
further apart than ``obs_avoid_dis``, smoothed, then split into an online
window (the next ``replanning_dis`` meters) and the remainder.  As the
vehicle flies, reached waypoints are consumed from the front of the window
and the window is refilled from the remainder.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from mavreplan.bspline import smooth_trajectory
from mavreplan.core import PlannerConfig, Point3, Pose, Trajectory, as_point, as_points


def densify(p1, p2, obs_avoid_dis: float) -> List[Point3]:
    """Insert intermediate waypoints between ``p1`` and ``p2``.

    Each step moves ``obs_avoid_dis`` from the latest point along the
    spherical direction (azimuth ``theta``, polar angle ``phi``) towards
    ``p2`` until the remainder fits in one gap.
    """
    if not obs_avoid_dis > 0:
        raise ValueError("obs_avoid_dis must be > 0")
    p1, p2 = as_point(p1), as_point(p2)
    out = [p1]
    cur = p1
    while np.linalg.norm(p2 - cur) > obs_avoid_dis:
        px, py, pz = p2 - cur
        theta = math.atan2(py, px)
        phi = math.atan2(math.hypot(px, py), pz)
        cur = cur + obs_avoid_dis * np.array([
            math.sin(phi) * math.cos(theta),
            math.sin(phi) * math.sin(theta),
            math.cos(phi),
        ])
        out.append(cur)
    out.append(p2)
    return out


def densify_path(waypoints, obs_avoid_dis: float) -> np.ndarray:
    pts = as_points(waypoints)
    if len(pts) < 2:
        return pts.copy()
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        out.extend(densify(a, b, obs_avoid_dis)[1:])
    return np.array(out)


def build_target(waypoints: Sequence, cfg: PlannerConfig) -> Trajectory:
    """Densify and smooth the input waypoints into the target trajectory."""
    pts = as_points(waypoints)
    if len(pts) < 2:
        raise ValueError("the desired trajectory needs at least 2 waypoints")
    dense = densify_path(pts, cfg.obs_avoid_dis)
    return smooth_trajectory(dense, cfg.samples_per_segment)


def split_target(t_target: Trajectory, replanning_dis: float) -> Tuple[Trajectory, Trajectory]:
    """Split into the online window and the rest.

    The window is the longest prefix shorter than ``replanning_dis`` plus the
    first waypoint that reaches the bound.
    """
    pts = t_target.waypoints
    if len(pts) == 0:
        return Trajectory(), Trajectory()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    crossing = np.nonzero(cum >= replanning_dis)[0]
    k = int(crossing[0]) + 1 if len(crossing) else len(pts)
    return Trajectory(pts[:k]), Trajectory(pts[k:])


@dataclass(frozen=True)
class EstimatorState:
    t_online: Trajectory
    t_rest: Trajectory
    p_current: Pose
    replanning_dis: float
    delta: float

    def with_pose(self, pose: Pose) -> "EstimatorState":
        return dataclasses.replace(self, p_current=pose)


def initial_state(t_target: Trajectory, pose: Pose, cfg: PlannerConfig) -> EstimatorState:
    online, rest = split_target(t_target, cfg.replanning_dis)
    return EstimatorState(online, rest, pose, cfg.replanning_dis, cfg.waypoint_reached_delta)


def refill_online(state: EstimatorState) -> EstimatorState:
    online = state.t_online.waypoints
    rest = state.t_rest.waypoints
    if len(rest) == 0:
        return state
    length = state.t_online.total_length
    k = 0
    last = online[-1] if len(online) else None
    while length < state.replanning_dis and k < len(rest):
        if last is not None:
            length += float(np.linalg.norm(rest[k] - last))
        last = rest[k]
        k += 1
    if k == 0:
        return state
    return dataclasses.replace(
        state,
        t_online=Trajectory(np.vstack([online, rest[:k]])),
        t_rest=Trajectory(rest[k:]),
    )


def consume_reached(state: EstimatorState) -> EstimatorState:
    """Pop waypoints closer than ``delta`` to the current position."""
    pts = state.t_online.waypoints
    pos = state.p_current.position
    k = 0
    while k < len(pts) and np.linalg.norm(pos - pts[k]) < state.delta:
        k += 1
    if k == 0:
        return state
    return dataclasses.replace(state, t_online=state.t_online.drop_front(k))


def needs_replan(p_current: Pose, obstacle_map, obs_avoid_dis: float) -> bool:
    """True iff an obstacle point lies strictly within ``obs_avoid_dis``."""
    hit = obstacle_map.nearest_obstacle(p_current.position)
    return hit is not None and hit[1] < obs_avoid_dis


def replace_online(state: EstimatorState, t_projected: Trajectory,
                   goal_tolerance: float) -> EstimatorState:
    if not len(t_projected) or not len(state.t_online):
        raise ValueError("cannot replace an empty online window")
    if np.linalg.norm(t_projected.front - state.p_current.position) > goal_tolerance:
        raise ValueError("projected trajectory does not start at the current pose")
    if np.linalg.norm(t_projected.back - state.t_online.back) > goal_tolerance:
        raise ValueError("projected trajectory does not end at the online window's end")
    return dataclasses.replace(state, t_online=t_projected)
