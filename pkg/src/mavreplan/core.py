"""Shared geometric and configuration types.

Points are plain ``numpy`` arrays of shape ``(3,)`` in meters. A
:class:`Trajectory` is an immutable polyline of such points; continuous
evaluation lives in :mod:`mavreplan.bspline`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

Point3 = np.ndarray


def as_point(p: Any) -> Point3:
    """Coerce ``p`` to a finite float array of shape (3,)."""
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 coordinates, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite point {arr}")
    return arr


def as_points(points: Any) -> np.ndarray:
    """Coerce a sequence of points to a finite ``(N, 3)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 3))
    arr = arr.reshape(-1, 3)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates in point set")
    return arr


def normalize_yaw(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"non-finite yaw {a!r}")
    r = math.fmod(a, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    elif r > math.pi:
        r -= 2.0 * math.pi
    return r


@dataclass(frozen=True)
class Pose:
    position: Point3
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(as_point(self.position)))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return self.yaw == other.yaw and np.array_equal(self.position, other.position)

    __hash__ = None


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def trajectory_total_length(t: "Trajectory | np.ndarray | Sequence") -> float:
    """Sum of Euclidean distances between consecutive waypoints."""
    pts = t.waypoints if isinstance(t, Trajectory) else as_points(t)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered waypoint sequence, optionally time-stamped.

    Instances are immutable; every "mutating" helper returns a new object.
    """

    waypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = _frozen(as_points(self.waypoints))
        object.__setattr__(self, "waypoints", pts)
        if self.timestamps is not None:
            ts = _frozen(np.asarray(self.timestamps, dtype=float).reshape(-1))
            if len(ts) != len(pts):
                raise ValueError("timestamps and waypoints differ in length")
            if len(ts) > 1 and not np.all(np.diff(ts) > 0):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.waypoints)

    def __bool__(self) -> bool:
        return len(self.waypoints) > 0

    def __getitem__(self, i):
        return self.waypoints[i]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        if (self.timestamps is None) != (other.timestamps is None):
            return False
        if self.timestamps is not None and not np.array_equal(self.timestamps, other.timestamps):
            return False
        return np.array_equal(self.waypoints, other.waypoints)

    __hash__ = None

    @property
    def total_length(self) -> float:
        return trajectory_total_length(self)

    @property
    def front(self) -> Point3:
        if not len(self):
            raise IndexError("front of empty trajectory")
        return self.waypoints[0]

    @property
    def back(self) -> Point3:
        if not len(self):
            raise IndexError("back of empty trajectory")
        return self.waypoints[-1]

    def drop_front(self, k: int = 1) -> "Trajectory":
        ts = None if self.timestamps is None else self.timestamps[k:]
        return Trajectory(self.waypoints[k:], ts)

    def concat(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(np.vstack([self.waypoints, other.waypoints]))


@dataclass(frozen=True)
class PlannerConfig:
    """Planner and estimator parameters, SI units throughout.

    ``obstacle_fail_safe_dis`` is the clearance every planned waypoint and
    edge keeps from the nearest obstacle point.
    """

    replanning_dis: float = 5.0
    obs_avoid_dis: float = 2.0
    obstacle_fail_safe_dis: float = 0.5
    conjugate_diameter: float = 4.0
    max_iterations: int = 3000
    step_size: float = 1.0
    neighbor_radius: float = 1.0
    goal_tolerance: float = 0.3
    waypoint_reached_delta: float = 0.2
    rng_seed: int = 0
    # nearest selection around the trajectory
    nearest_npts: int = 10
    nearest_max_attempts: int = 2
    nearest_radius: float = 4.0
    sample_batch: int = 16
    samples_per_segment: int = 10
    refine_to_budget: bool = False

    def __post_init__(self):
        for name in ("replanning_dis", "obs_avoid_dis", "obstacle_fail_safe_dis",
                     "conjugate_diameter", "step_size", "neighbor_radius",
                     "goal_tolerance", "waypoint_reached_delta", "nearest_radius"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive distance, got {v!r}")
        if self.obstacle_fail_safe_dis >= self.obs_avoid_dis:
            raise ValueError("obstacle_fail_safe_dis must be < obs_avoid_dis")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.nearest_npts < 1 or self.nearest_max_attempts < 1:
            raise ValueError("nearest selection needs npts >= 1 and attempts >= 1")
        if self.sample_batch < 1 or self.samples_per_segment < 1:
            raise ValueError("sample_batch and samples_per_segment must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlannerConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "PlannerConfig":
        return dataclasses.replace(self, **changes)
