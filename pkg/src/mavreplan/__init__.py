"""Local trajectory replanning for multirotors around dynamic obstacles.

Improved RRT* (ellipsoidal sampling region, trajectory-aware nearest
selection), quadratic B-spline smoothing, an R-tree instance obstacle map,
a closed-loop replanning simulator and a planner/map benchmark harness.
"""

from mavreplan.core import (
    PlannerConfig,
    Pose,
    Trajectory,
    as_point,
    normalize_yaw,
    trajectory_total_length,
)

__all__ = [
    "PlannerConfig",
    "Pose",
    "Trajectory",
    "as_point",
    "normalize_yaw",
    "trajectory_total_length",
]

__version__ = "0.1.0"
