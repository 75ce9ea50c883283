"""Closed-loop replanning simulation with a kinematic point-mass vehicle.

Each tick runs, in order: obstacle cloud generation and map ingestion,
pose update of the estimator window, the replanning decision and finally
the velocity and yaw-rate command.  Everything is driven by the scenario
seed, so two runs of one scenario produce identical logs.

Scenario JSON keys::

    {"name": str,
     "waypoints": [[x,y,z], ...],
     "static_obstacles": [{"center": [x,y,z], "radius": r}
                          | {"lo": [x,y,z], "hi": [x,y,z]}
                          | {"cloud": "file.xyz", "format": "xyz"}, ...],
     "dynamic_obstacles": [{"center": [x,y,z], "velocity": [vx,vy,vz],
                            "radius": r, "points": n}, ...],
     "mav": {"speed": 1.0, "start": [x,y,z], "yaw": 0.0},
     "config": {PlannerConfig overrides},
     "tick_hz": 15, "duration_s": null, "rng_seed": 0,
     "sensor_range": 5.0, "point_spacing": 0.1, "map_resolution": 0.1,
     "replan_retries": 3, "latency_injection": false,
     "k_yaw": 1.5, "max_yaw_rate": 1.0}

``duration_s`` defaults to twice the time needed to fly the waypoints.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from mavreplan.core import PlannerConfig, Pose, Trajectory, as_point, as_points, normalize_yaw
from mavreplan.estimator import (build_target, consume_reached, initial_state, needs_replan,
                                 refill_online, replace_online)
from mavreplan.obstacle_map import ObstacleMap, PointCloud, crop_sphere, read_cloud
from mavreplan.planners import path_cost, path_is_clear, plan_improved_rrtstar
from mavreplan.scenes import box_points, sphere_count, sphere_points

K_YAW = 1.5
MAX_YAW_RATE = 1.0
TICK_HZ = 15.0
DEFAULT_SPEED = 1.0

MODES = ("following", "hovering-replan", "done", "stuck")
LOG_FIELDS = ["tick", "time", "x", "y", "z", "yaw", "vx", "vy", "vz", "yaw_rate", "mode",
              "replans", "min_obstacle_dist"]


@dataclass
class DynamicObstacle:
    center: np.ndarray
    velocity: np.ndarray
    radius: float
    points: int = 200

    def __post_init__(self):
        self.center = as_point(self.center)
        self.velocity = as_point(self.velocity)
        if not self.radius > 0:
            raise ValueError("obstacle radius must be > 0")
        if self.points < 1:
            raise ValueError("obstacle point density must be >= 1")

    def center_at(self, t: float) -> np.ndarray:
        return self.center + self.velocity * t


@dataclass
class Scenario:
    waypoints: np.ndarray
    static_obstacles: List[dict] = field(default_factory=list)
    dynamic_obstacles: List[DynamicObstacle] = field(default_factory=list)
    speed: float = DEFAULT_SPEED
    start: Optional[Pose] = None
    cfg: PlannerConfig = field(default_factory=PlannerConfig)
    tick_hz: float = TICK_HZ
    duration_s: Optional[float] = None
    rng_seed: int = 0
    sensor_range: float = 5.0
    point_spacing: float = 0.1
    map_resolution: float = 0.1
    replan_retries: int = 3
    latency_injection: bool = False
    k_yaw: float = K_YAW
    max_yaw_rate: float = MAX_YAW_RATE
    name: str = "scenario"
    base_dir: Optional[Path] = None
    _static: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.waypoints = as_points(self.waypoints)
        if len(self.waypoints) < 2:
            raise ValueError("a scenario needs at least 2 waypoints")
        if not self.tick_hz > 0:
            raise ValueError("tick_hz must be > 0")
        if not self.speed > 0:
            raise ValueError("speed must be > 0")
        for s in self.static_obstacles:
            if "radius" in s and not float(s["radius"]) > 0:
                raise ValueError("obstacle radius must be > 0")
        if self.start is None:
            self.start = Pose(self.waypoints[0], 0.0)
        if self.duration_s is None:
            length = float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())
            self.duration_s = 2.0 * length / self.speed

    def static_points(self) -> np.ndarray:
        if self._static is None:
            parts = [np.zeros((0, 3))]
            for s in self.static_obstacles:
                if "cloud" in s:
                    path = Path(s["cloud"])
                    if not path.is_absolute() and self.base_dir is not None:
                        path = self.base_dir / path
                    parts.append(read_cloud(path, s.get("format", "xyz")).points)
                elif "radius" in s:
                    r = float(s["radius"])
                    parts.append(sphere_points(s["center"], r, sphere_count(r, self.point_spacing)))
                else:
                    parts.append(box_points(s["lo"], s["hi"], self.point_spacing))
            self._static = np.vstack(parts)
        return self._static


def scenario_from_dict(d: dict, base_dir: Optional[Path] = None) -> Scenario:
    mav = d.get("mav", {})
    try:
        dyn = [DynamicObstacle(o["center"], o.get("velocity", [0.0, 0.0, 0.0]), float(o["radius"]),
                               int(o.get("points", 200)))
               for o in d.get("dynamic_obstacles", [])]
        start = None
        if "start" in mav:
            start = Pose(mav["start"], float(mav.get("yaw", 0.0)))
        return Scenario(
            waypoints=d["waypoints"],
            static_obstacles=list(d.get("static_obstacles", [])),
            dynamic_obstacles=dyn,
            speed=float(mav.get("speed", DEFAULT_SPEED)),
            start=start,
            cfg=PlannerConfig.from_dict(d.get("config", {})),
            tick_hz=float(d.get("tick_hz", TICK_HZ)),
            duration_s=d.get("duration_s"),
            rng_seed=int(d.get("rng_seed", 0)),
            sensor_range=float(d.get("sensor_range", 5.0)),
            point_spacing=float(d.get("point_spacing", 0.1)),
            map_resolution=float(d.get("map_resolution", 0.1)),
            replan_retries=int(d.get("replan_retries", 3)),
            latency_injection=bool(d.get("latency_injection", False)),
            k_yaw=float(d.get("k_yaw", K_YAW)),
            max_yaw_rate=float(d.get("max_yaw_rate", MAX_YAW_RATE)),
            name=d.get("name", "scenario"),
            base_dir=base_dir,
        )
    except KeyError as e:
        raise ValueError(f"scenario is missing key {e.args[0]!r}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON ({e})") from None
    return scenario_from_dict(d, path.parent)


# ------------------------------------------------------------------ kinematics
def _next_target(pos: np.ndarray, pts: np.ndarray, eps: float = 1e-9) -> Optional[np.ndarray]:
    for p in pts:
        if np.linalg.norm(p - pos) > eps:
            return p
    return None


def step_follower(pose: Pose, t_online: Trajectory, speed: float, dt: float,
                  k_yaw: float = K_YAW, max_yaw_rate: float = MAX_YAW_RATE
                  ) -> Tuple[Pose, np.ndarray, float]:
    """One explicit Euler step towards the next waypoint of ``t_online``.

    Waypoints coinciding with the current position are skipped.  Returns
    the new pose, the commanded velocity and the yaw rate.
    """
    if not len(t_online):
        raise ValueError("t_online is empty")
    pos = pose.position
    target = _next_target(pos, t_online.waypoints)
    if target is None:
        return pose, np.zeros(3), 0.0
    d = target - pos
    vel = speed * d / np.linalg.norm(d)
    yaw_rate = 0.0
    if math.hypot(d[0], d[1]) > 1e-9:
        err = normalize_yaw(math.atan2(d[1], d[0]) - pose.yaw)
        yaw_rate = float(np.clip(k_yaw * err, -max_yaw_rate, max_yaw_rate))
    new = Pose(pos + vel * dt, pose.yaw + yaw_rate * dt)
    return new, vel, yaw_rate


def step_obstacles(scenario: Scenario, t: float) -> PointCloud:
    """Static points plus every dynamic sphere at time ``t``."""
    parts = [scenario.static_points()]
    for o in scenario.dynamic_obstacles:
        parts.append(sphere_points(o.center_at(t), o.radius, o.points))
    return PointCloud(np.vstack(parts), t)


# ------------------------------------------------------------------ main loop
@dataclass
class TickRecord:
    tick: int
    time: float
    position: np.ndarray
    yaw: float
    velocity: np.ndarray
    yaw_rate: float
    mode: str
    replans: int
    min_obstacle_dist: float


@dataclass
class SimLog:
    records: List[TickRecord] = field(default_factory=list)
    completed: bool = False
    path_cost: float = math.nan
    min_obstacle_dist: float = math.inf
    replans: int = 0
    replan_failures: int = 0
    latencies: List[float] = field(default_factory=list)
    name: str = "scenario"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in self.records:
            w.writerow([r.tick, repr(r.time), *map(repr, r.position.tolist()), repr(r.yaw),
                        *map(repr, r.velocity.tolist()), repr(r.yaw_rate), r.mode, r.replans,
                        repr(r.min_obstacle_dist)])
        return buf.getvalue()

    def summary(self) -> dict:
        lat = self.latencies
        return {
            "name": self.name,
            "completed": self.completed,
            "ticks": len(self.records),
            "final_mode": self.records[-1].mode if self.records else None,
            "path_cost": None if math.isnan(self.path_cost) else self.path_cost,
            "min_obstacle_dist": None if math.isinf(self.min_obstacle_dist) else self.min_obstacle_dist,
            "replans": self.replans,
            "replan_failures": self.replan_failures,
            "planner_latency_ms": [x * 1e3 for x in lat],
            "planner_latency_median_ms": float(np.median(lat)) * 1e3 if lat else None,
        }


def _min_dist(points: np.ndarray, q: np.ndarray) -> float:
    if len(points) == 0:
        return math.inf
    d = points - q
    return float(np.sqrt(np.einsum("ij,ij->i", d, d).min()))


def _ahead_is_clear(pose: Pose, t_online: Trajectory, obstacle_map, clearance: float,
                    slack_clearance: float) -> bool:
    # reached waypoints are dropped within a tolerance, so the leg from the
    # pose to the next waypoint may cut a corner by up to one tick of travel
    pts = t_online.waypoints
    if not obstacle_map.segment_collision_free(pose.position, pts[0], max(slack_clearance, 0.0)):
        return False
    return len(pts) == 1 or path_is_clear(pts, obstacle_map, clearance)


def _extend_to_free_goal(state, obstacle_map, clearance: float):
    """Pull waypoints from the rest into the window until its end is free."""
    online, rest = state.t_online.waypoints, state.t_rest.waypoints
    k = 0
    while not obstacle_map.point_free(online[-1] if k == 0 else rest[k - 1], clearance):
        if k == len(rest):
            return None
        k += 1
    if k == 0:
        return state
    return type(state)(Trajectory(np.vstack([online, rest[:k]])), Trajectory(rest[k:]),
                       state.p_current, state.replanning_dis, state.delta)


def run_simulation(scenario: Scenario) -> SimLog:
    cfg = scenario.cfg
    dt = 1.0 / scenario.tick_hz
    rng = np.random.default_rng(scenario.rng_seed)
    t_target = build_target(scenario.waypoints, cfg)
    pose = scenario.start
    state = initial_state(t_target, pose, cfg)
    clearance = cfg.obstacle_fail_safe_dis
    log = SimLog(name=scenario.name)
    flown = [pose.position]
    failures = 0
    hover_ticks = 0
    n_ticks = int(math.floor(scenario.duration_s * scenario.tick_hz + 1e-9))

    for k in range(n_ticks + 1):
        t = k * dt
        cloud = step_obstacles(scenario, t)
        omap = ObstacleMap(resolution=scenario.map_resolution, capacity=1)
        omap.insert_cloud(crop_sphere(cloud, pose.position, scenario.sensor_range))
        dmin = _min_dist(cloud.points, pose.position)
        log.min_obstacle_dist = min(log.min_obstacle_dist, dmin)

        state = refill_online(consume_reached(state.with_pose(pose)))
        tick_pose = pose
        vel, yaw_rate = np.zeros(3), 0.0
        if not len(state.t_online) and not len(state.t_rest):
            mode = "done"
        elif hover_ticks > 0:
            hover_ticks -= 1
            mode = "hovering-replan"
        elif (needs_replan(pose, omap, cfg.obs_avoid_dis)
              and not _ahead_is_clear(pose, state.t_online, omap, clearance,
                                      clearance - scenario.speed * dt)):
            mode = "hovering-replan"
            ext = _extend_to_free_goal(state, omap, clearance)
            ok = False
            if ext is not None:
                res = plan_improved_rrtstar(pose.position, ext.t_online.back, omap,
                                            ext.t_online, cfg, rng)
                log.latencies.append(res.elapsed)
                if res.success:
                    state = replace_online(ext, res.smoothed, cfg.goal_tolerance)
                    log.replans += 1
                    ok = True
                    if scenario.latency_injection:
                        hover_ticks = int(math.ceil(res.elapsed * scenario.tick_hz))
            if ok:
                failures = 0
            else:
                failures += 1
                log.replan_failures += 1
                if failures > scenario.replan_retries:
                    mode = "stuck"
        else:
            mode = "following"
            pose, vel, yaw_rate = step_follower(pose, state.t_online, scenario.speed, dt,
                                                scenario.k_yaw, scenario.max_yaw_rate)
            flown.append(pose.position)

        # pose sensed at the start of the tick, command issued during it
        log.records.append(TickRecord(k, t, tick_pose.position, tick_pose.yaw, vel, yaw_rate,
                                      mode, log.replans, dmin))
        if mode in ("done", "stuck"):
            break

    log.completed = bool(log.records) and log.records[-1].mode == "done"
    if len(flown) > 1:
        log.path_cost = path_cost(np.array(flown), t_target)
    return log


def write_outputs(log: SimLog, out_dir, stem: str = "simulation") -> Tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    csv_path.write_text(log.to_csv())
    json_path.write_text(json.dumps(log.summary(), indent=1, sort_keys=True) + "\n")
    return csv_path, json_path
