"""Benchmark scenes: obstacle primitives sampled as surface point clouds.

Scene JSON keys::

    {"name": str, "bounds": [[x,y,z], [x,y,z]], "start": [x,y,z], "goal": [x,y,z],
     "trajectory": [[x,y,z], ...], "point_spacing": 0.1,
     "spheres": [{"center": [x,y,z], "radius": r}, ...],
     "boxes": [{"lo": [x,y,z], "hi": [x,y,z]}, ...],
     "clouds": [{"path": "file.xyz", "format": "xyz"}, ...]}

Alternatively ``{"generator": {"seed": int, ...}}`` builds a cluttered
scene with :func:`generate_scene`.  Surface sampling is deterministic
(Fibonacci lattice on spheres, regular grid on box faces).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from mavreplan.core import as_point, as_points
from mavreplan.obstacle_map import ObstacleMap, read_cloud

DATA_DIR = Path(__file__).parent / "data"
REFERENCE_SCENE = DATA_DIR / "reference_scene.json"


def sphere_points(center, radius: float, n: int) -> np.ndarray:
    """``n`` points spread evenly over a sphere surface (Fibonacci lattice)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    unit = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return as_point(center) + radius * unit


def sphere_count(radius: float, spacing: float) -> int:
    return max(8, int(round(4.0 * math.pi * radius * radius / (spacing * spacing))))


def box_points(lo, hi, spacing: float) -> np.ndarray:
    lo, hi = as_point(lo), as_point(hi)
    axes = [np.linspace(lo[d], hi[d], max(2, int(math.ceil((hi[d] - lo[d]) / spacing)) + 1))
            for d in range(3)]
    faces = []
    for d in range(3):
        u, v = [k for k in range(3) if k != d]
        gu, gv = np.meshgrid(axes[u], axes[v], indexing="ij")
        for val in (lo[d], hi[d]):
            f = np.empty((gu.size, 3))
            f[:, d] = val
            f[:, u] = gu.ravel()
            f[:, v] = gv.ravel()
            faces.append(f)
    return np.unique(np.vstack(faces), axis=0)


@dataclass
class Scene:
    bounds: np.ndarray  # (2, 3)
    start: np.ndarray
    goal: np.ndarray
    trajectory: np.ndarray
    spheres: List[dict] = field(default_factory=list)
    boxes: List[dict] = field(default_factory=list)
    clouds: List[dict] = field(default_factory=list)
    point_spacing: float = 0.1
    name: str = "scene"
    base_dir: Optional[Path] = None

    def cloud(self) -> np.ndarray:
        parts = [np.zeros((0, 3))]
        for s in self.spheres:
            parts.append(sphere_points(s["center"], s["radius"],
                                       sphere_count(s["radius"], self.point_spacing)))
        for b in self.boxes:
            parts.append(box_points(b["lo"], b["hi"], self.point_spacing))
        for c in self.clouds:
            path = Path(c["path"])
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            parts.append(read_cloud(path, c.get("format", "xyz")).points)
        return np.vstack(parts)

    def obstacle_map(self, resolution: Optional[float] = None) -> ObstacleMap:
        return ObstacleMap.from_points(self.cloud(), resolution or self.point_spacing)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": self.bounds.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "trajectory": self.trajectory.tolist(),
            "point_spacing": self.point_spacing,
            "spheres": [{"center": list(map(float, s["center"])), "radius": float(s["radius"])}
                        for s in self.spheres],
            "boxes": [{"lo": list(map(float, b["lo"])), "hi": list(map(float, b["hi"]))}
                      for b in self.boxes],
            "clouds": list(self.clouds),
        }


def scene_from_dict(d: dict, base_dir: Optional[Path] = None) -> Scene:
    if "generator" in d:
        return generate_scene(**d["generator"])
    try:
        bounds = np.array(d["bounds"], dtype=float).reshape(2, 3)
        scene = Scene(bounds, as_point(d["start"]), as_point(d["goal"]),
                      as_points(d["trajectory"]), list(d.get("spheres", [])),
                      list(d.get("boxes", [])), list(d.get("clouds", [])),
                      float(d.get("point_spacing", 0.1)), d.get("name", "scene"), base_dir)
    except KeyError as e:
        raise ValueError(f"scene is missing key {e.args[0]!r}") from None
    for s in scene.spheres:
        if not float(s["radius"]) > 0:
            raise ValueError("sphere radius must be > 0")
    if not scene.point_spacing > 0:
        raise ValueError("point_spacing must be > 0")
    return scene


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON ({e})") from None
    return scene_from_dict(d, path.parent)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=1) + "\n")


def wavy_trajectory(start, goal, amplitude: float, waves: float, n: int = 25) -> np.ndarray:
    """Start-goal line with a sinusoidal sideways offset that vanishes at both ends."""
    start, goal = as_point(start), as_point(goal)
    axis = goal - start
    side = np.cross(axis, [0.0, 0.0, 1.0])
    if np.linalg.norm(side) < 1e-9:
        side = np.cross(axis, [1.0, 0.0, 0.0])
    side /= np.linalg.norm(side)
    s = np.linspace(0.0, 1.0, n)
    return start + s[:, None] * axis + (amplitude * np.sin(2 * math.pi * waves * s))[:, None] * side


def generate_scene(seed: int = 0, size: float = 10.0, n_spheres: int = 30, n_boxes: int = 6,
                   radius_range=(0.3, 0.8), box_range=(0.4, 1.5), point_spacing: float = 0.1,
                   start=None, goal=None, keep_out: float = 1.2, amplitude: float = 1.0,
                   waves: float = 1.5, n_blockers: int = 0) -> Scene:
    """Cluttered cube ``[0, size]^3`` with random spheres and boxes.

    ``n_blockers`` extra spheres sit on the start-goal segment.  Obstacles
    never come within ``keep_out`` of start or goal.
    """
    rng = np.random.default_rng(seed)
    start = as_point(start if start is not None else [1.0, 1.0, 1.0])
    goal = as_point(goal if goal is not None else [size - 1.0] * 3)
    spheres, boxes = [], []
    for _ in range(n_blockers):
        r = float(rng.uniform(*radius_range))
        c = start + rng.uniform(0.3, 0.7) * (goal - start)
        spheres.append({"center": c.round(3).tolist(), "radius": round(r, 3)})
    while len(spheres) < n_spheres:
        r = float(rng.uniform(*radius_range))
        c = rng.uniform(0.0, size, 3)
        if min(np.linalg.norm(c - start), np.linalg.norm(c - goal)) > r + keep_out:
            spheres.append({"center": c.round(3).tolist(), "radius": round(r, 3)})
    while len(boxes) < n_boxes:
        ext = rng.uniform(*box_range, 3)
        lo = rng.uniform(0.0, size - ext)
        hi = lo + ext
        near = [np.linalg.norm(np.clip(p, lo, hi) - p) for p in (start, goal)]
        if min(near) > keep_out:
            boxes.append({"lo": lo.round(3).tolist(), "hi": hi.round(3).tolist()})
    traj = wavy_trajectory(start, goal, amplitude, waves)
    bounds = np.array([[0.0] * 3, [size] * 3])
    return Scene(bounds, start, goal, traj, spheres, boxes, [], point_spacing, f"generated-{seed}")
