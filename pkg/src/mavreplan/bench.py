"""Planner and obstacle-map benchmarks.

Planner rows split into a deterministic part (costs, iterations, success)
and wall-clock timings, so the former can be compared byte for byte
between runs.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from mavreplan.core import PlannerConfig, Trajectory
from mavreplan.obstacle_map import ObstacleMap, PointCloud, crop_sphere, voxel_keys
from mavreplan.planners import (PlanningError, plan_astar_grid, plan_baseline_rrtstar,
                                plan_improved_rrtstar)
from mavreplan.scenes import Scene

ALGORITHMS = ("astar", "rrtstar", "improved")

RESULT_FIELDS = ["algorithm", "trial", "seed", "iterations", "path_cost", "success"]
TIMING_FIELDS = ["algorithm", "trial", "seed", "elapsed_ms"]
MAP_FIELDS = ["cloud", "points", "cropped", "survivors", "elapsed_us"]


@dataclass
class BenchRow:
    algorithm: str
    trial: int
    seed: int
    elapsed_ms: float
    path_cost: float
    success: bool
    iterations: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


def _stats(xs: Sequence[float]) -> dict:
    xs = [x for x in xs if math.isfinite(x)]
    if not xs:
        return {"median": None, "mean": None, "stddev": None}
    a = np.array(sorted(xs))
    return {"median": float(np.median(a)), "mean": float(a.mean()), "stddev": float(a.std())}


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)

    def by_algorithm(self, algorithm: str) -> List[BenchRow]:
        return [r for r in self.rows if r.algorithm == algorithm]

    def median_elapsed_ms(self, algorithm: str) -> float:
        return _stats([r.elapsed_ms for r in self.by_algorithm(algorithm) if r.success])["median"]

    def median_cost(self, algorithm: str) -> float:
        return _stats([r.path_cost for r in self.by_algorithm(algorithm) if r.success])["median"]

    def aggregate(self) -> dict:
        """Median/mean/stddev of elapsed ms and path cost over successful trials."""
        out = {}
        for alg in ALGORITHMS:
            rows = self.by_algorithm(alg)
            if not rows:
                continue
            ok = [r for r in rows if r.success]
            out[alg] = {
                "trials": len(rows),
                "successes": len(ok),
                "elapsed_ms": _stats([r.elapsed_ms for r in ok]),
                "path_cost": _stats([r.path_cost for r in ok]),
            }
        return out

    def _sorted(self) -> List[BenchRow]:
        order = {a: i for i, a in enumerate(ALGORITHMS)}
        return sorted(self.rows, key=lambda r: (order[r.algorithm], r.trial))

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in self._sorted():
            w.writerow([r.algorithm, r.trial, r.seed, r.iterations, repr(float(r.path_cost)),
                        int(r.success)])
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMING_FIELDS)
        for r in self._sorted():
            w.writerow([r.algorithm, r.trial, r.seed, f"{r.elapsed_ms:.6f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self._sorted()], "aggregate": self.aggregate()}


def _run_one(alg: str, scene: Scene, obstacle_map, cfg: PlannerConfig, seed: int, voxel: float):
    if alg == "astar":
        try:
            r = plan_astar_grid(scene.start, scene.goal, obstacle_map, voxel, bounds=scene.bounds,
                                clearance=cfg.obstacle_fail_safe_dis, reference=scene.trajectory,
                                samples_per_segment=cfg.samples_per_segment)
        except PlanningError:
            return math.nan, math.nan, False, 0
        return r.elapsed, r.cost, r.success, r.iterations
    rng = np.random.default_rng(seed)
    if alg == "improved":
        r = plan_improved_rrtstar(scene.start, scene.goal, obstacle_map,
                                  Trajectory(scene.trajectory), cfg, rng)
    else:
        r = plan_baseline_rrtstar(scene.start, scene.goal, obstacle_map, cfg, rng,
                                  bounds=scene.bounds, reference=scene.trajectory)
    return r.elapsed, r.cost, r.success, r.iterations


def bench_planners(scene: Scene, trials: int = 10, seed: int = 0,
                   cfg: Optional[PlannerConfig] = None, voxel: float = 0.1,
                   algorithms: Iterable[str] = ALGORITHMS, warmup: int = 1) -> BenchReport:
    """Run every algorithm on ``scene`` for ``trials`` seeded trials.

    Trial ``t`` uses seed ``seed + t`` for both sampling planners.  The
    first ``warmup`` rounds run with the first trial's seed and are
    dropped.  The path cost of every planner is measured against the
    scene's desired trajectory.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or PlannerConfig()
    algorithms = list(algorithms)
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}")
    obstacle_map = scene.obstacle_map()
    report = BenchReport()
    for _ in range(warmup):
        for alg in algorithms:
            _run_one(alg, scene, obstacle_map, cfg, seed, voxel)
    for t in range(trials):
        s = seed + t
        for alg in algorithms:
            elapsed, cost, ok, its = _run_one(alg, scene, obstacle_map, cfg, s, voxel)
            report.rows.append(BenchRow(alg, t, s, elapsed * 1e3, float(cost), bool(ok), int(its)))
    return report


# ----------------------------------------------------------------- map bench
@dataclass
class MapBenchRow:
    cloud: int
    points: int
    cropped: int
    survivors: int
    elapsed_us: float


@dataclass
class MapBenchReport:
    rows: List[MapBenchRow]
    resolution: float
    radius: float
    edges: np.ndarray
    counts: np.ndarray

    def rows_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fields = MAP_FIELDS if timing else MAP_FIELDS[:-1]
        w.writerow(fields)
        for r in self.rows:
            vals = [r.cloud, r.points, r.cropped, r.survivors]
            if timing:
                vals.append(f"{r.elapsed_us:.3f}")
            w.writerow(vals)
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "lo_us", "hi_us", "count"])
        for i, c in enumerate(self.counts):
            w.writerow([i, f"{self.edges[i]:.3f}", f"{self.edges[i + 1]:.3f}", int(c)])
        return buf.getvalue()

    def summary(self) -> dict:
        t = [r.elapsed_us for r in self.rows]
        return {"clouds": len(self.rows), "resolution": self.resolution, "radius": self.radius,
                "elapsed_us": _stats(t), "histogram": {"edges": self.edges.tolist(),
                                                       "counts": self.counts.tolist()}}


def synthetic_clouds(count: int, npts: int = 10_000, size: float = 10.0,
                     seed: int = 0) -> List[PointCloud]:
    """Uniform random clouds in ``[-size/2, size/2]^3``."""
    rng = np.random.default_rng(seed)
    return [PointCloud(rng.uniform(-size / 2, size / 2, (npts, 3)), float(i))
            for i in range(count)]


def bench_map(clouds: Sequence[PointCloud], resolution: float = 0.2, radius: float = 5.0,
              center=(0.0, 0.0, 0.0), bins: int = 20) -> MapBenchReport:
    """Time cropping plus insertion of each cloud into a fresh map.

    ``survivors`` is the number of points left after cropping and voxel
    deduplication.
    """
    if len(clouds) == 0:
        raise ValueError("no clouds to benchmark")
    rows = []
    for i, cloud in enumerate(clouds):
        m = ObstacleMap(resolution=resolution, capacity=1)
        t0 = time.perf_counter()
        cropped = crop_sphere(cloud, center, radius)
        m.insert_cloud(cropped)
        dt = time.perf_counter() - t0
        rows.append(MapBenchRow(i, len(cloud), len(cropped), len(m), dt * 1e6))
    t = np.array([r.elapsed_us for r in rows])
    counts, edges = np.histogram(t, bins=bins)
    return MapBenchReport(rows, resolution, radius, edges, counts)


def dedup_count(points: np.ndarray, resolution: float) -> int:
    """Unique voxel count via the packed voxel keys."""
    return int(len(np.unique(voxel_keys(points, resolution))))
