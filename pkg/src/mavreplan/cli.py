"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure (bad input file,
failed plan, incomplete simulation).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from mavreplan.bench import ALGORITHMS, bench_map, bench_planners, synthetic_clouds
from mavreplan.bspline import smooth_trajectory
from mavreplan.core import PlannerConfig, Trajectory
from mavreplan.obstacle_map import read_cloud
from mavreplan.planners import (PlanningError, plan_astar_grid, plan_baseline_rrtstar,
                                plan_improved_rrtstar)
from mavreplan.scenes import REFERENCE_SCENE, generate_scene, load_scene
from mavreplan.sim import load_scenario, run_simulation, write_outputs

log = logging.getLogger("mavreplan")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class CliError(Exception):
    """Runtime failure reported to the user with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers
def read_waypoints(path) -> np.ndarray:
    """Parse ``x y z`` (or comma separated) lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        try:
            if len(fields) != 3:
                raise ValueError
            row = [float(f) for f in fields]
        except ValueError:
            raise CliError(f"{path}: line {lineno}: expected three numbers, got {line!r}") from None
        if not all(np.isfinite(row)):
            raise CliError(f"{path}: line {lineno}: non-finite coordinate")
        rows.append(row)
    return np.array(rows).reshape(-1, 3)


def points_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z"])
    for p in points.tolist():
        w.writerow([repr(v) for v in p])
    return buf.getvalue()


def _load_config(path: Optional[str]) -> PlannerConfig:
    if not path:
        return PlannerConfig()
    try:
        return PlannerConfig.from_dict(json.loads(Path(path).read_text()))
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e.strerror}") from None
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise CliError(f"bad config {path}: {e}") from None


def _scene(args):
    if args.scene and args.generator_seed is not None:
        raise CliError("give either --scene or --generator-seed, not both")
    if args.generator_seed is not None:
        return generate_scene(seed=args.generator_seed)
    path = args.scene or REFERENCE_SCENE
    try:
        return load_scene(path)
    except OSError as e:
        raise CliError(f"cannot read scene {path}: {e.strerror}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"bad scene {path}: {e}") from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _nan_to_none(x):
    return None if x is None or x != x else x


# ------------------------------------------------------------------ commands
def cmd_smooth(args) -> int:
    pts = read_waypoints(args.input)
    if len(pts) < 3:
        raise CliError(f"{args.input}: need at least 3 waypoints, got {len(pts)}")
    traj = smooth_trajectory(pts, args.samples)
    out = _out_dir(args)
    if args.format == "json":
        path = out / "smoothed.json"
        _write_json(path, {"waypoints": traj.waypoints.tolist()})
    else:
        path = out / "smoothed.csv"
        path.write_text(points_csv(traj.waypoints))
    print(f"{len(traj)} samples -> {path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load_config(args.config)
    scene = _scene(args)
    m = scene.obstacle_map()
    rng = np.random.default_rng(args.seed)
    try:
        if args.algorithm == "astar":
            res = plan_astar_grid(scene.start, scene.goal, m, args.voxel, bounds=scene.bounds,
                                  clearance=cfg.obstacle_fail_safe_dis,
                                  reference=scene.trajectory,
                                  samples_per_segment=cfg.samples_per_segment)
        elif args.algorithm == "rrtstar":
            res = plan_baseline_rrtstar(scene.start, scene.goal, m, cfg, rng,
                                        bounds=scene.bounds, reference=scene.trajectory)
        else:
            res = plan_improved_rrtstar(scene.start, scene.goal, m, Trajectory(scene.trajectory),
                                        cfg, rng)
    except PlanningError as e:
        raise CliError(f"planning failed: {e}") from None
    out = _out_dir(args)
    summary = {"algorithm": args.algorithm, "success": res.success, "message": res.message,
               "iterations": res.iterations, "elapsed_ms": res.elapsed * 1e3,
               "path_cost": _nan_to_none(res.cost), "waypoints": len(res.path),
               "smoothed_valid": res.smoothed_valid}
    _write_json(out / "plan.json", summary)
    if args.format == "csv":
        (out / "plan_path.csv").write_text(points_csv(res.path.waypoints))
        (out / "plan_smoothed.csv").write_text(points_csv(res.smoothed.waypoints))
    print(json.dumps(summary, sort_keys=True))
    if not res.success:
        log.error("no path found: %s", res.message)
        return EXIT_FAIL
    return EXIT_OK


def cmd_bench_planner(args) -> int:
    cfg = _load_config(args.config)
    scene = _scene(args)
    algs = args.algorithms.split(",") if args.algorithms else list(ALGORITHMS)
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad:
        raise CliError(f"unknown algorithm(s): {', '.join(bad)}")
    report = bench_planners(scene, trials=args.trials, seed=args.seed, cfg=cfg, voxel=args.voxel,
                            algorithms=algs, warmup=args.warmup)
    out = _out_dir(args)
    if args.format == "csv":
        (out / "bench_planner.csv").write_text(report.results_csv())
        (out / "bench_planner_timing.csv").write_text(report.timing_csv())
        _write_json(out / "bench_planner.json", {"aggregate": report.aggregate()})
    else:
        _write_json(out / "bench_planner.json",
                    {"rows": [{k: _nan_to_none(v) for k, v in r.items()}
                              for r in report.to_dict()["rows"]],
                     "aggregate": report.aggregate()})
    for alg, agg in report.aggregate().items():
        e, c = agg["elapsed_ms"], agg["path_cost"]
        fmt = lambda v, f: "n/a" if v is None else format(v, f)  # noqa: E731
        print(f"{alg:9s} success {agg['successes']}/{agg['trials']}  "
              f"median {fmt(e['median'], '.2f')} ms  cost {fmt(c['median'], '.3f')}")
    return EXIT_OK


def cmd_bench_map(args) -> int:
    if args.clouds:
        d = Path(args.clouds)
        files = sorted(p for p in d.glob("*") if p.suffix in (".xyz", ".txt", ".bin")) if d.is_dir() else []
        if not files:
            raise CliError(f"no cloud files (.xyz, .txt, .bin) in {d}")
        try:
            clouds = [read_cloud(p, "bin" if p.suffix == ".bin" else "xyz", float(i))
                      for i, p in enumerate(files)]
        except (OSError, ValueError) as e:
            raise CliError(str(e)) from None
    else:
        if args.synthetic < 1:
            raise CliError("--synthetic must be >= 1")
        clouds = synthetic_clouds(args.synthetic, args.points, seed=args.seed)
    rep = bench_map(clouds, args.resolution, args.radius, bins=args.bins)
    out = _out_dir(args)
    if args.format == "csv":
        (out / "bench_map.csv").write_text(rep.rows_csv())
        (out / "bench_map_histogram.csv").write_text(rep.histogram_csv())
    summary = rep.summary()
    if args.format == "json":
        summary["rows"] = [vars(r) for r in rep.rows]
    _write_json(out / "bench_map.json", summary)
    s = summary["elapsed_us"]
    print(f"{len(rep.rows)} clouds  median {s['median']:.1f} us  mean {s['mean']:.1f} us")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except OSError as e:
        raise CliError(f"cannot read scenario {args.scenario}: {e.strerror}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"bad scenario {args.scenario}: {e}") from None
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        scenario.cfg = PlannerConfig.from_dict({**scenario.cfg.to_dict(), **overrides})
    if args.seed is not None:
        scenario.rng_seed = args.seed
    result = run_simulation(scenario)
    out = _out_dir(args)
    csv_path, json_path = write_outputs(result, out)
    s = result.summary()
    print(f"{s['name']}: completed={s['completed']} replans={s['replans']} "
          f"min_dist={s['min_obstacle_dist']} -> {csv_path}, {json_path}")
    return EXIT_OK if result.completed else EXIT_FAIL


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="RNG seed (default 0; simulate: the scenario's seed)")
    common.add_argument("--config", help="JSON file with PlannerConfig overrides")
    common.add_argument("--out-dir", default=".", help="output directory (default .)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = _Parser(prog="mavreplan", description="Local trajectory replanning toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("smooth", parents=[common], help="smooth a waypoint file")
    s.add_argument("input", help="text file with one 'x y z' waypoint per line")
    s.add_argument("--samples", type=int, default=10, help="samples per spline segment")
    s.set_defaults(func=cmd_smooth)

    def scene_args(sp):
        sp.add_argument("--scene", help="scene JSON (default: shipped reference scene)")
        sp.add_argument("--generator-seed", type=int, help="generate a cluttered scene instead")
        sp.add_argument("--voxel", type=float, default=0.1, help="A* voxel size in meters")

    s = sub.add_parser("plan", parents=[common], help="run one planner on a scene")
    scene_args(s)
    s.add_argument("--algorithm", choices=ALGORITHMS, default="improved")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("bench-planner", parents=[common], help="compare the three planners")
    scene_args(s)
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--warmup", type=int, default=1, help="discarded warm-up rounds")
    s.add_argument("--algorithms", help="comma separated subset of " + ",".join(ALGORITHMS))
    s.set_defaults(func=cmd_bench_planner)

    s = sub.add_parser("bench-map", parents=[common], help="time obstacle-map insertion")
    s.add_argument("--clouds", help="directory of .xyz/.txt/.bin clouds")
    s.add_argument("--synthetic", type=int, default=100, help="number of synthetic clouds")
    s.add_argument("--points", type=int, default=10_000, help="points per synthetic cloud")
    s.add_argument("--resolution", type=float, default=0.2)
    s.add_argument("--radius", type=float, default=5.0)
    s.add_argument("--bins", type=int, default=20)
    s.set_defaults(func=cmd_bench_map)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop replanning simulation")
    s.add_argument("scenario", help="scenario JSON file")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "trials", 1) < 1:
        print("mavreplan: error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.command != "simulate" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
