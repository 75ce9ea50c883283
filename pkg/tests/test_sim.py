import math
from pathlib import Path

import numpy as np
import pytest

from mavreplan.core import Pose, Trajectory
from mavreplan.obstacle_map import ObstacleMap
from mavreplan.sim import (DynamicObstacle, Scenario, load_scenario, run_simulation, step_follower,
                           step_obstacles, write_outputs)

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "mavreplan" / "data" / "scenarios"


def test_follower_euler_step():
    pose, vel, rate = step_follower(Pose([0, 0, 0], 0.0), Trajectory([[1, 0, 0]]), 1.0, 0.1)
    assert np.allclose(pose.position, [0.1, 0, 0]) and np.allclose(vel, [1, 0, 0])
    assert rate == 0.0


def test_follower_skips_reached_waypoint():
    pose, vel, _ = step_follower(Pose([1, 0, 0]), Trajectory([[1, 0, 0], [1, 2, 0]]), 1.0, 0.1)
    assert np.allclose(vel, [0, 1, 0])
    pose, vel, rate = step_follower(Pose([1, 0, 0]), Trajectory([[1, 0, 0]]), 1.0, 0.1)
    assert np.all(vel == 0) and rate == 0.0


def test_follower_yaw_rate_clipped():
    _, _, rate = step_follower(Pose([0, 0, 0], 0.0), Trajectory([[0, 1, 0]]), 1.0, 0.1)
    assert rate == pytest.approx(1.0)
    _, _, rate = step_follower(Pose([0, 0, 0], 0.0), Trajectory([[1, 0.2, 0]]), 1.0, 0.1)
    assert rate == pytest.approx(1.5 * math.atan2(0.2, 1.0))
    with pytest.raises(ValueError):
        step_follower(Pose([0, 0, 0]), Trajectory(), 1.0, 0.1)


def _scenario(**kw):
    return Scenario(waypoints=[[0, 0, 0], [4, 0, 0]], **kw)


def test_step_obstacles_motion_and_counts():
    still = _scenario(dynamic_obstacles=[DynamicObstacle([5, 0, 0], [0, 0, 0], 0.5, 37)])
    assert np.array_equal(step_obstacles(still, 0.0).points, step_obstacles(still, 3.0).points)
    moving = _scenario(dynamic_obstacles=[DynamicObstacle([5, 0, 0], [1, 0, 0], 0.5, 37),
                                          DynamicObstacle([0, 5, 0], [0, 0, 0], 0.3, 11)])
    c0, c2 = step_obstacles(moving, 0.0).points, step_obstacles(moving, 2.0).points
    assert len(c0) == len(c2) == 48
    assert np.allclose(c2[:37] - c0[:37], [2, 0, 0])
    assert np.allclose(c2[:37].mean(axis=0), [7, 0, 0], atol=0.05)


def test_scenario_validation():
    with pytest.raises(ValueError):
        _scenario(tick_hz=0)
    with pytest.raises(ValueError):
        _scenario(speed=-1)
    with pytest.raises(ValueError):
        DynamicObstacle([0, 0, 0], [0, 0, 0], 0.0)
    assert _scenario().duration_s == pytest.approx(8.0)


@pytest.fixture(scope="module")
def shipped():
    return {p.stem: (load_scenario(p), run_simulation(load_scenario(p)))
            for p in sorted(SCENARIOS.glob("*.json"))}


def test_ticks_and_hover_contract(shipped):
    for name, (sc, log) in shipped.items():
        times = np.array([r.time for r in log.records])
        assert np.allclose(np.diff(times), 1 / sc.tick_hz)
        for r in log.records:
            if r.mode == "hovering-replan":
                assert np.all(r.velocity == 0.0)
            assert r.min_obstacle_dist >= 0


def test_safety_in_every_scenario(shipped):
    for name, (sc, log) in shipped.items():
        bound = sc.cfg.obstacle_fail_safe_dis - sc.speed / sc.tick_hz
        cloud = [step_obstacles(sc, r.time).points for r in log.records]
        for r, pts in zip(log.records, cloud):
            if len(pts):
                m = ObstacleMap.from_points(pts, resolution=1e-3)
                assert m.nearest_obstacle(r.position)[1] >= bound, name


def test_obstacle_free_liveness(shipped):
    sc, log = shipped["obstacle_free"]
    assert log.completed and log.replans == 0 and log.path_cost < 1.0
    assert log.records[-1].time <= sc.duration_s


def test_wall_triggers_replan(shipped):
    sc, log = shipped["static_wall"]
    assert log.completed and log.replans >= 1
    assert log.min_obstacle_dist >= sc.cfg.obstacle_fail_safe_dis
    _, log = shipped["dynamic_crossing"]
    assert log.completed and log.replans >= 1


def test_simulation_deterministic(shipped, tmp_path):
    sc = load_scenario(SCENARIOS / "static_wall.json")
    again = run_simulation(sc)
    assert again.to_csv() == shipped["static_wall"][1].to_csv()
    csv_path, json_path = write_outputs(again, tmp_path)
    assert csv_path.read_text().startswith("tick,time,")


def test_stuck_when_goal_unreachable():
    # a wall spanning the whole sensor view, with no way around inside the window
    sc = Scenario(waypoints=[[0, 0, 0], [6, 0, 0]],
                  static_obstacles=[{"lo": [3.0, -6, -6], "hi": [3.1, 6, 6]}],
                  cfg=__import__("mavreplan").PlannerConfig(max_iterations=50), replan_retries=1,
                  point_spacing=0.2)
    log = run_simulation(sc)
    assert not log.completed and log.records[-1].mode == "stuck"
    assert log.replan_failures == 2


def test_latency_injection_adds_hover_ticks():
    base = load_scenario(SCENARIOS / "static_wall.json")
    lagged = load_scenario(SCENARIOS / "static_wall.json")
    lagged.latency_injection = True
    a, b = run_simulation(base), run_simulation(lagged)
    hover = lambda log: sum(r.mode == "hovering-replan" for r in log.records)  # noqa: E731
    assert hover(b) >= hover(a)
    assert b.completed
