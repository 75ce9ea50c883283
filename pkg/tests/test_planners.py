import numpy as np
import pytest

import mavreplan.planners.rrtstar as rrt
from mavreplan.core import PlannerConfig, Trajectory
from mavreplan.obstacle_map import ObstacleMap
from mavreplan.planners import (PlanGraph, nearest_with_clearance, path_cost, plan_baseline_rrtstar,
                                plan_improved_rrtstar, steer)
from mavreplan.scenes import generate_scene, sphere_points

CFG = PlannerConfig()


def test_steer():
    a = np.zeros(3)
    assert np.allclose(steer(a, np.array([3.0, 4, 0]), 1.0), [0.6, 0.8, 0])
    assert np.allclose(steer(a, np.array([0.3, 0, 0]), 1.0), [0.3, 0, 0])


def test_graph_reparent_propagates_costs():
    g = PlanGraph(np.zeros(3))
    a = g.add([1.0, 0, 0], 0)
    b = g.add([2.0, 0, 0], a)
    c = g.add([2.0, 1, 0], b)
    g.reparent(c, 0)
    g.check()
    assert g.cost[c] == pytest.approx(np.sqrt(5))
    assert g.path_to(c).tolist() == [[0, 0, 0], [2, 1, 0]]


def test_graph_check_detects_cycle():
    g = PlanGraph(np.zeros(3))
    a = g.add([1.0, 0, 0], 0)
    b = g.add([2.0, 0, 0], a)
    g.parent[a] = b
    with pytest.raises(AssertionError):
        g.check()


@pytest.fixture(scope="module")
def cluttered():
    scene = generate_scene(3, n_spheres=25, n_boxes=4, start=[2, 5, 5], goal=[8, 5, 5],
                           n_blockers=1)
    return scene, scene.obstacle_map()


def _instrument(monkeypatch, checks):
    orig_connect = rrt._Tree.connect
    orig_reparent = PlanGraph.reparent

    def connect(self, p, default_parent=-1):
        v = orig_connect(self, p, default_parent)
        self.graph.check(1e-9)
        checks["iterations"] += 1
        return v

    def reparent(self, i, new_parent):
        before = list(self.cost)
        orig_reparent(self, i, new_parent)
        assert all(c <= b + 1e-12 for c, b in zip(self.cost, before))
        checks["rewires"] += 1

    monkeypatch.setattr(rrt._Tree, "connect", connect)
    monkeypatch.setattr(PlanGraph, "reparent", reparent)


@pytest.mark.parametrize("which", ["improved", "baseline"])
def test_forest_and_rewire_invariants(monkeypatch, cluttered, which):
    scene, m = cluttered
    checks = {"iterations": 0, "rewires": 0}
    _instrument(monkeypatch, checks)
    cfg = CFG.replace(refine_to_budget=True, max_iterations=150)
    for seed in range(3):
        rng = np.random.default_rng(seed)
        if which == "improved":
            plan_improved_rrtstar(scene.start, scene.goal, m, Trajectory(scene.trajectory), cfg, rng)
        else:
            plan_baseline_rrtstar(scene.start, scene.goal, m, cfg, rng, bounds=scene.bounds)
    assert checks["iterations"] > 50 and checks["rewires"] > 0


@pytest.mark.parametrize("which", ["improved", "baseline"])
def test_result_contract_and_clearance(cluttered, which):
    scene, m = cluttered
    for seed in range(5):
        rng = np.random.default_rng(seed)
        if which == "improved":
            r = plan_improved_rrtstar(scene.start, scene.goal, m, Trajectory(scene.trajectory), CFG, rng)
        else:
            r = plan_baseline_rrtstar(scene.start, scene.goal, m, CFG, rng, bounds=scene.bounds)
        assert r.success
        assert np.array_equal(r.path.front, scene.start)
        assert np.linalg.norm(r.path.back - scene.goal) <= CFG.goal_tolerance
        for p in r.path.waypoints:
            assert m.nearest_obstacle(p)[1] >= CFG.obstacle_fail_safe_dis
        for a, b in zip(r.path.waypoints[:-1], r.path.waypoints[1:]):
            assert m.segment_collision_free(a, b, CFG.obstacle_fail_safe_dis)
        if r.smoothed_valid:
            for p in r.smoothed.waypoints:
                assert m.nearest_obstacle(p)[1] >= CFG.obstacle_fail_safe_dis
        r.graph.check()


def test_determinism(cluttered):
    scene, m = cluttered
    traj = Trajectory(scene.trajectory)
    a = plan_improved_rrtstar(scene.start, scene.goal, m, traj, CFG, np.random.default_rng(4))
    b = plan_improved_rrtstar(scene.start, scene.goal, m, traj, CFG, np.random.default_rng(4))
    assert a.same_outcome(b)
    a = plan_baseline_rrtstar(scene.start, scene.goal, m, CFG, np.random.default_rng(4))
    b = plan_baseline_rrtstar(scene.start, scene.goal, m, CFG, np.random.default_rng(4))
    assert a.same_outcome(b)


def test_empty_map_near_straight():
    start, goal = np.zeros(3), np.array([5.0, 0, 0])
    line = np.array([start, goal])
    for seed in range(5):
        r = plan_improved_rrtstar(start, goal, ObstacleMap(), Trajectory(line), CFG,
                                  np.random.default_rng(seed))
        assert r.success and r.cost <= 1.1
        b = plan_baseline_rrtstar(start, goal, ObstacleMap(), CFG, np.random.default_rng(seed),
                                  bounds=(np.full(3, -5.0), np.full(3, 10.0)))
        assert b.success


def test_completeness_smoke_empty_space():
    cfg = CFG.replace(max_iterations=5000)
    rng = np.random.default_rng(2024)
    empty = ObstacleMap()
    wins = 0
    for seed in range(100):
        s, g = rng.uniform(0, 10, (2, 3))
        r = plan_improved_rrtstar(s, g, empty, Trajectory([s, g]), cfg, np.random.default_rng(seed))
        wins += r.success
    assert wins == 100


def test_enclosed_goal_fails():
    goal = np.array([5.0, 0, 0])
    shell = sphere_points(goal, 1.2, 3000)
    m = ObstacleMap.from_points(shell, resolution=0.01)
    cfg = CFG.replace(max_iterations=200)
    start = np.zeros(3)
    r = plan_improved_rrtstar(start, goal, m, Trajectory([start, goal]), cfg, np.random.default_rng(0))
    assert not r.success and r.iterations == 200 and len(r.path) == 0
    r = plan_baseline_rrtstar(start, goal, m, cfg, np.random.default_rng(0))
    assert not r.success


def test_endpoint_clearance_reported():
    m = ObstacleMap.from_points([[0.1, 0, 0]])
    r = plan_improved_rrtstar([0, 0, 0], [5, 0, 0], m, Trajectory([[0, 0, 0], [5, 0, 0]]), CFG)
    assert not r.success and "start" in r.message
    r = plan_baseline_rrtstar([5, 0, 0], [0, 0, 0], m, CFG)
    assert not r.success and "goal" in r.message


def test_cost_reference_is_straight_line_by_default():
    r = plan_baseline_rrtstar([0, 0, 0], [3, 0, 0], ObstacleMap(), CFG, np.random.default_rng(1))
    assert r.cost == pytest.approx(path_cost(r.smoothed, np.array([[0, 0, 0], [3, 0, 0]], float)))


# ---------------------------------------------------------------- nearest selection
def _graph():
    g = PlanGraph(np.zeros(3))
    g.add([1.0, 0, 0], 0)
    g.add([1.0, 3.0, 0], 1)
    return g


def test_nearest_empty_map_is_classical():
    g = _graph()
    p = nearest_with_clearance(g, [1.2, 2.5, 0], Trajectory([[0, 0, 0], [4, 0, 0]]), ObstacleMap(),
                               CFG, np.random.default_rng(0))
    assert p.tolist() == [1.0, 3.0, 0.0]


def test_nearest_keeps_clearance(rng):
    obs = np.array([2.0, 0.6, 0.0])
    m = ObstacleMap.from_points([obs])
    traj = Trajectory([[0, 0, 0], [2, 0, 0], [4, 0, 0]])
    for _ in range(50):
        p = nearest_with_clearance(_graph(), rng.uniform(-1, 5, 3), traj, m, CFG, rng)
        assert np.linalg.norm(p - obs) > CFG.obstacle_fail_safe_dis


def test_nearest_hand_trace():
    obs = np.array([2.0, 0.8, 0.0])
    m = ObstacleMap.from_points([obs])
    wps = np.array([[0, 0, 0], [2, 0, 0], [4, 0, 0]], float)
    x_rand = np.array([2.0, 2.0, 0.0])
    got = nearest_with_clearance(_graph(), x_rand, Trajectory(wps), m, CFG, np.random.default_rng(9))

    # step by step: closest obstacle to x_rand, its closest waypoint, ball samples around it
    trace = np.random.default_rng(9)
    center = wps[1]
    assert np.argmin(np.linalg.norm(wps - obs, axis=1)) == 1
    radius, expected = 4.0, None
    for _ in range(2):
        g = trace.standard_normal((10, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = trace.random(10) ** (1 / 3)
        pts = center + g * (r * radius)[:, None]
        for k in np.argsort(np.linalg.norm(pts - center, axis=1), kind="stable"):
            if np.linalg.norm(pts[k] - obs) > 0.5:
                expected = pts[k]
                break
        if expected is not None:
            break
        radius *= 2
    assert np.allclose(got, expected, atol=1e-12)
