import json

import numpy as np
import pytest

from mavreplan.scenes import (REFERENCE_SCENE, box_points, generate_scene, load_scene, save_scene,
                              scene_from_dict, sphere_points, wavy_trajectory)


def test_sphere_points_exact_count_on_surface():
    for n in (1, 7, 150):
        pts = sphere_points([1, 2, 3], 0.7, n)
        assert len(pts) == n
        assert np.allclose(np.linalg.norm(pts - [1, 2, 3], axis=1), 0.7)


def test_box_points_on_faces():
    pts = box_points([0, 0, 0], [1, 2, 3], 0.25)
    on_face = np.any(np.isclose(pts, [0, 0, 0]) | np.isclose(pts, [1, 2, 3]), axis=1)
    assert np.all(on_face)
    assert len(np.unique(pts, axis=0)) == len(pts)


def test_wavy_trajectory_endpoints():
    t = wavy_trajectory([0, 0, 0], [5, 0, 0], 1.0, 1.0)
    assert np.allclose(t[0], [0, 0, 0]) and np.allclose(t[-1], [5, 0, 0])
    assert np.max(np.abs(t[:, 1])) == pytest.approx(1.0, abs=0.02)


def test_generated_scene_keeps_endpoints_clear():
    s = generate_scene(5)
    cloud = s.cloud()
    for p in (s.start, s.goal):
        assert np.min(np.linalg.norm(cloud - p, axis=1)) > 1.0
    assert np.all(s.bounds == [[0, 0, 0], [10, 10, 10]])


def test_roundtrip(tmp_path):
    s = generate_scene(2, n_spheres=5, n_boxes=2)
    save_scene(s, tmp_path / "s.json")
    t = load_scene(tmp_path / "s.json")
    assert np.array_equal(s.cloud(), t.cloud())
    assert np.array_equal(s.trajectory, t.trajectory)


def test_generator_form_and_errors(tmp_path):
    s = scene_from_dict({"generator": {"seed": 1, "n_spheres": 3, "n_boxes": 1}})
    assert len(s.spheres) == 3
    with pytest.raises(ValueError, match="start"):
        scene_from_dict({"bounds": [[0, 0, 0], [1, 1, 1]], "goal": [1, 1, 1], "trajectory": []})
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ValueError):
        load_scene(bad)


def test_cloud_file_reference(tmp_path):
    (tmp_path / "c.xyz").write_text("1 1 1\n2 2 2\n")
    d = {"bounds": [[0, 0, 0], [3, 3, 3]], "start": [0, 0, 0], "goal": [3, 3, 3],
         "trajectory": [[0, 0, 0], [3, 3, 3]], "clouds": [{"path": "c.xyz"}]}
    (tmp_path / "s.json").write_text(json.dumps(d))
    assert len(load_scene(tmp_path / "s.json").cloud()) == 2


def test_reference_scene_ships():
    s = load_scene(REFERENCE_SCENE)
    assert np.all(s.bounds[1] - s.bounds[0] == 10.0)
    assert s.point_spacing == 0.1
    m = s.obstacle_map()
    assert len(m) > 1000
    assert m.nearest_obstacle(s.start)[1] > 0.5 and m.nearest_obstacle(s.goal)[1] > 0.5
    # the direct line is blocked, so every planner has to search
    assert not m.segment_collision_free(s.start, s.goal, 0.5)
