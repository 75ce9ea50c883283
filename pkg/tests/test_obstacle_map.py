import numpy as np
import pytest

from mavreplan.obstacle_map import (ObstacleMap, PointCloud, crop_sphere, ground_filter,
                                    read_cloud, write_cloud)
from mavreplan.rtree import RTree, point_segment_distance


# ---------------------------------------------------------------- oracles
def scan_nearest(points, q):
    d = np.linalg.norm(points - q, axis=1)
    i = int(np.argmin(d))
    return i, float(d[i])


def scan_segment_dist(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0, 1)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def hash_dedup_count(points, resolution):
    return len({tuple(int(v) for v in np.floor(p / resolution)) for p in points})


# ---------------------------------------------------------------- rtree
def _trees(points):
    inc = RTree(fanout=8)
    for p in points:
        inc.insert(p)
    return [RTree.bulk_load(points), inc]


def test_rtree_queries_match_scans(rng):
    for trial in range(15):
        n = int(rng.integers(1, 400))
        pts = rng.uniform(-5, 5, (n, 3))
        for tree in _trees(pts):
            tree.check()
            for q in rng.uniform(-7, 7, (10, 3)):
                i, d = tree.nearest(q)
                j, e = scan_nearest(pts, q)
                assert d == pytest.approx(e, abs=1e-9)
                assert np.linalg.norm(pts[i] - q) == pytest.approx(e, abs=1e-9)
                r = rng.uniform(0.1, 3)
                assert tree.any_within(q, r) == bool(np.any(np.linalg.norm(pts - q, axis=1) < r))
                b = q + rng.uniform(-3, 3, 3)
                c = rng.uniform(0.05, 1.0)
                assert tree.segment_clear(q, b, c) == bool(np.all(scan_segment_dist(pts, q, b) >= c))
                lo, hi = np.sort(rng.uniform(-6, 6, (2, 3)), axis=0)
                inside = np.nonzero(np.all((pts >= lo) & (pts <= hi), axis=1))[0]
                assert sorted(tree.search_box(lo, hi).tolist()) == inside.tolist()


def test_rtree_empty_and_degenerate():
    t = RTree()
    assert t.nearest(np.zeros(3)) is None
    assert t.segment_clear(np.zeros(3), np.ones(3), 1.0)
    assert not t.any_within(np.zeros(3), 1.0)
    t = RTree.bulk_load(np.zeros((50, 3)))
    assert t.nearest(np.ones(3))[1] == pytest.approx(np.sqrt(3))
    assert not t.segment_clear(np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]), 0.1)
    assert not t.segment_clear(np.zeros(3), np.zeros(3), 0.1)


def test_point_segment_distance():
    assert point_segment_distance(np.array([0.0, 0.51, 0]), np.zeros(3),
                                  np.array([2.0, 0, 0])) == pytest.approx(0.51)
    assert point_segment_distance(np.array([3.0, 0, 0]), np.zeros(3),
                                  np.array([2.0, 0, 0])) == pytest.approx(1.0)


# ---------------------------------------------------------------- map
def test_map_examples():
    m = ObstacleMap()
    assert m.nearest_obstacle([0, 0, 0]) is None
    assert m.segment_collision_free([0, 0, 0], [1, 0, 0], 0.5)
    m = ObstacleMap.from_points([[1.0, 2.0, 3.0]])
    p, d = m.nearest_obstacle([1, 2, 4])
    assert p.tolist() == [1.0, 2.0, 3.0] and d == pytest.approx(1.0)
    m = ObstacleMap.from_points([[1.0, 0.0, 0.0]])
    assert not m.segment_collision_free([0, 0, 0], [2, 0, 0], 0.5)
    m = ObstacleMap.from_points([[1.0, 0.51, 0.0]])
    assert m.segment_collision_free([0, 0, 0], [2, 0, 0], 0.5)
    with pytest.raises(ValueError):
        m.segment_collision_free([0, 0, 0], [2, 0, 0], -1.0)


def test_map_nearest_matches_scan_500(rng):
    pts = rng.uniform(-10, 10, (500, 3))
    m = ObstacleMap.from_points(pts, resolution=1e-3)
    for q in rng.uniform(-12, 12, (100, 3)):
        p, d = m.nearest_obstacle(q)
        _, e = scan_nearest(m.points, q)
        assert d == pytest.approx(e, abs=1e-9)


def test_dedup_contract():
    m = ObstacleMap(resolution=0.2)
    r = m.insert_cloud(PointCloud([[0.01, 0.01, 0.01], [0.05, 0.1, 0.15]]))
    assert len(m) == 1 and r.inserted == 1 and r.deduplicated == 1
    again = m.insert_cloud(PointCloud([[0.01, 0.01, 0.01], [0.05, 0.1, 0.15]]))
    assert again.inserted == 0


def test_dedup_matches_hash_oracle(rng):
    pts = rng.uniform(0, 10, (10_000, 3))
    m = ObstacleMap(resolution=0.2, capacity=1)
    m.insert_cloud(PointCloud(pts))
    assert len(m) == hash_dedup_count(pts, 0.2)


def test_circular_buffer_eviction():
    m = ObstacleMap(resolution=0.1, capacity=2)
    m.insert_cloud(PointCloud([[0.0, 0, 0]]))
    m.insert_cloud(PointCloud([[5.0, 0, 0]]))
    assert len(m) == 2
    r = m.insert_cloud(PointCloud([[9.0, 0, 0]]))
    assert r.evicted == 1 and len(m) == 2
    assert m.nearest_obstacle([0, 0, 0])[1] == pytest.approx(5.0)


def test_snapshot_is_stable():
    m = ObstacleMap.from_points([[0.0, 0, 0]])
    snap = m.snapshot()
    m.insert_cloud(PointCloud([[3.0, 0, 0]]))
    assert len(snap) == 1
    with pytest.raises(ValueError):
        snap.points[0, 0] = 1.0


def test_crop_sphere(rng):
    assert len(crop_sphere(PointCloud(), [0, 0, 0], 1.0)) == 0
    same = PointCloud(np.zeros((5, 3)))
    assert len(crop_sphere(same, [0, 0, 0], 0.1)) == 5
    g = np.stack(np.meshgrid(*[np.linspace(-8, 8, 10)] * 3), axis=-1).reshape(-1, 3)
    out = crop_sphere(PointCloud(g), [0, 0, 0], 5.0)
    expected = g[np.linalg.norm(g, axis=1) <= 5.0]
    assert np.array_equal(out.points, expected)
    assert np.array_equal(crop_sphere(out, [0, 0, 0], 5.0).points, out.points)
    with pytest.raises(ValueError):
        crop_sphere(out, [0, 0, 0], 0.0)


def test_ground_filter():
    c = PointCloud([[0, 0, -1.0], [0, 0, 0.5]])
    assert len(ground_filter(c, 0.0)) == 1
    m = ObstacleMap(z_ground=0.0)
    m.insert_cloud(c)
    assert len(m) == 1


@pytest.mark.parametrize("fmt", ["xyz", "bin"])
def test_cloud_io_roundtrip(tmp_path, rng, fmt):
    c = PointCloud(rng.uniform(-1, 1, (20, 3)).astype(np.float32).astype(float))
    path = tmp_path / f"c.{fmt}"
    write_cloud(path, c, fmt)
    assert np.array_equal(read_cloud(path, fmt).points, c.points)


def test_cloud_parse_errors(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("1 2 3\n1 2\n")
    with pytest.raises(ValueError, match=":2:"):
        read_cloud(p)
    b = tmp_path / "bad.bin"
    b.write_bytes(b"\x05\x00\x00\x00abc")
    with pytest.raises(ValueError):
        read_cloud(b, "bin")
