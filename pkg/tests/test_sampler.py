import math

import numpy as np
import pytest
from scipy import stats

from mavreplan.obstacle_map import ObstacleMap
from mavreplan.sampler import (ball_region, build_region, rotation_align, sample_ball, sample_free,
                               sample_uniform, volume_ratio)


def quaternion_rotation(p):
    """Rotation taking z onto p built from the half-way quaternion."""
    z = np.array([0.0, 0.0, 1.0])
    p = p / np.linalg.norm(p)
    h = (z + p) / np.linalg.norm(z + p)
    w, (x, y, zz) = float(z @ h), np.cross(z, h)
    return np.array([
        [1 - 2 * (y * y + zz * zz), 2 * (x * y - zz * w), 2 * (x * zz + y * w)],
        [2 * (x * y + zz * w), 1 - 2 * (x * x + zz * zz), 2 * (y * zz - x * w)],
        [2 * (x * zz - y * w), 2 * (y * zz + x * w), 1 - 2 * (x * x + y * y)],
    ])


def test_rotation_special_cases():
    assert np.array_equal(rotation_align([0, 0, 1]), np.eye(3))
    assert np.array_equal(rotation_align([0, 0, -2]), np.diag([1.0, -1.0, -1.0]))
    r = rotation_align([1, 0, 0])
    assert np.allclose(r @ [0, 0, 1], [1, 0, 0], atol=1e-12)
    assert np.allclose(r, quaternion_rotation(np.array([1.0, 0, 0])), atol=1e-12)
    with pytest.raises(ValueError):
        rotation_align([0, 0, 0])


def test_rotation_matches_quaternion_oracle(rng):
    for p in rng.standard_normal((200, 3)):
        assert np.allclose(rotation_align(p), quaternion_rotation(p), atol=1e-9)


def test_rotation_continuous_near_z():
    for ang in (1e-6, -1e-6):
        p = [math.sin(ang), 0.0, math.cos(ang)]
        assert np.max(np.abs(rotation_align(p) - np.eye(3))) < 1e-5


def test_build_region_example():
    r = build_region((0, 0, 0), (2, 0, 0), 1.0)
    assert np.allclose(r.center, [1, 0, 0])
    assert sorted(r.semi_axes.tolist()) == [0.5, 0.5, 1.0]
    assert r.quadratic_form(np.array([0.0, 0, 0])) == pytest.approx(1.0)
    assert r.quadratic_form(np.array([2.0, 0, 0])) == pytest.approx(1.0)
    assert np.allclose(np.linalg.eigvalsh(r.sigma), [0.25, 0.25, 1.0])
    with pytest.raises(ValueError):
        build_region((0, 0, 0), (0, 0, 0), 1.0)


def test_swap_start_goal_same_set(rng):
    a = build_region((0, 1, 2), (3, -1, 4), 1.5)
    b = build_region((3, -1, 4), (0, 1, 2), 1.5)
    x = rng.uniform(-2, 6, (2000, 3))
    assert np.allclose(a.quadratic_form(x), b.quadratic_form(x), atol=1e-9)


def test_sample_mean_near_center(rng):
    reg = build_region((0, 0, 0), (4, 2, 1), 2.0)
    x = sample_uniform(reg, 10_000, rng)
    # per-axis std of a uniform ellipsoid along a principal axis is a / sqrt(5)
    std = np.sqrt(np.diag(reg.sigma) / 5.0)
    assert np.all(np.abs(x.mean(axis=0) - reg.center) <= 3 * std / math.sqrt(len(x)) + 1e-12)


def test_sample_ball_matches_region_sampler():
    a = sample_ball(np.array([1.0, 2, 3]), 2.0, 50, np.random.default_rng(7))
    b = sample_uniform(ball_region((1, 2, 3), 2.0), 50, np.random.default_rng(7))
    assert np.allclose(a, b, atol=1e-12)


def test_sampling_deterministic():
    reg = build_region((0, 0, 0), (3, 0, 0), 1.0)
    a = sample_uniform(reg, 100, np.random.default_rng(3))
    b = sample_uniform(reg, 100, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_sample_free_respects_clearance(rng):
    reg = build_region((0, 0, 0), (4, 0, 0), 3.0)
    m = ObstacleMap.from_points([[2.0, 0, 0], [1.0, 0.5, 0]])
    pts, complete = sample_free(reg, 500, rng, m, 0.5)
    assert complete and len(pts) == 500
    d = np.linalg.norm(pts[:, None, :] - m.points[None], axis=2).min(axis=1)
    assert np.all(d >= 0.5)


def test_sample_free_reports_exhaustion(rng):
    reg = ball_region((0, 0, 0), 1.0)
    m = ObstacleMap.from_points([[0.0, 0, 0]])
    pts, complete = sample_free(reg, 10, rng, m, 5.0, max_rounds=3)
    assert not complete and len(pts) == 0


def test_volume_ratio():
    reg = build_region((0, 0, 0), (2, 0, 0), 1.0)
    assert volume_ratio(reg, 1000.0) == pytest.approx(math.pi / 6 * 2 / 1000)
    assert volume_ratio(reg, 1000.0) == pytest.approx(reg.volume / 1000.0)
    tiny = build_region((0, 0, 0), (2, 0, 0), 1e-9)
    assert volume_ratio(tiny, 1000.0) < 1e-15
    sphere = build_region((0, 0, 0), (2, 0, 0), 2.0)
    assert sphere.volume == pytest.approx(4 / 3 * math.pi)


def test_octant_chi_square(rng):
    reg = build_region((1, 1, 1), (5, 3, 2), 2.0)
    x = sample_uniform(reg, 10_000, rng)
    local = (x - reg.center) @ reg.rotation
    octant = (local > 0).astype(int) @ [1, 2, 4]
    counts = np.bincount(octant, minlength=8)
    assert stats.chisquare(counts).pvalue > 0.001
