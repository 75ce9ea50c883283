"""Reduced search space: a prolate ellipsoid spanning start and goal.

The region is encoded by its center and a covariance-like matrix ``sigma``
whose eigenvalues are the squared semi-axes, so membership is the unit
quadratic form ``(x - c)^T sigma^{-1} (x - c) <= 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from mavreplan.core import as_point

log = logging.getLogger(__name__)

_Z = np.array([0.0, 0.0, 1.0])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_align(p) -> np.ndarray:
    """Rotation matrix taking the z axis onto the direction of ``p``.

    Rodrigues form ``I + [v]x + [v]x^2 (1 - c) / |v|^2`` with ``v = z x p``
    and ``c = z . p``.  The antipodal direction is a half turn about x.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    norm = np.linalg.norm(p)
    if not norm > 0 or not np.isfinite(norm):
        raise ValueError("cannot align to a zero or non-finite vector")
    p = p / norm
    v = np.cross(_Z, p)
    c = float(p[2])
    vv = float(v @ v)
    if vv == 0.0:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    # (1 - c) / |v|^2 == 1 / (1 + c); pick the branch without cancellation
    factor = 1.0 / (1.0 + c) if c >= 0 else (1.0 - c) / vv
    vx = skew(v)
    return np.eye(3) + vx + (vx @ vx) * factor


@dataclass(frozen=True, eq=False)
class EllipsoidRegion:
    center: np.ndarray
    sigma: np.ndarray
    rotation: np.ndarray
    semi_axes: np.ndarray  # along the rotated x, y, z axes
    transverse: float
    conjugate: float

    def quadratic_form(self, x) -> np.ndarray:
        """``(x - c)^T sigma^{-1} (x - c)`` for one point or a (k, 3) array."""
        x = np.asarray(x, dtype=float)
        local = (x - self.center) @ self.rotation
        return np.sum((local / self.semi_axes) ** 2, axis=-1)

    def contains(self, x, tol: float = 0.0):
        return self.quadratic_form(x) <= 1.0 + tol

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.semi_axes))


def _region(center, rotation, semi_axes, transverse, conjugate) -> EllipsoidRegion:
    semi_axes = np.asarray(semi_axes, dtype=float)
    sigma = rotation @ np.diag(semi_axes ** 2) @ rotation.T
    sigma = 0.5 * (sigma + sigma.T)
    return EllipsoidRegion(np.asarray(center, dtype=float), sigma, rotation, semi_axes,
                           float(transverse), float(conjugate))


def build_region(x_start, x_goal, d: float) -> EllipsoidRegion:
    """Prolate ellipsoid with start and goal at the ends of its long axis.

    Semi-axes are ``|goal - start| / 2`` along the start-goal direction and
    ``d / 2`` across it.
    """
    a, b = as_point(x_start), as_point(x_goal)
    if not d > 0:
        raise ValueError("conjugate diameter must be > 0")
    axis = b - a
    length = float(np.linalg.norm(axis))
    if length == 0.0:
        raise ValueError("start and goal coincide")
    rot = rotation_align(axis)
    return _region(0.5 * (a + b), rot, [d / 2.0, d / 2.0, length / 2.0], length, d)


def ball_region(center, radius: float) -> EllipsoidRegion:
    if not radius > 0:
        raise ValueError("radius must be > 0")
    return _region(as_point(center), np.eye(3), [radius] * 3, 2.0 * radius, 2.0 * radius)


def sample_uniform(region: EllipsoidRegion, npts: int, rng: np.random.Generator) -> np.ndarray:
    """``npts`` points uniformly distributed inside the ellipsoid.

    Normalized Gaussian directions give a uniform point on the sphere; a
    radius factor ``U^(1/3)`` makes it uniform in the ball, which is then
    stretched, rotated and moved onto the region.
    """
    g = rng.standard_normal((npts, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(npts) ** (1.0 / 3.0)
    local = g * r[:, None] * region.semi_axes
    return local @ region.rotation.T + region.center


def sample_ball(center, radius: float, npts: int, rng: np.random.Generator) -> np.ndarray:
    """Same draws as ``sample_uniform(ball_region(center, radius), ...)``, cheaper."""
    g = rng.standard_normal((npts, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(npts) ** (1.0 / 3.0)
    return center + g * (r * radius)[:, None]


def sample_free(region: EllipsoidRegion, npts: int, rng: np.random.Generator,
                obstacle_map=None, clearance: float = 0.0,
                max_rounds: int = 20) -> Tuple[np.ndarray, bool]:
    """Uniform samples that keep ``clearance`` from every obstacle point.

    Colliding samples are redrawn for at most ``max_rounds`` rounds.  Returns
    ``(points, complete)``; ``complete`` is False when the budget ran out and
    fewer than ``npts`` points came back.
    """
    if npts < 1:
        raise ValueError("npts must be >= 1")
    if obstacle_map is None or clearance <= 0 or len(obstacle_map) == 0:
        return sample_uniform(region, npts, rng), True
    out = []
    need = npts
    for _ in range(max_rounds):
        cand = sample_uniform(region, need, rng)
        ok = [obstacle_map.point_free(p, clearance) for p in cand]
        out.extend(cand[ok])
        need = npts - len(out)
        if need == 0:
            return np.array(out), True
    log.warning("sample_free: only %d of %d samples after %d rounds", len(out), npts, max_rounds)
    return np.array(out).reshape(-1, 3), False


def volume_ratio(region: EllipsoidRegion, free_space_volume: float) -> float:
    """Volume of the region over the free-space volume."""
    if not free_space_volume > 0:
        raise ValueError("free_space_volume must be > 0")
    return math.pi / 6.0 * region.transverse * region.conjugate ** 2 / free_space_volume
