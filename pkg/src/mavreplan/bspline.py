"""Quadratic (order-3) normalized B-splines.

Two evaluation routes are provided: the Cox-de Boor recursion
(:func:`basis_coxdeboor`) and the per-span basis matrix
(:func:`basis_matrix`).  Trajectory smoothing uses the matrix form; the
recursion is kept as the reference it is checked against.

Indexing follows the order convention: ``q[j, 1]`` is the indicator of
``[t_j, t_{j+1})`` and ``q[j, 3]`` is the quadratic basis function supported
on ``[t_j, t_{j+3})``.  On span ``i`` (``t_i <= t < t_{i+1}``) the active
quadratic functions are ``q[i-2, 3], q[i-1, 3], q[i, 3]``.
"""

from __future__ import annotations

import numpy as np

from mavreplan.core import Trajectory, as_points

DEFAULT_SAMPLES_PER_SEGMENT = 10


def _ratio(num: float, den: float) -> float:
    # 0/0 := 0 for repeated knots
    return 0.0 if den == 0.0 else num / den


def basis_coxdeboor(j: int, k: int, t: float, knots) -> float:
    """Value of the order-``k`` basis function ``q_{j,k}`` at ``t``."""
    knots = np.asarray(knots, dtype=float)
    if k < 1:
        raise ValueError("order must be >= 1")
    if j < 0 or j + k >= len(knots):
        raise ValueError(f"q[{j},{k}] needs knots t_{j}..t_{j + k}, have {len(knots)}")
    return _coxdeboor(j, k, float(t), knots)


def _coxdeboor(j: int, k: int, t: float, knots: np.ndarray) -> float:
    if k == 1:
        return 1.0 if knots[j] <= t < knots[j + 1] else 0.0
    left = _ratio(t - knots[j], knots[j + k - 1] - knots[j])
    right = _ratio(knots[j + k] - t, knots[j + k] - knots[j + 1])
    val = 0.0
    if left:
        val += left * _coxdeboor(j, k - 1, t, knots)
    if right:
        val += right * _coxdeboor(j + 1, k - 1, t, knots)
    return val


def basis_matrix(i: int, knots) -> np.ndarray:
    """3x3 basis matrix of span ``[t_i, t_{i+1})``.

    For ``u`` in [0, 1) and ``t = t_i + u (t_{i+1} - t_i)``::

        [1, u, u^2] @ M == [q_{i-2,3}(t), q_{i-1,3}(t), q_{i,3}(t)]

    Only knots ``t_{i-1} .. t_{i+2}`` enter.
    """
    knots = np.asarray(knots, dtype=float)
    if i < 1 or i + 2 >= len(knots):
        raise ValueError(f"span {i} needs knots t_{i - 1}..t_{i + 2}, have {len(knots)}")
    t_prev, t0, t1, t2 = knots[i - 1], knots[i], knots[i + 1], knots[i + 2]
    span = t1 - t0
    if not span > 0:
        raise ValueError(f"degenerate knot span {i}: t_{i} == t_{i + 1}")
    a = span / (t1 - t_prev)
    b = span / (t2 - t0)
    return np.array([
        [a, 1.0 - a, 0.0],
        [-2.0 * a, 2.0 * a, 0.0],
        [a, -(a + b), b],
    ])


def clamped_chord_knots(control_points) -> np.ndarray:
    """Clamped quadratic knot vector from chord-length parameters.

    Interior knots are averages of consecutive chord parameters, end knots
    are repeated three times so the curve interpolates the first and last
    control point.
    """
    pts = as_points(control_points)
    n = len(pts)
    if n < 3:
        raise ValueError("a quadratic spline needs at least 3 control points")
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = chords.sum()
    if total > 0:
        s = np.concatenate([[0.0], np.cumsum(chords)]) / total
    else:
        s = np.linspace(0.0, 1.0, n)
    interior = 0.5 * (s[1:n - 2] + s[2:n - 1])
    return np.concatenate([[0.0, 0.0, 0.0], interior, [1.0, 1.0, 1.0]])


def evaluate(control_points, knots, samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT) -> np.ndarray:
    """Sample a quadratic spline span by span through its basis matrices."""
    ctrl = as_points(control_points)
    knots = np.asarray(knots, dtype=float)
    if len(knots) != len(ctrl) + 3:
        raise ValueError("need len(knots) == len(control_points) + 3")
    u = np.arange(samples_per_segment) / samples_per_segment
    powers = np.stack([np.ones_like(u), u, u * u], axis=1)
    chunks = []
    for i in range(2, len(ctrl)):
        if knots[i + 1] <= knots[i]:
            continue
        m = basis_matrix(i, knots)
        chunks.append(powers @ m @ ctrl[i - 2:i + 1])
    # closing sample at the end of the last span, u = 1
    chunks.append(ctrl[-1:].copy())
    return np.vstack(chunks)


def smooth_trajectory(waypoints, samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT) -> Trajectory:
    """Smooth a waypoint polyline with an endpoint-clamped quadratic B-spline.

    The waypoints are the control points.  Output has
    ``(n - 2) * samples_per_segment + 1`` samples for ``n`` waypoints with
    distinct consecutive positions.  Fewer than 3 waypoints are returned
    unchanged.
    """
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    pts = waypoints.waypoints if isinstance(waypoints, Trajectory) else as_points(waypoints)
    if len(pts) < 3:
        return waypoints if isinstance(waypoints, Trajectory) else Trajectory(pts)
    knots = clamped_chord_knots(pts)
    out = evaluate(pts, knots, samples_per_segment)
    # the first sample is P0 only up to rounding in the matrix product
    out[0] = pts[0]
    return Trajectory(out)
