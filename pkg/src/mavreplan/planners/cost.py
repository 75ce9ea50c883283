"""Path smoothness energy and the relative path cost.

A path ``q_0 .. q_{n+1}`` with fixed endpoints has interior points
``q_1 .. q_n``.  The smoothness potential is half the sum of squared
consecutive differences; its gradient with respect to an interior point is
``2 q_i - q_{i+1} - q_{i-1}``, i.e. ``A q`` with ``A`` the tridiagonal
(2, -1) matrix once the endpoints are folded in as boundary terms.
"""

from __future__ import annotations

import logging

import numpy as np

from mavreplan.core import Trajectory, as_points

log = logging.getLogger(__name__)

DEFAULT_RESAMPLE = 50
ENERGY_FLOOR = 1e-12


def second_difference_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def second_difference_eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(k * np.pi / (n + 1))


def _pts(q) -> np.ndarray:
    return q.waypoints if isinstance(q, Trajectory) else as_points(q)


def quadratic_form(x) -> float:
    """``sum_d x_d^T A x_d`` over the columns of ``x`` (zero boundary values)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    a = second_difference_matrix(len(x))
    return float(np.einsum("id,ij,jd->", x, a, x))


def path_energy(q) -> float:
    """``q^T A q`` over the interior points plus the endpoint boundary terms.

    Equal to the sum of squared consecutive differences, so it is invariant
    under translations and rotations of the whole path.  Paths with fewer
    than 3 waypoints have no interior and zero energy.
    """
    pts = _pts(q)
    if len(pts) < 3:
        return 0.0
    diff = np.diff(pts, axis=0)
    return float(np.einsum("ij,ij->", diff, diff))


def smoothness_potential(q) -> float:
    """``U = 1/2 sum |q_{i+1} - q_i|^2``."""
    return 0.5 * path_energy(q)


def path_energy_gradient(q) -> np.ndarray:
    """Gradient of :func:`smoothness_potential` w.r.t. the interior points.

    Row ``i - 1`` holds ``2 q_i - q_{i+1} - q_{i-1}``.
    """
    pts = _pts(q)
    if len(pts) < 3:
        return np.zeros((0, 3))
    return 2.0 * pts[1:-1] - pts[2:] - pts[:-2]


def resample_by_arclength(q, n: int = DEFAULT_RESAMPLE) -> np.ndarray:
    pts = _pts(q)
    if len(pts) == 0:
        raise ValueError("cannot resample an empty path")
    if len(pts) == 1:
        return np.repeat(pts, n, axis=0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    # drop zero-length segments so interpolation abscissae are increasing
    keep = np.concatenate([[True], seg > 0])
    s, pts = s[keep], pts[keep]
    target = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(target, s, pts[:, d]) for d in range(3)], axis=1)


def path_cost(q, reference, n: int = DEFAULT_RESAMPLE) -> float:
    """Energy of ``q`` relative to the energy of ``reference``.

    Both are resampled to ``n`` arc-length-equidistant points first.  A
    reference with (near) zero energy is floored at ``ENERGY_FLOOR``.
    """
    return path_cost_flagged(q, reference, n)[0]


def path_cost_flagged(q, reference, n: int = DEFAULT_RESAMPLE):
    """Like :func:`path_cost` but also returns whether the floor was hit."""
    eq = path_energy(resample_by_arclength(q, n))
    er = path_energy(resample_by_arclength(reference, n))
    floored = er < ENERGY_FLOOR
    if floored:
        log.warning("reference trajectory has zero energy; using floor %g", ENERGY_FLOOR)
        er = ENERGY_FLOOR
    return eq / er, floored
