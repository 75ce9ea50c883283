"""Instance obstacle map.

Point clouds are cropped to a sphere around the vehicle, voxel-deduplicated
and indexed in an R-tree.  The map remembers the last ``capacity`` clouds:
a voxel survives until ``capacity`` newer clouds have arrived without
re-observing it.

Queries run against an immutable :class:`MapSnapshot`.  ``insert_cloud``
builds the next snapshot on the side and publishes it with one reference
swap, so a reader never sees a half-inserted cloud.
"""

from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from mavreplan.core import Point3, as_point, as_points
from mavreplan.rtree import DEFAULT_FANOUT, RTree

# voxel indices are packed into one int64, 21 bits per axis
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    stamp: float = 0.0

    def __post_init__(self):
        pts = as_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


def crop_sphere(cloud: PointCloud, center, radius: float) -> PointCloud:
    """Keep the points with ``|p - center| <= radius``."""
    if not radius > 0:
        raise ValueError("radius must be > 0")
    c = as_point(center)
    pts = cloud.points
    keep = np.einsum("ij,ij->i", pts - c, pts - c) <= radius * radius
    return PointCloud(pts[keep], cloud.stamp)


def ground_filter(cloud: PointCloud, z_ground: float) -> PointCloud:
    """Drop points below ``z_ground``; stands in for ground segmentation."""
    return PointCloud(cloud.points[cloud.points[:, 2] >= z_ground], cloud.stamp)


def voxel_keys(points: np.ndarray, resolution: float) -> np.ndarray:
    idx = np.floor(points / resolution).astype(np.int64) + _KEY_OFFSET
    if idx.size and (idx.min() < 0 or idx.max() > _KEY_MASK):
        raise ValueError("points outside the addressable voxel range")
    return (idx[:, 0] << (2 * _KEY_BITS)) | (idx[:, 1] << _KEY_BITS) | idx[:, 2]


class MapSnapshot:
    """Read-only view of the obstacle points and their R-tree."""

    def __init__(self, tree: RTree):
        self._tree = tree
        self.points = tree.points
        self.points.setflags(write=False)

    def __len__(self):
        return len(self._tree)

    @property
    def tree(self) -> RTree:
        return self._tree

    def nearest_obstacle(self, q) -> Optional[Tuple[Point3, float]]:
        hit = self._tree.nearest(as_point(q))
        if hit is None:
            return None
        idx, dist = hit
        return self.points[idx], dist

    def segment_collision_free(self, a, b, clearance: float) -> bool:
        if clearance < 0:
            raise ValueError("clearance must be >= 0")
        return self._tree.segment_clear(as_point(a), as_point(b), clearance)

    def point_free(self, q, clearance: float) -> bool:
        """True iff no obstacle point is strictly closer than ``clearance``."""
        return not self._tree.any_within(as_point(q), clearance)

    def points_in_box(self, lo, hi) -> np.ndarray:
        return self.points[self._tree.search_box(lo, hi)]


@dataclass(frozen=True)
class InsertReport:
    inserted: int
    deduplicated: int
    evicted: int
    elapsed: float


class ObstacleMap:
    """Circular buffer of deduplicated point clouds behind an R-tree."""

    def __init__(self, resolution: float = 0.2, capacity: int = 10,
                 fanout: int = DEFAULT_FANOUT, z_ground: Optional[float] = None):
        if not resolution > 0:
            raise ValueError("resolution must be > 0")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.resolution = resolution
        self.capacity = capacity
        self.fanout = fanout
        self.z_ground = z_ground
        self._keys = np.zeros(0, dtype=np.int64)  # sorted
        self._pts = np.zeros((0, 3))
        self._seen = np.zeros(0, dtype=np.int64)  # cloud sequence number of last sighting
        self._seq = 0
        self._write_lock = threading.Lock()
        self._snapshot = MapSnapshot(RTree(fanout))

    @classmethod
    def from_points(cls, points, resolution: float = 0.1, **kwargs) -> "ObstacleMap":
        m = cls(resolution=resolution, capacity=1, **kwargs)
        m.insert_cloud(PointCloud(points))
        return m

    def __len__(self):
        return len(self._snapshot)

    @property
    def points(self) -> np.ndarray:
        return self._snapshot.points

    def snapshot(self) -> MapSnapshot:
        return self._snapshot

    def insert_cloud(self, cloud: PointCloud) -> InsertReport:
        t0 = time.perf_counter()
        with self._write_lock:
            pts = cloud.points
            if self.z_ground is not None:
                pts = pts[pts[:, 2] >= self.z_ground]
            self._seq += 1
            seq = self._seq

            keys = voxel_keys(pts, self.resolution)
            ukeys, first = np.unique(keys, return_index=True)
            upts = pts[first]

            if len(self._keys):
                pos = np.minimum(np.searchsorted(self._keys, ukeys), len(self._keys) - 1)
                present = self._keys[pos] == ukeys
            else:
                pos = np.zeros(len(ukeys), dtype=np.int64)
                present = np.zeros(len(ukeys), dtype=bool)
            seen = self._seen.copy()
            seen[pos[present]] = seq

            new = ~present
            keys_all = np.concatenate([self._keys, ukeys[new]])
            pts_all = np.vstack([self._pts, upts[new]])
            seen_all = np.concatenate([seen, np.full(int(new.sum()), seq, dtype=np.int64)])

            alive = seen_all > seq - self.capacity
            evicted = int((~alive).sum())
            keys_all, pts_all, seen_all = keys_all[alive], pts_all[alive], seen_all[alive]
            order = np.argsort(keys_all, kind="stable")
            self._keys, self._pts, self._seen = keys_all[order], pts_all[order], seen_all[order]

            snap = MapSnapshot(RTree.bulk_load(self._pts, self.fanout))
            self._snapshot = snap
        elapsed = time.perf_counter() - t0
        inserted = int(new.sum())
        return InsertReport(inserted, len(pts) - inserted, evicted, elapsed)

    # queries read the published snapshot exactly once
    def nearest_obstacle(self, q) -> Optional[Tuple[Point3, float]]:
        return self._snapshot.nearest_obstacle(q)

    def segment_collision_free(self, a, b, clearance: float) -> bool:
        return self._snapshot.segment_collision_free(a, b, clearance)

    def point_free(self, q, clearance: float) -> bool:
        return self._snapshot.point_free(q, clearance)


# ------------------------------------------------------------------ file I/O
def read_cloud(path, fmt: str = "xyz", stamp: float = 0.0) -> PointCloud:
    """Read an XYZ text file (whitespace or comma separated) or a binary cloud.

    The binary layout is a little-endian uint32 point count followed by
    ``count`` float32 triples.
    """
    path = Path(path)
    if fmt == "xyz":
        rows = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.replace(",", " ").split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 coordinates, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed coordinate") from None
        return PointCloud(np.array(rows).reshape(-1, 3), stamp)
    if fmt == "bin":
        data = path.read_bytes()
        if len(data) < 4:
            raise ValueError(f"{path}: truncated header")
        (count,) = struct.unpack("<I", data[:4])
        body = data[4:]
        if len(body) != 12 * count:
            raise ValueError(f"{path}: expected {count} points, found {len(body) / 12:g}")
        pts = np.frombuffer(body, dtype="<f4").reshape(-1, 3).astype(float)
        return PointCloud(pts, stamp)
    raise ValueError(f"unknown cloud format {fmt!r}")


def write_cloud(path, cloud: PointCloud, fmt: str = "xyz") -> None:
    path = Path(path)
    if fmt == "xyz":
        path.write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.points.tolist()))
    elif fmt == "bin":
        header = struct.pack("<I", len(cloud))
        path.write_bytes(header + cloud.points.astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")
