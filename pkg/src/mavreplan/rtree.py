"""A small 3-D point R-tree.

Leaves hold points (degenerate boxes).  Nodes keep their children's
bounding boxes as ``(k, 3)`` arrays so every per-node test is one numpy
expression.  Trees are built either incrementally (Guttman insertion with
the quadratic split) or in one pass with Sort-Tile-Recursive packing.
"""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

DEFAULT_FANOUT = 16


class _Node:
    __slots__ = ("leaf", "lo", "hi", "children", "ids")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.lo = np.zeros((0, 3))
        self.hi = np.zeros((0, 3))
        self.children: List["_Node"] = []
        self.ids = np.zeros(0, dtype=np.int64)

    def __len__(self):
        return len(self.lo)

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lo.min(axis=0), self.hi.max(axis=0)


def _volume(lo, hi):
    return np.prod(hi - lo, axis=-1)


def _margin(lo, hi):
    return np.sum(hi - lo, axis=-1)


def point_segment_distance(p, a, b):
    """Distances from points ``p`` (k, 3) to segment ``ab``."""
    p = np.atleast_2d(p)
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return np.linalg.norm(p - a, axis=1)
    s = np.clip((p - a) @ d / dd, 0.0, 1.0)
    return np.linalg.norm(p - (a + s[:, None] * d), axis=1)


def _expand(off, cnt):
    """Concatenate the index ranges ``[off_i, off_i + cnt_i)``."""
    total = int(cnt.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    shift = np.repeat(off - (np.cumsum(cnt) - cnt), cnt)
    return np.arange(total) + shift


# Predicates over boxes stored column-wise: lo, hi have shape (3, k).
def _soa_mindist2(q, lo, hi):
    acc = 0.0
    for d in range(3):
        t = np.maximum(lo[d] - q[d], 0.0) + np.maximum(q[d] - hi[d], 0.0)
        acc = acc + t * t
    return acc


def _soa_maxdist2(q, lo, hi):
    acc = 0.0
    for d in range(3):
        t = np.maximum(q[d] - lo[d], hi[d] - q[d])
        acc = acc + t * t
    return acc


def _soa_overlap(lo, hi, qlo, qhi):
    m = (lo[0] <= qhi[0]) & (hi[0] >= qlo[0])
    m &= (lo[1] <= qhi[1]) & (hi[1] >= qlo[1])
    m &= (lo[2] <= qhi[2]) & (hi[2] >= qlo[2])
    return m


def _soa_slab(a, inv, r, lo, hi):
    """Segment ``a + s / inv, s in [0, 1]`` against boxes inflated by ``r``.

    Conservative (pruning only): a zero direction component is replaced by
    a tiny one, so its slab interval becomes +-huge with the right sign.
    """
    tmin = np.zeros(lo.shape[1])
    tmax = np.ones(lo.shape[1])
    for d in range(3):
        t1 = (lo[d] - (a[d] + r)) * inv[d]
        t2 = (hi[d] - (a[d] - r)) * inv[d]
        tmin = np.maximum(tmin, np.minimum(t1, t2))
        tmax = np.minimum(tmax, np.maximum(t1, t2))
    return tmin <= tmax


def _soa_segment_dist2(p, a, d, dd):
    """Squared distances from points ``p`` (3, k) to the segment ``a + s d``."""
    rel = [p[k] - a[k] for k in range(3)]
    if dd == 0.0:
        return rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]
    s = np.clip((rel[0] * d[0] + rel[1] * d[1] + rel[2] * d[2]) / dd, 0.0, 1.0)
    acc = 0.0
    for k in range(3):
        t = rel[k] - s * d[k]
        acc = acc + t * t
    return acc


class _Packed:
    """Level-order, column-wise arrays of a tree for vectorized queries.

    ``lo[k]``/``hi[k]`` (shape (3, n_k)) hold every entry box at depth
    ``k``; the node behind entry ``e`` of depth ``k`` owns entries
    ``off[k + 1][e] ..`` of depth ``k + 1``.  The last level holds the
    points and their ids.  Queries start at ``top``, the deepest level small
    enough to scan in one step, which skips the per-node overhead of the
    upper levels.
    """

    SCAN_LIMIT = 1024

    def __init__(self, root: _Node):
        self.lo, self.hi, self.off, self.cnt = [], [], [], []
        nodes = [root]
        while True:
            cnt = np.array([len(n) for n in nodes], dtype=np.int64)
            self.cnt.append(cnt)
            self.off.append(np.cumsum(cnt) - cnt)
            self.lo.append(np.ascontiguousarray(np.concatenate([n.lo for n in nodes]).T))
            self.hi.append(np.ascontiguousarray(np.concatenate([n.hi for n in nodes]).T))
            if nodes[0].leaf:
                self.ids = np.concatenate([n.ids for n in nodes])
                break
            nodes = [c for n in nodes for c in n.children]
        self.depth = len(self.lo)
        self.top = 0
        while self.top + 1 < self.depth and self.lo[self.top + 1].shape[1] <= self.SCAN_LIMIT:
            self.top += 1
        self.top_all = np.arange(self.lo[self.top].shape[1])

    def descend(self, prune) -> np.ndarray:
        """Leaf-level entry indices whose ancestor boxes all survive ``prune``."""
        cand = self.top_all
        for k in range(self.top, self.depth - 1):
            lo, hi = self.lo[k], self.hi[k]
            if len(cand) < lo.shape[1]:
                lo, hi = lo[:, cand], hi[:, cand]
            sel = cand[prune(lo, hi)]
            cand = _expand(self.off[k + 1][sel], self.cnt[k + 1][sel])
        return cand

    def leaf_points(self, cand) -> np.ndarray:
        return self.lo[-1][:, cand]


class RTree:
    """Point R-tree with ``fanout`` children per node."""

    def __init__(self, fanout: int = DEFAULT_FANOUT, min_fill: Optional[int] = None):
        if fanout < 4:
            raise ValueError("fanout must be >= 4")
        self.fanout = fanout
        self.min_fill = min_fill if min_fill is not None else max(2, int(0.4 * fanout))
        if not 1 <= self.min_fill <= fanout // 2:
            raise ValueError("min_fill must be in [1, fanout // 2]")
        self.root = _Node(leaf=True)
        self.points = np.zeros((0, 3))
        self._size = 0
        self._packed: Optional[_Packed] = None

    def __len__(self):
        return self._size

    @property
    def packed(self) -> _Packed:
        if self._packed is None:
            self._packed = _Packed(self.root)
        return self._packed

    # ------------------------------------------------------------ building
    @classmethod
    def bulk_load(cls, points, fanout: int = DEFAULT_FANOUT) -> "RTree":
        """Sort-Tile-Recursive packing of ``points``; ids are row indices."""
        tree = cls(fanout)
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        tree.points = pts.copy()
        tree._size = len(pts)
        if len(pts) == 0:
            return tree
        ids = np.arange(len(pts))
        leaves = []
        for group in _str_tiles(pts, ids, fanout):
            node = _Node(leaf=True)
            node.ids = group
            node.lo = node.hi = tree.points[group]
            leaves.append(node)
        level = leaves
        while len(level) > 1:
            boxes_lo = np.array([n.lo.min(axis=0) for n in level])
            boxes_hi = np.array([n.hi.max(axis=0) for n in level])
            centers = 0.5 * (boxes_lo + boxes_hi)
            parents = []
            for group in _str_tiles(centers, np.arange(len(level)), fanout):
                node = _Node(leaf=False)
                node.children = [level[g] for g in group]
                node.lo = boxes_lo[group]
                node.hi = boxes_hi[group]
                parents.append(node)
            level = parents
        tree.root = level[0]
        return tree

    def insert(self, point) -> int:
        """Guttman insertion; returns the new point's id (its row in ``points``)."""
        p = np.asarray(point, dtype=float).reshape(3)
        item_id = len(self.points)
        self.points = np.vstack([self.points, p])
        self._packed = None
        split = self._insert(self.root, p, item_id)
        if split is not None:
            old = self.root
            root = _Node(leaf=False)
            root.children = [old, split]
            lo0, hi0 = old.bbox()
            lo1, hi1 = split.bbox()
            root.lo = np.array([lo0, lo1])
            root.hi = np.array([hi0, hi1])
            self.root = root
        self._size += 1
        return int(item_id)

    def _insert(self, node: _Node, p: np.ndarray, item_id: int) -> Optional[_Node]:
        if node.leaf:
            node.lo = np.vstack([node.lo, p])
            node.hi = node.lo
            node.ids = np.append(node.ids, item_id)
            return self._split(node) if len(node) > self.fanout else None
        i = self._choose_subtree(node, p)
        child = node.children[i]
        sibling = self._insert(child, p, item_id)
        lo, hi = child.bbox()
        node.lo[i], node.hi[i] = lo, hi
        if sibling is not None:
            slo, shi = sibling.bbox()
            node.children.append(sibling)
            node.lo = np.vstack([node.lo, slo])
            node.hi = np.vstack([node.hi, shi])
            if len(node) > self.fanout:
                return self._split(node)
        return None

    @staticmethod
    def _choose_subtree(node: _Node, p: np.ndarray) -> int:
        ulo = np.minimum(node.lo, p)
        uhi = np.maximum(node.hi, p)
        vol = _volume(node.lo, node.hi)
        enlarge = _volume(ulo, uhi) - vol
        margin_enlarge = _margin(ulo, uhi) - _margin(node.lo, node.hi)
        return int(np.lexsort((margin_enlarge, vol, enlarge))[0])

    def _split(self, node: _Node) -> _Node:
        """Quadratic split; ``node`` keeps group one, the new sibling group two."""
        lo, hi = node.lo, node.hi
        n = len(lo)
        # pick seeds: the pair wasting the most volume (margin breaks ties)
        ulo = np.minimum(lo[:, None, :], lo[None, :, :])
        uhi = np.maximum(hi[:, None, :], hi[None, :, :])
        vol = _volume(lo, hi)
        mar = _margin(lo, hi)
        waste = _volume(ulo, uhi) - vol[:, None] - vol[None, :]
        mwaste = _margin(ulo, uhi) - mar[:, None] - mar[None, :]
        iu = np.triu_indices(n, 1)
        best = np.lexsort((-mwaste[iu], -waste[iu]))[0]
        s1, s2 = int(iu[0][best]), int(iu[1][best])

        groups = ([s1], [s2])
        glo = [lo[s1].copy(), lo[s2].copy()]
        ghi = [hi[s1].copy(), hi[s2].copy()]
        remaining = [k for k in range(n) if k not in (s1, s2)]
        m = self.min_fill
        while remaining:
            for g in (0, 1):
                if len(groups[g]) + len(remaining) == m:
                    groups[g].extend(remaining)
                    for k in remaining:
                        glo[g] = np.minimum(glo[g], lo[k])
                        ghi[g] = np.maximum(ghi[g], hi[k])
                    remaining = []
                    break
            if not remaining:
                break
            r = np.array(remaining)
            enl = []
            menl = []
            for g in (0, 1):
                base_v = float(np.prod(ghi[g] - glo[g]))
                base_m = float(np.sum(ghi[g] - glo[g]))
                elo = np.minimum(lo[r], glo[g])
                ehi = np.maximum(hi[r], ghi[g])
                enl.append(_volume(elo, ehi) - base_v)
                menl.append(_margin(elo, ehi) - base_m)
            pick = int(np.lexsort((-np.abs(menl[0] - menl[1]), -np.abs(enl[0] - enl[1])))[0])
            k = remaining.pop(pick)
            key0 = (enl[0][pick], menl[0][pick], float(np.prod(ghi[0] - glo[0])), len(groups[0]))
            key1 = (enl[1][pick], menl[1][pick], float(np.prod(ghi[1] - glo[1])), len(groups[1]))
            g = 0 if key0 <= key1 else 1
            groups[g].append(k)
            glo[g] = np.minimum(glo[g], lo[k])
            ghi[g] = np.maximum(ghi[g], hi[k])

        sibling = _Node(leaf=node.leaf)
        a, b = np.array(groups[0]), np.array(groups[1])
        if node.leaf:
            ids = node.ids
            node.lo = node.hi = lo[a]
            sibling.lo = sibling.hi = lo[b]
            node.ids, sibling.ids = ids[a], ids[b]
        else:
            children = node.children
            node.lo, node.hi = lo[a], hi[a]
            sibling.lo, sibling.hi = lo[b], hi[b]
            node.children = [children[k] for k in a]
            sibling.children = [children[k] for k in b]
        return sibling

    # ------------------------------------------------------------- queries
    def nearest(self, q) -> Optional[Tuple[int, float]]:
        """Id of the stored point closest to ``q`` and its distance.

        Every box holds at least one point, so the smallest far-corner
        distance over the candidates bounds the answer.  On the last box
        level the points of the closest box give a tighter bound.
        """
        if self._size == 0:
            return None
        q = np.asarray(q, dtype=float).tolist()
        pk = self.packed
        cand = pk.top_all
        for k in range(pk.top, pk.depth - 1):
            lo, hi = pk.lo[k], pk.hi[k]
            if len(cand) < lo.shape[1]:
                lo, hi = lo[:, cand], hi[:, cand]
            md = _soa_mindist2(q, lo, hi)
            if k == pk.depth - 2:
                j = int(np.argmin(md))
                o, c = pk.off[k + 1][cand[j]], pk.cnt[k + 1][cand[j]]
                pts = pk.lo[-1][:, o:o + c]
                bound = float(_soa_mindist2(q, pts, pts).min())
            else:
                bound = float(_soa_maxdist2(q, lo, hi).min())
            sel = cand[md <= bound]
            cand = _expand(pk.off[k + 1][sel], pk.cnt[k + 1][sel])
        pts = pk.leaf_points(cand)
        d2 = _soa_mindist2(q, pts, pts)
        j = int(np.argmin(d2))
        return int(pk.ids[cand[j]]), math.sqrt(float(d2[j]))

    def search_box(self, lo, hi) -> np.ndarray:
        """Ids of points inside the closed box ``[lo, hi]``."""
        if self._size == 0:
            return np.zeros(0, dtype=np.int64)
        qlo = np.asarray(lo, dtype=float).tolist()
        qhi = np.asarray(hi, dtype=float).tolist()
        pk = self.packed
        cand = pk.descend(lambda blo, bhi: _soa_overlap(blo, bhi, qlo, qhi))
        pts = pk.leaf_points(cand)
        return pk.ids[cand[_soa_overlap(pts, pts, qlo, qhi)]]

    def any_within(self, q, radius: float) -> bool:
        """True iff some point lies strictly closer than ``radius`` to ``q``."""
        if self._size == 0 or radius <= 0:
            return False
        q = np.asarray(q, dtype=float).tolist()
        r2 = radius * radius
        pk = self.packed
        cand = pk.descend(lambda lo, hi: _soa_mindist2(q, lo, hi) < r2)
        if len(cand) == 0:
            return False
        pts = pk.leaf_points(cand)
        return bool(np.any(_soa_mindist2(q, pts, pts) < r2))

    def within_many(self, qs, radius: float) -> np.ndarray:
        """Per query point, True iff some point lies strictly closer than ``radius``.

        One descent serves the whole batch: a box survives when it is
        within ``radius`` of any query.
        """
        qs = np.asarray(qs, dtype=float).reshape(-1, 3)
        if self._size == 0 or radius <= 0 or len(qs) == 0:
            return np.zeros(len(qs), dtype=bool)
        r2 = radius * radius
        qt = qs.T[:, :, None]  # (3, m, 1) against boxes (3, 1, k)

        def prune(lo, hi):
            return np.any(_soa_mindist2(qt, lo[:, None, :], hi[:, None, :]) < r2, axis=0)

        pk = self.packed
        cand = pk.descend(prune)
        if len(cand) == 0:
            return np.zeros(len(qs), dtype=bool)
        pts = pk.leaf_points(cand)[:, None, :]
        return np.any(_soa_mindist2(qt, pts, pts) < r2, axis=1)

    def segment_clear(self, a, b, clearance: float) -> bool:
        """True iff every point is at distance >= ``clearance`` from segment ab."""
        if self._size == 0 or clearance <= 0:
            return True
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = b - a
        inv = (1.0 / np.where(np.abs(d) < 1e-12, 1e-12, d)).tolist()
        qlo = (np.minimum(a, b) - clearance).tolist()
        qhi = (np.maximum(a, b) + clearance).tolist()
        al = a.tolist()

        def prune(lo, hi):
            hit = _soa_overlap(lo, hi, qlo, qhi)
            idx = np.flatnonzero(hit)
            if len(idx):
                hit[idx] = _soa_slab(al, inv, clearance, lo[:, idx], hi[:, idx])
            return hit

        pk = self.packed
        cand = pk.descend(prune)
        if len(cand) == 0:
            return True
        d2 = _soa_segment_dist2(pk.leaf_points(cand), al, d.tolist(), float(d @ d))
        return not np.any(d2 < clearance * clearance)

    def depth(self) -> int:
        d, node = 1, self.root
        while not node.leaf:
            node = node.children[0]
            d += 1
        return d

    def check(self) -> None:
        """Assert structural invariants (tests and debugging)."""
        leaf_depths = set()
        count = 0

        def walk(node, depth, lo=None, hi=None):
            nonlocal count
            assert len(node) <= self.fanout
            if lo is not None:
                assert np.all(node.lo >= lo - 1e-12) and np.all(node.hi <= hi + 1e-12)
            if node.leaf:
                leaf_depths.add(depth)
                count += len(node)
                return
            assert len(node.children) == len(node)
            for k, child in enumerate(node.children):
                clo, chi = child.bbox()
                assert np.allclose(clo, node.lo[k]) and np.allclose(chi, node.hi[k])
                walk(child, depth + 1, node.lo[k], node.hi[k])

        walk(self.root, 1)
        assert len(leaf_depths) <= 1, "leaves at different depths"
        assert count == self._size


def _str_tiles(pts: np.ndarray, ids: np.ndarray, fanout: int) -> List[np.ndarray]:
    """Partition ``ids`` into groups of <= fanout by Sort-Tile-Recursive."""
    n = len(ids)
    n_groups = math.ceil(n / fanout)
    slabs = math.ceil(n_groups ** (1.0 / 3.0))
    out = []
    order = ids[np.argsort(pts[ids, 0], kind="stable")]
    per_slab = fanout * slabs * slabs
    for xs in range(0, n, per_slab):
        slab = order[xs:xs + per_slab]
        slab = slab[np.argsort(pts[slab, 1], kind="stable")]
        per_run = fanout * slabs
        for ys in range(0, len(slab), per_run):
            run = slab[ys:ys + per_run]
            run = run[np.argsort(pts[run, 2], kind="stable")]
            for zs in range(0, len(run), fanout):
                out.append(run[zs:zs + fanout])
    return out
