from __future__ import annotations

from typing import List

import numpy as np


class PlanGraph:
    """RRT* tree: vertices with parent links and cost-to-come.

    Vertex 0 is the root.  Coordinates live in a growing array so nearest
    and radius queries are single numpy expressions.
    """

    def __init__(self, root, capacity: int = 256):
        self._pts = np.empty((capacity, 3))
        self._pts[0] = root
        self.n = 1
        self.parent: List[int] = [-1]
        self.cost: List[float] = [0.0]
        self.children: List[List[int]] = [[]]

    def __len__(self):
        return self.n

    @property
    def points(self) -> np.ndarray:
        return self._pts[:self.n]

    def add(self, p, parent: int) -> int:
        if self.n == len(self._pts):
            grown = np.empty((2 * len(self._pts), 3))
            grown[:self.n] = self._pts[:self.n]
            self._pts = grown
        i = self.n
        self._pts[i] = p
        self.n += 1
        self.parent.append(parent)
        self.cost.append(self.cost[parent] + float(np.linalg.norm(self._pts[i] - self._pts[parent])))
        self.children.append([])
        self.children[parent].append(i)
        return i

    def nearest(self, q) -> int:
        d = self.points - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def near(self, q, radius: float) -> np.ndarray:
        d = self.points - q
        return np.nonzero(np.einsum("ij,ij->i", d, d) <= radius * radius)[0]

    def reparent(self, i: int, new_parent: int) -> None:
        """Attach ``i`` under ``new_parent`` and refresh costs of its subtree."""
        old = self.parent[i]
        self.children[old].remove(i)
        self.children[new_parent].append(i)
        self.parent[i] = new_parent
        new_cost = self.cost[new_parent] + float(np.linalg.norm(self._pts[i] - self._pts[new_parent]))
        delta = new_cost - self.cost[i]
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] += delta
            stack.extend(self.children[k])

    def path_to(self, i: int) -> np.ndarray:
        idx = []
        while i != -1:
            idx.append(i)
            i = self.parent[i]
        return self._pts[idx[::-1]].copy()

    def check(self, tol: float = 1e-9) -> None:
        """Assert the tree invariants: acyclic, rooted at 0, costs consistent."""
        for i in range(self.n):
            seen = set()
            k = i
            while k != -1:
                assert k not in seen, f"cycle through vertex {k}"
                seen.add(k)
                k = self.parent[k]
            assert 0 in seen, f"vertex {i} not connected to the root"
            if i:
                p = self.parent[i]
                edge = float(np.linalg.norm(self._pts[i] - self._pts[p]))
                assert abs(self.cost[i] - (self.cost[p] + edge)) <= tol, f"cost mismatch at {i}"
