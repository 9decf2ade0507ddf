"""Exact nearest-neighbour search with a balanced k-d tree.

Leaves hold small buckets of points that are scanned with numpy; internal
nodes split at the median of the coordinate with the widest spread. Each
child keeps the extreme split coordinate on its side, so the pruning bound
stays valid when several points share the median value.
"""

from __future__ import annotations

import numpy as np


def complex_to_real(z: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts along the last axis (K complex -> 2K real)."""
    z = np.asarray(z, dtype=np.complex128)
    return np.stack([z.real, z.imag], axis=-1).reshape(z.shape[:-1] + (2 * z.shape[-1],))


def brute_force_nearest(points: np.ndarray, z: np.ndarray) -> tuple[int, float]:
    """Linear scan; the lowest index wins ties."""
    d2 = ((points - z) ** 2).sum(axis=1)
    q = int(np.argmin(d2))
    return q, float(d2[q])


class KdTree:
    """Balanced k-d tree over the rows of a (Q, dim) real array.

    Parameters
    ----------
    points : array_like, shape (Q, dim)
    leaf_size : int
        Maximum bucket size before a node is split.
    """

    def __init__(self, points, leaf_size: int = 16):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("need a non-empty (Q, dim) point array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.leaf_size = int(leaf_size)
        self.num_points, self.dim = pts.shape

        # Node arrays; leaves have dim == -1 and own order[start:end].
        self._dim: list[int] = []
        self._left_max: list[float] = []
        self._right_min: list[float] = []
        self._children: list[tuple[int, int]] = []
        self._span: list[tuple[int, int]] = []

        order = np.empty(self.num_points, dtype=np.int64)
        self._fill = 0
        self._build(pts, np.arange(self.num_points), order)
        self.order = order
        # stored contiguously in leaf order so each bucket is a slice
        self.points = np.ascontiguousarray(pts[order])

    def _new_node(self) -> int:
        self._dim.append(-1)
        self._left_max.append(0.0)
        self._right_min.append(0.0)
        self._children.append((-1, -1))
        self._span.append((0, 0))
        return len(self._dim) - 1

    def _build(self, pts, idx, order) -> int:
        node = self._new_node()
        sub = pts[idx]
        spread = sub.max(axis=0) - sub.min(axis=0) if len(idx) else None
        if len(idx) <= self.leaf_size or not np.any(spread > 0):
            start = self._fill
            order[start:start + len(idx)] = np.sort(idx)
            self._fill += len(idx)
            self._span[node] = (start, self._fill)
            return node
        d = int(np.argmax(spread))
        coord = sub[:, d]
        ranked = np.lexsort((idx, coord))
        m = len(idx) // 2
        left_idx, right_idx = idx[ranked[:m]], idx[ranked[m:]]
        self._dim[node] = d
        self._left_max[node] = float(coord[ranked[m - 1]])
        self._right_min[node] = float(coord[ranked[m]])
        left = self._build(pts, left_idx, order)
        right = self._build(pts, right_idx, order)
        self._children[node] = (left, right)
        return node

    def query(self, z) -> tuple[int, float]:
        """Index of the stored point closest to ``z`` and the squared distance."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.dim,):
            raise ValueError(f"query must have shape ({self.dim},)")
        best_d2 = np.inf
        best_q = -1
        stack = [(0, 0.0)]
        dims, lmax, rmin = self._dim, self._left_max, self._right_min
        while stack:
            node, bound = stack.pop()
            if bound > best_d2:
                continue
            d = dims[node]
            if d < 0:
                start, end = self._span[node]
                d2 = ((self.points[start:end] - z) ** 2).sum(axis=1)
                k = int(np.argmin(d2))
                cand = d2[k]
                if cand <= best_d2:
                    # leaf order is sorted by index, so argmin is the lowest index
                    q = int(self.order[start + k])
                    if cand < best_d2 or q < best_q:
                        best_d2, best_q = float(cand), q
                continue
            left, right = self._children[node]
            x = z[d]
            gap_left = x - lmax[node]
            gap_right = rmin[node] - x
            bl = gap_left * gap_left if gap_left > 0 else 0.0
            br = gap_right * gap_right if gap_right > 0 else 0.0
            if bl <= br:
                stack.append((right, br))
                stack.append((left, bl))
            else:
                stack.append((left, bl))
                stack.append((right, br))
        return best_q, best_d2

    def query_many(self, zs) -> tuple[np.ndarray, np.ndarray]:
        zs = np.atleast_2d(np.asarray(zs, dtype=np.float64))
        out_q = np.empty(len(zs), dtype=np.int64)
        out_d = np.empty(len(zs))
        for n, z in enumerate(zs):
            out_q[n], out_d[n] = self.query(z)
        return out_q, out_d

    def nodes(self):
        """Structural summary ``(dim, left_max, right_min, point_set)`` per node, for inspection."""
        out = []
        for n, d in enumerate(self._dim):
            if d < 0:
                s, e = self._span[n]
                out.append((d, None, None, tuple(self.order[s:e])))
            else:
                out.append((d, self._left_max[n], self._right_min[n], None))
        return out


def build_index(points, leaf_size: int = 16) -> KdTree:
    return KdTree(points, leaf_size=leaf_size)


def query_nearest(index: KdTree, z) -> tuple[int, float]:
    return index.query(z)
