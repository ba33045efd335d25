"""k-nearest neighbours over a ball tree."""

from __future__ import annotations

import heapq

import numpy as np

# Pruning slack; the bound must never discard a neighbour lost to rounding.
_SLACK = 1e-12


def minkowski(a: np.ndarray, q: np.ndarray, p: float) -> np.ndarray:
    """Distances from each row of ``a`` to ``q``."""
    diff = np.abs(a - q)
    if p == 2:
        return np.sqrt((diff * diff).sum(axis=-1))
    if p == 1:
        return diff.sum(axis=-1)
    if np.isinf(p):
        return diff.max(axis=-1)
    return (diff**p).sum(axis=-1) ** (1.0 / p)


class BallTree:
    """Binary ball tree; nodes split at the median of the widest dimension.

    Node arrays are stored flat (pre-order) so the tree serializes as plain lists.
    """

    def __init__(self, data, leaf_size: int = 30, p: float = 2.0, *, _arrays: dict | None = None):
        self.data = np.asarray(data, dtype=float)
        self.leaf_size = int(leaf_size)
        self.p = float(p)
        if _arrays is not None:
            for name, value in _arrays.items():
                setattr(self, name, np.asarray(value))
            self.centroid = self.centroid.astype(float).reshape(-1, self.data.shape[1])
            self.radius = self.radius.astype(float)
            return
        self._build()

    def _build(self):
        m = len(self.data)
        self.perm = np.arange(m)
        start, end, left, right, cent, rad = [], [], [], [], [], []

        def make(lo: int, hi: int) -> int:
            node = len(start)
            pts = self.data[self.perm[lo:hi]]
            c = pts.mean(axis=0)
            start.append(lo)
            end.append(hi)
            left.append(-1)
            right.append(-1)
            cent.append(c)
            rad.append(float(minkowski(pts, c, self.p).max()) if hi > lo else 0.0)
            if hi - lo > self.leaf_size:
                spread = pts.max(axis=0) - pts.min(axis=0)
                dim = int(np.argmax(spread))
                if spread[dim] > 0:
                    order = np.argsort(pts[:, dim], kind="stable")
                    self.perm[lo:hi] = self.perm[lo:hi][order]
                    mid = lo + (hi - lo) // 2
                    left[node] = make(lo, mid)
                    right[node] = make(mid, hi)
            return node

        if m:
            make(0, m)
        self.start = np.array(start, dtype=np.int64)
        self.end = np.array(end, dtype=np.int64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.centroid = np.array(cent, dtype=float).reshape(-1, self.data.shape[1] if self.data.ndim == 2 else 0)
        self.radius = np.array(rad, dtype=float)

    def arrays(self) -> dict:
        return {
            "perm": self.perm,
            "start": self.start,
            "end": self.end,
            "left": self.left,
            "right": self.right,
            "centroid": self.centroid,
            "radius": self.radius,
        }

    def query(self, q, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The k nearest rows ordered by (distance, index)."""
        q = np.asarray(q, dtype=float)
        k = min(int(k), len(self.data))
        heap: list[tuple[float, int]] = []  # (-dist, -index): top is the current worst

        # lower bound on the distance to any point in each node
        lower = np.maximum(minkowski(self.centroid, q, self.p) - self.radius, 0.0).tolist()
        left, right = self.left.tolist(), self.right.tolist()

        def visit(node: int, lb: float):
            if len(heap) == k:
                worst = -heap[0][0]
                if lb - worst > _SLACK * max(1.0, worst):
                    return
            if left[node] < 0:
                idx = self.perm[self.start[node]:self.end[node]]
                dist = minkowski(self.data[idx], q, self.p)
                if len(heap) == k:
                    keep = dist <= -heap[0][0]
                    idx, dist = idx[keep], dist[keep]
                for d, i in zip(dist.tolist(), idx.tolist()):
                    if len(heap) < k:
                        heapq.heappush(heap, (-d, -i))
                    elif (d, i) < (-heap[0][0], -heap[0][1]):
                        heapq.heapreplace(heap, (-d, -i))
                return
            a, b = left[node], right[node]
            if lower[b] < lower[a]:
                a, b = b, a
            visit(a, lower[a])
            visit(b, lower[b])

        if len(self.data):
            visit(0, lower[0])
        best = sorted((-d, -i) for d, i in heap)
        return np.array([d for d, _ in best]), np.array([i for _, i in best], dtype=np.int64)


def vote(neighbor_labels: np.ndarray, n_classes: int) -> int:
    """Majority label; ties go to the tied class whose member is nearest."""
    counts = np.bincount(neighbor_labels, minlength=n_classes)
    tied = counts == counts.max()
    for lab in neighbor_labels:
        if tied[lab]:
            return int(lab)
    raise AssertionError("unreachable")


def fit(x, y, n_classes, hp, rng) -> dict:
    tree = BallTree(x, leaf_size=hp["leaf_size"], p=hp["p"])
    return {"x": tree.data, "y": np.asarray(y, dtype=np.int64), **tree.arrays()}


def _tree(params: dict, hp: dict) -> BallTree:
    arrays = {k: params[k] for k in ("perm", "start", "end", "left", "right", "centroid", "radius")}
    return BallTree(params["x"], hp["leaf_size"], hp["p"], _arrays=arrays)


def predict(params: dict, x, n_classes: int, hp: dict) -> np.ndarray:
    tree = _tree(params, hp)
    y = np.asarray(params["y"], dtype=np.int64)
    out = np.empty(len(x), dtype=np.int64)
    for r, q in enumerate(np.asarray(x, dtype=float)):
        _, idx = tree.query(q, hp["k"])
        out[r] = vote(y[idx], n_classes)
    return out
