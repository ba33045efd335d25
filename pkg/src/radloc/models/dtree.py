"""CART classification tree with Gini impurity."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from radloc.errors import DataError

# Float costs this close to the best are re-ranked with exact rationals.
_TIE_TOL = 1e-12


def gini(counts) -> float:
    """1 - sum(p_y^2) over class counts."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise DataError("gini of an empty node")
    p = counts / total
    return float(1.0 - (p * p).sum())


def _exact_cost(left_counts, right_counts) -> Fraction:
    """n * weighted child impurity as an exact rational."""
    cost = Fraction(0)
    for counts in (left_counts, right_counts):
        n = int(sum(counts))
        cost += n - Fraction(sum(int(c) * int(c) for c in counts), n)
    return cost


def _threshold(a: float, b: float) -> float:
    t = a + (b - a) / 2.0
    # keep b strictly on the right of the cut
    return a if t >= b else t


def best_split(x, y, n_classes: int):
    """Feature index and threshold minimising the weighted child Gini.

    Candidates are midpoints of consecutive distinct sorted values; samples with
    ``x <= t`` go left. Ties prefer the lowest feature, then the lowest threshold.
    Returns ``(feature, threshold, cost)`` with cost the weighted child impurity,
    or ``None`` when every feature is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    m, n_feat = x.shape
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), y] = 1.0
    total = onehot.sum(axis=0)
    cands = []  # (cost, feature, position-in-sorted-order, order)
    best = np.inf
    for f in range(n_feat):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        valid = np.nonzero(xs[1:] > xs[:-1])[0]
        if valid.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = total - left
        nl = (valid + 1).astype(float)
        nr = m - nl
        cost = (nl - (left * left).sum(axis=1) / nl + nr - (right * right).sum(axis=1) / nr) / m
        best = min(best, float(cost.min()))
        cands.append((f, order, xs, valid, cost))
    if not cands:
        return None
    tol = _TIE_TOL * max(1.0, best)
    winner = None
    for f, order, xs, valid, cost in cands:
        for k in np.nonzero(cost <= best + tol)[0]:
            pos = int(valid[k])
            lc = np.bincount(y[order[: pos + 1]], minlength=n_classes)
            key = (_exact_cost(lc, total.astype(np.int64) - lc), f, _threshold(xs[pos], xs[pos + 1]))
            if winner is None or key < winner:
                winner = key
    exact, f, t = winner
    return f, t, float(exact / m)


def _majority(y, n_classes: int) -> int:
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


def fit(x, y, n_classes, hp, rng) -> dict:
    """Grow the tree depth-first; nodes are stored flat in pre-order."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    max_depth = int(hp["max_depth"])
    min_split = int(hp.get("min_samples_split", 2))
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        ys = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_majority(ys, n_classes))
        counts = np.bincount(ys, minlength=n_classes)
        if depth >= max_depth or len(idx) < min_split or np.count_nonzero(counts) <= 1:
            return node
        found = best_split(x[idx], ys, n_classes)
        if found is None:
            return node
        f, t, _ = found
        goes_left = x[idx, f] <= t
        lc = np.bincount(ys[goes_left], minlength=n_classes)
        parent = len(idx) - Fraction(int((counts * counts).sum()), len(idx))
        if _exact_cost(lc, counts - lc) >= parent:
            return node
        feature[node] = f
        threshold[node] = t
        left[node] = grow(idx[goes_left], depth + 1)
        right[node] = grow(idx[~goes_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=np.int64),
    }


def apply(params: dict, x) -> np.ndarray:
    """Leaf node index reached by each row."""
    x = np.asarray(x, dtype=float)
    feature = np.asarray(params["feature"])
    threshold = np.asarray(params["threshold"], dtype=float)
    left = np.asarray(params["left"])
    right = np.asarray(params["right"])
    node = np.zeros(len(x), dtype=np.int64)
    rows = np.arange(len(x))
    active = feature[node] >= 0
    while active.any():
        r, nd = rows[active], node[active]
        go_left = x[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def depth(params: dict) -> int:
    left, right = params["left"], params["right"]
    best, stack = 0, [(0, 0)]
    while stack:
        nd, d = stack.pop()
        best = max(best, d)
        if left[nd] >= 0:
            stack.extend([(left[nd], d + 1), (right[nd], d + 1)])
    return best


def predict(params: dict, x, n_classes: int, hp: dict) -> np.ndarray:
    return np.asarray(params["value"], dtype=np.int64)[apply(params, x)]
