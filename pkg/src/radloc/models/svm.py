"""One-vs-rest RBF support vector machine trained by SMO.

Each binary problem solves the soft-margin dual

    min 1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,  Q_ij = y_i y_j K(x_i, x_j)

with second-order working-set selection and a maintained gradient.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict

import numpy as np

_TAU = 1e-12


def rbf_gamma(x) -> float:
    """1 / (n_features * var(X)); falls back to 1 for constant input."""
    x = np.asarray(x, dtype=float)
    var = float(x.var())
    if var <= 0:
        warnings.warn("constant training matrix; using gamma = 1", RuntimeWarning)
        return 1.0
    return 1.0 / (x.shape[1] * var)


def rbf_kernel(a, b, gamma: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KernelRows:
    """LRU cache of training-kernel rows shared by all one-vs-rest problems."""

    def __init__(self, x, gamma: float, max_bytes: float = 256e6):
        self.x = np.asarray(x, dtype=float)
        self.gamma = gamma
        self.capacity = max(2, int(max_bytes // (8 * max(1, len(self.x)))))
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def __call__(self, i: int) -> np.ndarray:
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            return row
        row = rbf_kernel(self.x[i], self.x, self.gamma)[0]
        self._rows[i] = row
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return row


def kkt_violation(alpha, grad, y, c: float) -> float:
    """Largest dual KKT gap m(a) - M(a); zero or negative at an exact optimum."""
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
    if not up.any() or not low.any():
        return 0.0
    score = -y * grad
    return float(score[up].max() - score[low].min())


def solve_binary(rows: KernelRows, y, c: float, tol: float, max_iter: int):
    """SMO for one binary problem with labels in {-1, +1}.

    Returns ``(alpha, grad, rho, n_iter)``; the decision value is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    y = np.asarray(y, dtype=float)
    m = len(y)
    alpha = np.zeros(m)
    grad = -np.ones(m)
    it = 0
    while it < max_iter:
        score = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        up_idx = np.flatnonzero(up)
        i = int(up_idx[np.argmax(score[up_idx])])
        gmax = score[i]
        low_idx = np.flatnonzero(low)
        if gmax - score[low_idx].min() < tol:
            break
        ki = rows(i)
        diff = gmax - score[low_idx]
        cand = low_idx[diff > 0]
        quad = 2.0 - 2.0 * ki[cand]  # K_ii = K_tt = 1 for RBF
        quad = np.where(quad > 0, quad, _TAU)
        j = int(cand[np.argmin(-(diff[diff > 0] ** 2) / quad)])
        kj = rows(j)
        qi = y[i] * y * ki
        qj = y[j] * y * kj
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            q = max(2.0 + 2.0 * qi[j], _TAU)
            delta = (-grad[i] - grad[j]) / q
            d = ai - aj
            ni, nj = ai + delta, aj + delta
            if d > 0:
                if nj < 0:
                    nj, ni = 0.0, d
            elif ni < 0:
                ni, nj = 0.0, -d
            if d > 0:
                if ni > c:
                    ni, nj = c, c - d
            elif nj > c:
                nj, ni = c, c + d
        else:
            q = max(2.0 - 2.0 * qi[j], _TAU)
            delta = (grad[i] - grad[j]) / q
            s = ai + aj
            ni, nj = ai - delta, aj + delta
            if s > c:
                if ni > c:
                    ni, nj = c, s - c
            elif nj < 0:
                nj, ni = 0.0, s
            if s > c:
                if nj > c:
                    nj, ni = c, s - c
            elif ni < 0:
                ni, nj = 0.0, s
        grad += qi * (ni - ai) + qj * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1
    else:
        warnings.warn(f"SMO stopped at {max_iter} iterations before reaching tol {tol}", RuntimeWarning)
    return alpha, grad, _rho(alpha, grad, y, c), it


def _rho(alpha, grad, y, c: float) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(yg[free].mean())
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
    ub = yg[up].min() if up.any() else np.inf
    lb = yg[low].max() if low.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float((ub + lb) / 2.0)


def fit(x, y, n_classes, hp, rng) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    gamma = float(hp["gamma"]) if hp.get("gamma") is not None else rbf_gamma(x)
    rows = KernelRows(x, gamma)
    c = float(hp["C"])
    coefs, rhos, iters, gaps = [], [], [], []
    for k in range(n_classes):
        yk = np.where(y == k, 1.0, -1.0)
        alpha, grad, rho, it = solve_binary(rows, yk, c, float(hp["tol"]), int(hp["max_iter"]))
        coefs.append(alpha * yk)
        rhos.append(rho)
        iters.append(it)
        gaps.append(kkt_violation(alpha, grad, yk, c))
    coef = np.array(coefs)
    sv = np.flatnonzero(np.any(coef != 0, axis=0))
    return {
        "gamma": gamma,
        "support": sv,
        "support_vectors": x[sv],
        "dual_coef": coef[:, sv],
        "rho": np.array(rhos),
        "n_iter": np.array(iters, dtype=np.int64),
        "kkt_gap": np.array(gaps),
    }


def decision_function(params: dict, x) -> np.ndarray:
    sv = np.asarray(params["support_vectors"], dtype=float)
    coef = np.asarray(params["dual_coef"], dtype=float).reshape(-1, len(sv))
    x = np.asarray(x, dtype=float)
    if len(sv) == 0:
        return np.zeros((len(x), len(coef))) - np.asarray(params["rho"], dtype=float)
    out = np.empty((len(x), len(coef)))
    for s in range(0, len(x), 1024):
        k = rbf_kernel(x[s:s + 1024], sv, float(params["gamma"]))
        out[s:s + 1024] = k @ coef.T
    return out - np.asarray(params["rho"], dtype=float)


def predict(params: dict, x, n_classes: int, hp: dict) -> np.ndarray:
    return np.argmax(decision_function(params, x), axis=1).astype(np.int64)
