"""Multinomial logistic regression fitted with L-BFGS."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax


def objective(w_flat, x, y, n_classes: int, l2: float):
    """Mean negative log-likelihood plus (l2/2)*||W||^2 (bias unpenalised), with gradient."""
    m, n = x.shape
    w = w_flat[: n_classes * n].reshape(n_classes, n)
    b = w_flat[n_classes * n :]
    logp = log_softmax(x @ w.T + b, axis=1)
    loss = -logp[np.arange(m), y].mean() + 0.5 * l2 * float((w * w).sum())
    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    gw = delta.T @ x + l2 * w
    gb = delta.sum(axis=0)
    return loss, np.concatenate([gw.ravel(), gb])


def fit(x, y, n_classes, hp, rng) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[1]
    l2 = float(hp["l2"])
    w0 = np.zeros(n_classes * (n + 1))
    curve = [float(objective(w0, x, y, n_classes, l2)[0])]

    def record(xk):
        curve.append(float(objective(xk, x, y, n_classes, l2)[0]))

    res = minimize(
        objective,
        w0,
        args=(x, y, n_classes, l2),
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": int(hp["max_iter"]), "maxcor": int(hp["memory"])},
    )
    w = res.x[: n_classes * n].reshape(n_classes, n)
    return {
        "weights": w,
        "bias": res.x[n_classes * n :],
        "loss_curve": np.array(curve),
        "n_iter": int(res.nit),
    }


def scores(params: dict, x) -> np.ndarray:
    """Class probabilities."""
    w = np.asarray(params["weights"], dtype=float)
    b = np.asarray(params["bias"], dtype=float)
    return softmax(np.asarray(x, dtype=float) @ w.T + b, axis=1)


def predict(params: dict, x, n_classes: int, hp: dict) -> np.ndarray:
    w = np.asarray(params["weights"], dtype=float)
    b = np.asarray(params["bias"], dtype=float)
    return np.argmax(np.asarray(x, dtype=float) @ w.T + b, axis=1).astype(np.int64)
