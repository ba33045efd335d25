"""Fully connected ReLU network with a softmax output, trained by Adam."""

from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax


def init_params(sizes, rng: np.random.Generator) -> list[np.ndarray]:
    """Xavier-uniform weights, zero biases; returned as [W1, b1, W2, b2, ...]."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, x) -> np.ndarray:
    """Output logits."""
    h = np.asarray(x, dtype=float)
    n_layers = len(params) // 2
    for k in range(n_layers):
        h = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def loss_and_grad(params, x, y, l2: float):
    """Mean cross-entropy plus (l2/2)*sum ||W||^2 (biases excluded) and its gradient."""
    x = np.asarray(x, dtype=float)
    m = len(x)
    n_layers = len(params) // 2
    acts = [x]
    h = x
    for k in range(n_layers):
        h = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    logp = log_softmax(h, axis=1)
    loss = -logp[np.arange(m), y].mean()
    loss += 0.5 * l2 * sum(float((params[2 * k] ** 2).sum()) for k in range(n_layers))
    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads = [None] * len(params)
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta + l2 * params[2 * k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ params[2 * k].T) * (acts[k] > 0)
    return float(loss), grads


def fit(x, y, n_classes, hp, rng) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    sizes = [x.shape[1], *[int(hp["hidden_size"])] * int(hp["hidden_layers"]), n_classes]
    params = init_params(sizes, rng)
    lr, b1, b2, eps = float(hp["learning_rate"]), float(hp["beta1"]), float(hp["beta2"]), float(hp["epsilon"])
    l2 = float(hp["l2"])
    batch = int(hp["batch_size"])
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    curve = []
    for _ in range(int(hp["epochs"])):
        order = rng.permutation(len(x))
        for s in range(0, len(x), batch):
            idx = order[s:s + batch]
            _, grads = loss_and_grad(params, x[idx], y[idx], l2)
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= b1
                a += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p -= lr * (a / c1) / (np.sqrt(v / c2) + eps)
        curve.append(loss_and_grad(params, x, y, l2)[0])
    out = {f"W{k + 1}": params[2 * k] for k in range(len(params) // 2)}
    out.update({f"b{k + 1}": params[2 * k + 1] for k in range(len(params) // 2)})
    out["loss_curve"] = np.array(curve)
    return out


def unpack(params: dict) -> list[np.ndarray]:
    n_layers = sum(1 for k in params if k.startswith("W"))
    flat = []
    for k in range(1, n_layers + 1):
        flat.append(np.asarray(params[f"W{k}"], dtype=float))
        flat.append(np.asarray(params[f"b{k}"], dtype=float))
    return flat


def scores(params: dict, x) -> np.ndarray:
    """Softmax class probabilities."""
    return softmax(forward(unpack(params), x), axis=1)


def predict(params: dict, x, n_classes: int, hp: dict) -> np.ndarray:
    return np.argmax(forward(unpack(params), x), axis=1).astype(np.int64)
