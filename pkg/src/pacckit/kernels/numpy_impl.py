"""Pure-numpy kernel backend.

Reference semantics for every hot per-batch operation. The numba backend in
``numba_impl`` mirrors these signatures exactly; matrix products land in the
same BLAS either way, elementwise ops may differ by an ulp.
"""

import numpy as np

NAME = "numpy"


def dense_forward(x, w, b):
    # x (B,I), w (O,I), b (O) -> (B,O)
    return x @ w.T + b


def dense_backward(x, w, gy):
    gx = gy @ w
    gw = gy.T @ x
    gb = gy.sum(axis=0)
    return gx, gw, gb


def relu(z):
    return np.maximum(z, 0.0)


def relu_backward(z, gy):
    return np.where(z > 0.0, gy, 0.0)


def sigmoid(z, eps):
    # Overflow-safe split keeps exp argument nonpositive on both branches.
    pos = z >= 0.0
    ez = np.exp(np.where(pos, -z, z))
    s = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return np.clip(s, eps, 1.0 - eps)


def sigmoid_backward(s, gy, eps):
    # s is the clamped output; the clamp is flat outside (eps, 1-eps).
    g = gy * s * (1.0 - s)
    return np.where((s <= eps) | (s >= 1.0 - eps), 0.0, g)


def bce_mean(p, y):
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad_mean(p, y):
    # d(mean BCE)/dp
    n = p.shape[0]
    return (-(y / p) + (1.0 - y) / (1.0 - p)) / n


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    # All arrays 1-D, updated in place.
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
