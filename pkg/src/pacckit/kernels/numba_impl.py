"""Numba kernel backend.

Same contracts as ``numpy_impl`` with the elementwise work fused into the
JIT-compiled loops. ``np.dot`` inside ``@njit`` dispatches to the same BLAS
as the numpy backend; fusion pays off by skipping intermediate temporaries,
which dominates at the small layer widths these models use.

fastmath stays off: reassociation would break cross-backend comparability
and the gradient checks.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def dense_forward(x, w, b):
    y = np.dot(x, w.T)
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            y[i, j] += b[j]
    return y


@njit(cache=True)
def dense_backward(x, w, gy):
    gx = np.dot(gy, w)
    gw = np.dot(gy.T, x)
    gb = np.zeros(gy.shape[1])
    for i in range(gy.shape[0]):
        for j in range(gy.shape[1]):
            gb[j] += gy[i, j]
    return gx, gw, gb


@njit(cache=True)
def relu(z):
    out = np.empty_like(z)
    flat_in = z.reshape(-1)
    flat_out = out.reshape(-1)
    for i in range(flat_in.size):
        v = flat_in[i]
        flat_out[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_backward(z, gy):
    out = np.empty_like(gy)
    fz = z.reshape(-1)
    fg = gy.reshape(-1)
    fo = out.reshape(-1)
    for i in range(fz.size):
        fo[i] = fg[i] if fz[i] > 0.0 else 0.0
    return out


@njit(cache=True)
def sigmoid(z, eps):
    out = np.empty_like(z)
    fz = z.reshape(-1)
    fo = out.reshape(-1)
    hi = 1.0 - eps
    for i in range(fz.size):
        v = fz[i]
        if v >= 0.0:
            s = 1.0 / (1.0 + np.exp(-v))
        else:
            e = np.exp(v)
            s = e / (1.0 + e)
        if s < eps:
            s = eps
        elif s > hi:
            s = hi
        fo[i] = s
    return out


@njit(cache=True)
def sigmoid_backward(s, gy, eps):
    out = np.empty_like(gy)
    fs = s.reshape(-1)
    fg = gy.reshape(-1)
    fo = out.reshape(-1)
    hi = 1.0 - eps
    for i in range(fs.size):
        v = fs[i]
        if v <= eps or v >= hi:
            fo[i] = 0.0
        else:
            fo[i] = fg[i] * v * (1.0 - v)
    return out


@njit(cache=True)
def bce_mean(p, y):
    acc = 0.0
    for i in range(p.shape[0]):
        acc += y[i] * np.log(p[i]) + (1.0 - y[i]) * np.log1p(-p[i])
    return -acc / p.shape[0]


@njit(cache=True)
def bce_grad_mean(p, y):
    n = p.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = (-(y[i] / p[i]) + (1.0 - y[i]) / (1.0 - p[i])) / n
    return out


@njit(cache=True)
def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(p.size):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
