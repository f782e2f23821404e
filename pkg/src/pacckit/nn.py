"""Minimal dense neural-network substrate.

Float64 everywhere: at desk scale the cost is negligible and it keeps the
finite-difference gradient checks tight. Layers cache their forward inputs
and accumulate parameter gradients on backward; gradients are zeroed between
optimizer steps. One training step owns the parameters exclusively;
inference over disjoint batches is safe to run concurrently because it never
mutates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError, StateError
from .rng import RngState

__all__ = [
    "EPS",
    "Param",
    "DenseLayer",
    "AttentionUnit",
    "GateUnit",
    "Tower",
    "relu",
    "sigmoid",
    "dropout",
    "bce_loss",
    "AdamOptimizer",
    "SgdOptimizer",
    "grad_check",
    "RngState",
]

# Probability clamp applied at the sigmoid activation (not at the loss) so
# every downstream log stays finite.
EPS = 1e-7


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    """Promote a single vector to a one-row batch; report if it was 1-D."""
    a = _as_f64(x)
    if a.ndim == 1:
        return a[None, :], True
    if a.ndim == 2:
        return a, False
    raise ShapeError(f"expected 1-D or 2-D input, got shape {a.shape}")


@dataclass
class Param:
    """A named parameter array paired with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class DenseLayer:
    """Affine map y = weight @ x + bias, weight stored (out, in) row-major."""

    def __init__(self, n_out: int, n_in: int, rng: np.random.Generator | None = None):
        if rng is None:
            self.weight = np.zeros((n_out, n_in))
            self.bias = np.zeros(n_out)
        else:
            self.weight = rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_out, n_in))
            # Small positive bias keeps relu units off their kink at init,
            # which finite-difference gradient checks are sensitive to.
            self.bias = np.full(n_out, 0.01)
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)
        self.n_out = n_out
        self.n_in = n_in
        self._x: np.ndarray | None = None

    def forward(self, x, cache: bool = True) -> np.ndarray:
        x2d, was_vec = _as_batch(x)
        if x2d.shape[1] != self.n_in:
            raise ShapeError(
                f"dense layer expects input width {self.n_in}, got {x2d.shape[1]}"
            )
        if cache:
            self._x = x2d
        y = kernels.dense_forward(x2d, self.weight, self.bias)
        return y[0] if was_vec else y

    def backward(self, gy) -> np.ndarray:
        if self._x is None:
            raise StateError("dense backward called before forward (or without cache)")
        return self.backward_from(self._x, gy)

    def backward_from(self, x2d, gy) -> np.ndarray:
        """Backward against an explicitly supplied input (for shared layers)."""
        gy2d, was_vec = _as_batch(gy)
        if gy2d.shape != (x2d.shape[0], self.n_out):
            raise ShapeError(
                f"gradient shape {gy2d.shape} does not match output ({x2d.shape[0]}, {self.n_out})"
            )
        gx, gw, gb = kernels.dense_backward(x2d, self.weight, gy2d)
        self.weight_grad += gw
        self.bias_grad += gb
        return gx[0] if was_vec else gx

    def params(self, prefix: str = "dense") -> list[Param]:
        return [
            Param(f"{prefix}.weight", self.weight, self.weight_grad),
            Param(f"{prefix}.bias", self.bias, self.bias_grad),
        ]


def relu(x) -> np.ndarray:
    return kernels.relu(_as_f64(x))


def sigmoid(x) -> np.ndarray:
    """Logistic function with output clamped to [EPS, 1-EPS]."""
    return kernels.sigmoid(_as_f64(x), EPS)


def sigmoid_backward(s, gy) -> np.ndarray:
    return kernels.sigmoid_backward(s, gy, EPS)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    raise TypeError(f"expected RngState or numpy Generator, got {type(rng)!r}")


def dropout(x, rate: float, rng=None, training: bool = True) -> np.ndarray:
    """Inverted dropout: train-time survivors are scaled by 1/(1-rate) so
    inference is an exact identity."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    a = _as_f64(x)
    if not training or rate == 0.0:
        return a
    keep = _as_generator(rng).random(a.shape) >= rate
    return a * (keep / (1.0 - rate))


def bce_loss(p, y) -> float:
    """Mean binary cross entropy -(y ln p + (1-y) ln(1-p)).

    p must lie in [0, 1]; upstream sigmoid clamping keeps the result finite.
    """
    pa = np.atleast_1d(_as_f64(p))
    ya = np.atleast_1d(_as_f64(y))
    if pa.shape != ya.shape:
        raise ShapeError(f"probability/label shape mismatch: {pa.shape} vs {ya.shape}")
    if np.any(pa < 0.0) or np.any(pa > 1.0):
        raise DomainError("probabilities outside [0, 1]")
    return kernels.bce_mean(pa, ya)


def bce_grad(p, y) -> np.ndarray:
    return kernels.bce_grad_mean(np.atleast_1d(_as_f64(p)), np.atleast_1d(_as_f64(y)))


class AttentionUnit:
    """Soft selection between two token vectors of equal width.

    Both tokens are projected to query/key/value; the mean of the two queries
    attends over the two keys (scaled dot product) and the output is the
    attention-weighted blend of the two values. With only two tokens this is
    a learned soft gate deciding how much transferred information to mix in.
    Weights are nonnegative and sum to one on every call.
    """

    kind = "dot"

    def __init__(self, d_att: int, d_tok: int, rng: np.random.Generator | None = None):
        self.query_proj = DenseLayer(d_att, d_tok, rng)
        self.key_proj = DenseLayer(d_att, d_tok, rng)
        self.value_proj = DenseLayer(d_att, d_tok, rng)
        # A shared shift of both keys cancels in the two-token softmax, so the
        # key bias can never affect the output; pin it at zero and leave it
        # out of the trainable set.
        self.key_proj.bias[...] = 0.0
        self.d_att = d_att
        self.d_tok = d_tok
        self._cache = None
        self.last_weights: np.ndarray | None = None  # (B, 2), diagnostics

    def forward(self, tok_a, tok_b, cache: bool = True) -> np.ndarray:
        a, a_vec = _as_batch(tok_a)
        b, b_vec = _as_batch(tok_b)
        if a.shape != b.shape:
            raise ShapeError(f"token shapes differ: {a.shape} vs {b.shape}")
        if a.shape[1] != self.d_tok:
            raise ShapeError(f"attention expects token width {self.d_tok}, got {a.shape[1]}")
        qa = self.query_proj.forward(a, cache=False)
        qb = self.query_proj.forward(b, cache=False)
        ka = self.key_proj.forward(a, cache=False)
        kb = self.key_proj.forward(b, cache=False)
        va = self.value_proj.forward(a, cache=False)
        vb = self.value_proj.forward(b, cache=False)
        qm = 0.5 * (qa + qb)
        scale = 1.0 / math.sqrt(self.d_att)
        sa = np.sum(qm * ka, axis=1) * scale
        sb = np.sum(qm * kb, axis=1) * scale
        hi = np.maximum(sa, sb)
        ea = np.exp(sa - hi)
        eb = np.exp(sb - hi)
        z = ea + eb
        wa = ea / z
        wb = eb / z
        y = wa[:, None] * va + wb[:, None] * vb
        self.last_weights = np.stack([wa, wb], axis=1)
        if cache:
            self._cache = (a, b, ka, kb, va, vb, qm, wa, wb)
        return y[0] if (a_vec and b_vec) else y

    def backward(self, gy) -> tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            raise StateError("attention backward called before forward")
        a, b, ka, kb, va, vb, qm, wa, wb = self._cache
        gy2d, _ = _as_batch(gy)
        scale = 1.0 / math.sqrt(self.d_att)

        gwa = np.sum(gy2d * va, axis=1)
        gwb = np.sum(gy2d * vb, axis=1)
        gva = wa[:, None] * gy2d
        gvb = wb[:, None] * gy2d
        # softmax over the two scores
        dot = wa * gwa + wb * gwb
        gsa = wa * (gwa - dot)
        gsb = wb * (gwb - dot)
        gqm = (gsa[:, None] * ka + gsb[:, None] * kb) * scale
        gka = gsa[:, None] * qm * scale
        gkb = gsb[:, None] * qm * scale
        gqa = 0.5 * gqm
        gqb = 0.5 * gqm

        ga = self.query_proj.backward_from(a, gqa)
        gb_ = self.query_proj.backward_from(b, gqb)
        ga += self.key_proj.backward_from(a, gka)
        gb_ += self.key_proj.backward_from(b, gkb)
        ga += self.value_proj.backward_from(a, gva)
        gb_ += self.value_proj.backward_from(b, gvb)
        return ga, gb_

    def params(self, prefix: str = "att") -> list[Param]:
        key_weight = Param(
            f"{prefix}.key.weight", self.key_proj.weight, self.key_proj.weight_grad
        )
        return (
            self.query_proj.params(f"{prefix}.query")
            + [key_weight]
            + self.value_proj.params(f"{prefix}.value")
        )


class GateUnit:
    """Ablation alternative to AttentionUnit: a single learned scalar gate
    g = sigmoid(theta) blending the two value projections."""

    kind = "gate"

    def __init__(self, d_att: int, d_tok: int, rng: np.random.Generator | None = None):
        self.value_proj = DenseLayer(d_att, d_tok, rng)
        self.theta = np.zeros(1)
        self.theta_grad = np.zeros(1)
        self.d_att = d_att
        self.d_tok = d_tok
        self._cache = None
        self.last_weights: np.ndarray | None = None

    def forward(self, tok_a, tok_b, cache: bool = True) -> np.ndarray:
        a, a_vec = _as_batch(tok_a)
        b, b_vec = _as_batch(tok_b)
        if a.shape != b.shape:
            raise ShapeError(f"token shapes differ: {a.shape} vs {b.shape}")
        va = self.value_proj.forward(a, cache=False)
        vb = self.value_proj.forward(b, cache=False)
        g = 1.0 / (1.0 + math.exp(-self.theta[0]))
        y = g * va + (1.0 - g) * vb
        self.last_weights = np.full((a.shape[0], 2), (g, 1.0 - g))
        if cache:
            self._cache = (a, b, va, vb, g)
        return y[0] if (a_vec and b_vec) else y

    def backward(self, gy) -> tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            raise StateError("gate backward called before forward")
        a, b, va, vb, g = self._cache
        gy2d, _ = _as_batch(gy)
        self.theta_grad[0] += float(np.sum(gy2d * (va - vb)) * g * (1.0 - g))
        ga = self.value_proj.backward_from(a, g * gy2d)
        gb_ = self.value_proj.backward_from(b, (1.0 - g) * gy2d)
        return ga, gb_

    def params(self, prefix: str = "gate") -> list[Param]:
        return self.value_proj.params(f"{prefix}.value") + [
            Param(f"{prefix}.theta", self.theta, self.theta_grad)
        ]


class Tower:
    """Stack of (dense -> relu -> dropout) blocks, the per-task building block."""

    def __init__(self, dims: Sequence[int], drop_rate: float, rng: np.random.Generator | None = None):
        if len(dims) < 2:
            raise ShapeError("tower needs at least an input and an output width")
        if not 0.0 <= drop_rate < 1.0:
            raise DomainError(f"dropout rate must be in [0, 1), got {drop_rate}")
        self.layers = [DenseLayer(o, i, rng) for i, o in zip(dims[:-1], dims[1:])]
        self.drop_rate = drop_rate
        self._pre: list[np.ndarray] = []
        self._masks: list[np.ndarray | None] = []

    def forward(self, x, training: bool = False, rng=None, cache: bool = True) -> np.ndarray:
        h, was_vec = _as_batch(x)
        if cache:
            self._pre = []
            self._masks = []
        for layer in self.layers:
            z = layer.forward(h, cache=cache)
            if cache:
                self._pre.append(z)
            h = kernels.relu(z)
            if training and self.drop_rate > 0.0:
                keep = _as_generator(rng).random(h.shape) >= self.drop_rate
                mask = keep / (1.0 - self.drop_rate)
                h = h * mask
            else:
                mask = None
            if cache:
                self._masks.append(mask)
        return h[0] if was_vec else h

    def backward(self, gy) -> np.ndarray:
        if not self._pre:
            raise StateError("tower backward called before forward")
        g, _ = _as_batch(gy)
        for layer, z, mask in zip(reversed(self.layers), reversed(self._pre), reversed(self._masks)):
            if mask is not None:
                g = g * mask
            g = kernels.relu_backward(z, g)
            g = layer.backward(g)
        return g

    def params(self, prefix: str = "tower") -> list[Param]:
        out: list[Param] = []
        for i, layer in enumerate(self.layers):
            out += layer.params(f"{prefix}.{i}")
        return out


class AdamOptimizer:
    """Adaptive-moment optimizer, updating parameters in place.

    Holds per-parameter first/second moment accumulators and a strictly
    increasing step counter.
    """

    def __init__(self, params: Sequence[Param], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        for p in self.params:
            if p.value.shape != p.grad.shape:
                raise ShapeError(f"{p.name}: grad shape {p.grad.shape} != value shape {p.value.shape}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros(p.value.size) for p in self.params]
        self._v = [np.zeros(p.value.size) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        for p, m, v in zip(self.params, self._m, self._v):
            kernels.adam_step(
                p.value.reshape(-1), p.grad.reshape(-1), m, v,
                self.step_count, self.lr, self.beta1, self.beta2, self.eps,
            )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class SgdOptimizer:
    """Plain gradient descent, for ablations."""

    def __init__(self, params: Sequence[Param], lr: float = 1e-3):
        if lr <= 0.0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        for p in self.params:
            p.value -= self.lr * p.grad

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def grad_check(params: Sequence[Param], loss_fn: Callable[[], float], eps: float = 1e-5) -> float:
    """Max relative disagreement between stored analytic gradients and
    central finite differences (L(t+eps) - L(t-eps)) / 2 eps.

    loss_fn must be a deterministic pure forward of the same loss whose
    backward populated the gradients (dropout disabled). Relative error per
    entry is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError(f"grad_check eps must lie in [1e-7, 1e-3], got {eps}")
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            analytic = gflat[i]
            denom = max(1e-8, abs(analytic) + abs(numeric))
            err = abs(analytic - numeric) / denom
            if err > worst:
                worst = err
    return worst
