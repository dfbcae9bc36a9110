"""Reverse-mode automatic differentiation over dense numpy buffers.

Deliberately small: dense 1-D/2-D tensors, the op set needed for 2-3 layer
MLPs with Gumbel-softmax heads, and an analytic input-gradient expression
for piecewise-linear critics so that gradient-penalty terms can be
differentiated with respect to network parameters without generic
second-order support.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

# Uniform noise is clamped away from {0, 1} before the double log.
_GUMBEL_CLIP = 1e-12

_grad_enabled = True


class NonFiniteError(FloatingPointError):
    """Raised when an op or accumulated gradient produces NaN/Inf."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A value node in the computation graph.

    Leaf tensors are created directly; interior nodes are created by ops and
    carry a closure that routes the output gradient to their parents.
    """

    __slots__ = ("data", "grad", "_parents", "_backward", "op")

    def __init__(self, data, dtype=None, op: str = "leaf"):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype})"

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; divide by a scalar")
        return mul(self, _as_tensor(1.0 / other, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"op {op!r} produced a non-finite value")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _grad_enabled:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(root: Tensor) -> None:
    """Propagate d(root)/d(node) into .grad for every node reachable from root.

    Gradients accumulate, so callers reset leaf grads (zero_grads) between
    independent backward passes.
    """
    if root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def grad_of(t: Tensor) -> np.ndarray:
    """Gradient of a leaf after backward(); zeros when disconnected from the root."""
    return t.grad if t.grad is not None else np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(out, (a, b), bw, "sub")


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, -g)

    return _node(-a.data, (a,), bw, "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), bw, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(out, (a, b), bw, "matmul")


def transpose(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g.T)

    return _node(a.data.T, (a,), bw, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), bw, "reshape")


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    widths = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _node(out, tuple(parts), bw, "concat")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accum(a, full)

    return _node(a.data[:, start:stop].copy(), (a,), bw, "slice_cols")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _node(np.where(mask, a.data, 0), (a,), bw, "relu")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accum(a, g * np.where(mask, 1.0, slope).astype(a.data.dtype))

    return _node(np.where(mask, a.data, slope * a.data), (a,), bw, "leaky_relu")


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted for stability."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - dot))

    return _node(y, (a,), bw, "softmax")


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def bw(g):
        _accum(a, g - soft * g.sum(axis=-1, keepdims=True))

    return _node(out, (a,), bw, "log_softmax")


def mean(a: Tensor) -> Tensor:
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def bw(g):
        _accum(a, np.full_like(a.data, g / a.data.size))

    return _node(out, (a,), bw, "mean")


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accum(a, np.full_like(a.data, g))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(np.asarray(out), (a,), bw, "sum")


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def bw(g):
        _accum(a, g * sign)

    return _node(np.abs(a.data), (a,), bw, "abs")


def square(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g * 2 * a.data)

    return _node(a.data * a.data, (a,), bw, "square")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * 0.5 / out)

    return _node(out, (a,), bw, "sqrt")


# ---------------------------------------------------------------------------
# Gumbel-softmax


def sample_gumbel(shape, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
    u = np.clip(rng.random(shape), _GUMBEL_CLIP, 1.0 - _GUMBEL_CLIP)
    return (-np.log(-np.log(u))).astype(dtype)


def straight_through_onehot(soft: Tensor) -> Tensor:
    """One-hot argmax on the forward pass, identity gradient to the soft input."""
    hard = np.zeros_like(soft.data)
    hard[np.arange(soft.data.shape[0]), soft.data.argmax(axis=-1)] = 1.0

    def bw(g):
        _accum(soft, g)

    return _node(hard, (soft,), bw, "straight_through")


def gumbel_softmax_with_noise(logits: Tensor, noise: np.ndarray, tau: float, hard: bool = False) -> Tensor:
    """Gumbel-softmax with caller-supplied noise (so tests can pin it)."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    shifted = mul(add(logits, Tensor(noise, dtype=logits.dtype)), _as_tensor(1.0 / tau, logits.dtype))
    soft = softmax(shifted)
    return straight_through_onehot(soft) if hard else soft


def gumbel_softmax(logits: Tensor, tau: float, rng: np.random.Generator, hard: bool = False) -> Tensor:
    noise = sample_gumbel(logits.data.shape, rng, dtype=logits.dtype)
    return gumbel_softmax_with_noise(logits, noise, tau, hard)


# ---------------------------------------------------------------------------
# analytic input gradient for piecewise-linear MLPs


def input_gradient_mlp(hidden: Sequence[tuple[Tensor, Tensor, float]], out_w: Tensor, x: np.ndarray) -> Tensor:
    """Per-row input gradient of a scalar MLP, as a graph over its weights.

    `hidden` is a list of (W, b, leaky-slope) layers and `out_w` the final
    column of weights; the network is x -> lrelu(xW+b) ... -> h @ out_w + c.
    Activation masks are computed here on the forward pass and enter the
    expression as constants, so backward() through the result differentiates
    the gradient norm with respect to the weights with masks held fixed
    (exact almost everywhere for piecewise-linear activations).
    """
    masks = []
    a = np.asarray(x)
    for w, b, slope in hidden:
        z = a @ w.data + b.data
        masks.append(np.where(z > 0, 1.0, slope).astype(z.dtype))
        a = np.where(z > 0, z, slope * z)
    # row i of the result is W_1 (m_1 * (W_2 (m_2 * ... (m_L * out_w))))
    cur = mul(Tensor(masks[-1]), transpose(out_w))
    for (w, _, _), m in zip(reversed(hidden[1:]), reversed(masks[:-1])):
        cur = mul(matmul(cur, transpose(w)), Tensor(m))
    return matmul(cur, transpose(hidden[0][0]))


def row_norms(a: Tensor) -> Tensor:
    """Euclidean norm of each row."""
    return sqrt(tsum(square(a), axis=1))


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction over an explicit parameter list.

    Defaults follow common WGAN-GP practice (beta1=0.5, beta2=0.9). step()
    consumes and clears .grad; a parameter with no grad is treated as zero.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.5,
                 beta2: float = 0.9, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def reset_moments(self) -> None:
        self.step_count = 0
        for m, v in zip(self.m, self.v):
            m[:] = 0
            v[:] = 0

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = grad_of(p)
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient in Adam step")
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m[:] = self.beta1 * m + (1 - self.beta1) * g
            v[:] = self.beta2 * v + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
            p.grad = None
