"""Reverse-mode automatic differentiation over numpy arrays.

A dynamically built tape: every operation records its parents and a closure
producing parent gradients, and `backward` walks the graph in reverse
topological order. Only the handful of operations the trajectory generator
needs are implemented; each one's gradient is pinned against central finite
differences in the test suite.

All math is float64. The attention contraction dispatches to the compiled
kernel (or its numpy fallback) via :mod:`opentactics.kernels`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels


class Tensor:
    """A node on the tape: value, gradient slot, and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward_fn: Callable | None = None,
                 name: str = ""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, name={self.name!r})"

    # Arithmetic sugar. Python scalars go through shift/scale so float32
    # tensors are not upcast; arrays are wrapped as constants.
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, float(other))
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -float(other))
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return shift(neg(self), float(other))
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data, parents, backward_fn, name="") -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents=parents, backward_fn=backward_fn, name=name)
    return Tensor(data, name=name)


# ---------------------------------------------------------------------------
# Elementwise and structural ops

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)
    return _make(out, (a, b), bw, "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))
    return _make(out, (a, b), bw, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)  # numpy scalars would upcast float32 data
    return _make(a.data * s, (a,), lambda g: (g * s,), "scale")


def shift(a: Tensor, c: float) -> Tensor:
    return _make(a.data + float(c), (a,), lambda g: (g,), "shift")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,),
                 lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)
    return _make(out, (a,), bw, "softmax")


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    return _make(a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(orig),), "reshape")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _make(np.swapaxes(a.data, ax1, ax2), (a,),
                 lambda g: (np.swapaxes(g, ax1, ax2),), "swapaxes")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))
    return _make(out, tuple(tensors), bw, "concat")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, shape).copy(),)
    return _make(out, (a,), bw, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[..., k] @ w[k, n] (+ b[n]): the shared-weight projection."""
    k = x.data.shape[-1]
    x2d = x.data.reshape(-1, k)
    out2d = x2d @ w.data
    out = out2d.reshape(x.data.shape[:-1] + (w.data.shape[1],))
    if b is not None:
        out = out + b.data

    def bw(g):
        g2d = g.reshape(-1, w.data.shape[1])
        gx = (g2d @ w.data.T).reshape(x.data.shape)
        gw = x2d.T @ g2d
        if b is None:
            return gx, gw
        return gx, gw, g2d.sum(axis=0)
    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bw, "dense")


def dense_bcast(x: Tensor, w: Tensor, e: Tensor) -> Tensor:
    """x[..., k] @ w[k, n] + e, with e broadcast (the node-constant term)."""
    k = x.data.shape[-1]
    x2d = x.data.reshape(-1, k)
    out = (x2d @ w.data).reshape(x.data.shape[:-1] + (w.data.shape[1],))
    np.add(out, e.data, out=out)

    def bw(g):
        g2d = g.reshape(-1, w.data.shape[1])
        gx = (g2d @ w.data.T).reshape(x.data.shape)
        gw = x2d.T @ g2d
        return gx, gw, _unbroadcast(g, e.data.shape)
    return _make(out, (x, w, e), bw, "dense_bcast")


def gated_mix(gate_pre: Tensor, a: Tensor, b: Tensor) -> Tensor:
    """sigmoid(gate_pre) * a + (1 - sigmoid(gate_pre)) * b, fused."""
    out, g = kernels.gate_forward(gate_pre.data, a.data, b.data)

    def bw(grad):
        return kernels.gate_backward(grad, g, a.data, b.data)
    return _make(out, (gate_pre, a, b), bw, "gated_mix")


def multihead_attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
                        over_time: bool, scale_factor: float,
                        apply_relu: bool = True
                        ) -> tuple[Tensor, np.ndarray]:
    """Fused multi-head attention over [N, T, V, D] pre-activations.

    ReLU is applied to q/k/v inside the kernel (the projection activation);
    attention runs over the node axis, or the time axis when over_time.
    Returns the output tensor plus the detached attention probabilities.
    """
    y, p = kernels.mha_forward(q.data, k.data, v.data, heads, over_time,
                               scale_factor, apply_relu)

    def bw(g):
        return kernels.mha_backward(g, q.data, k.data, v.data, p, heads,
                                    over_time, scale_factor, apply_relu)
    return _make(y, (q, k, v), bw, "mha"), p


# ---------------------------------------------------------------------------
# Backward pass

def backward(loss: Tensor):
    """Populate `.grad` on every reachable tensor that requires a gradient.

    Gradients are overwritten, not accumulated across calls.
    """
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    owned: set[int] = set()  # buffers we may accumulate into in place
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            pid = id(p)
            if pid in grads:
                if pid in owned:
                    np.add(grads[pid], pg, out=grads[pid])
                else:
                    grads[pid] = grads[pid] + pg
                    owned.add(pid)
            else:
                grads[pid] = pg


# ---------------------------------------------------------------------------
# Finite-difference checking (the independent gradient oracle)

def numerical_gradient(loss_fn: Callable[[], Tensor], param: Tensor,
                       eps: float = 1e-5,
                       indices: Sequence[tuple] | None = None) -> np.ndarray:
    """Central finite differences of loss_fn w.r.t. param, element-wise.

    `indices` restricts the probe to a subset of elements (gradient entries
    elsewhere are returned as nan).
    """
    flat = param.data.reshape(-1)
    grad = np.full(flat.shape, np.nan)
    if indices is None:
        probe = range(flat.size)
    else:
        probe = [np.ravel_multi_index(ix, param.data.shape) for ix in indices]
    for i in probe:
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(loss_fn().data)
        flat[i] = orig - eps
        f_minus = float(loss_fn().data)
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad.reshape(param.data.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-8) -> float:
    """Worst-case |a - n| / max(|a|, |n|, floor) over probed entries."""
    mask = ~np.isnan(numeric)
    a = analytic[mask]
    n = numeric[mask]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
