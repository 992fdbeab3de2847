"""Multi-head attention backends: compiled extension with numpy fallback.

Both backends compute, over [N, T, V, D] activations,

    out = softmax(relu(q) relu(k)^T * scale) relu(v)

per head, attending over the node axis (spatial) or the time axis per node
(temporal). The compiled path reads natural strided views with zero copies
and fuses the ReLU, scores, softmax, and value contraction into one pass;
the numpy path spells the same math out with transposes and batched matmuls.
Results agree to a few ulp.

Selection happens at call time; set OPENTACTICS_FORCE_NUMPY=1 to ignore the
extension (tests and the benchmark use this).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _attention_core as _ext
except ImportError:  # pure-Python install
    _ext = None

_FORCE_NUMPY = bool(os.environ.get("OPENTACTICS_FORCE_NUMPY"))


def backend_name() -> str:
    return "numpy" if (_ext is None or _FORCE_NUMPY) else "compiled"


def _views(arr: np.ndarray, heads: int, over_time: bool) -> np.ndarray:
    """5D kernel view [N, B, L, h, hd] of an [N, T, V, D] array (no copy).

    The kernel walks rows via raw pointers, so the head axis must be
    stride-1; reshape/transpose of a C-contiguous array preserves that.
    """
    n, t, v, d = arr.shape
    five = arr.reshape(n, t, v, heads, d // heads)
    if over_time:
        five = five.transpose(0, 2, 1, 3, 4)   # [N, V, T, h, hd]
    assert five.strides[-1] == five.itemsize
    return five


def _p_shape(q: np.ndarray, k: np.ndarray, heads: int,
             over_time: bool) -> tuple:
    n, tq, v, _ = q.shape
    tk = k.shape[1]
    if over_time:
        return (n, v, heads, tq, tk)
    return (n, tq, heads, v, v)


# -- numpy fallback ---------------------------------------------------------

def _np_stacks(arr, heads, over_time):
    n, t, v, d = arr.shape
    hd = d // heads
    five = arr.reshape(n, t, v, heads, hd)
    if over_time:
        return np.ascontiguousarray(five.transpose(0, 2, 3, 1, 4))  # [N,V,h,T,hd]
    return np.ascontiguousarray(five.transpose(0, 1, 3, 2, 4))      # [N,T,h,V,hd]


def _np_unstack(stacks, heads, over_time, out_shape):
    n, tq, v, d = out_shape
    hd = d // heads
    if over_time:
        five = stacks.reshape(n, v, heads, tq, hd).transpose(0, 3, 1, 2, 4)
    else:
        five = stacks.reshape(n, tq, heads, v, hd).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(five).reshape(out_shape)


def _np_mha_forward(q, k, v, heads, over_time, scale, apply_relu):
    if apply_relu:
        q, k, v = np.maximum(q, 0), np.maximum(k, 0), np.maximum(v, 0)
    qs = _np_stacks(q, heads, over_time)
    ks = _np_stacks(k, heads, over_time)
    vs = _np_stacks(v, heads, over_time)
    s = (qs @ ks.swapaxes(-1, -2)) * scale
    s -= s.max(-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(-1, keepdims=True)
    y = _np_unstack(p @ vs, heads, over_time, q.shape)
    return y, p


def _np_mha_backward(gy, q, k, v, p, heads, over_time, scale, apply_relu):
    if apply_relu:
        qa, ka, va = np.maximum(q, 0), np.maximum(k, 0), np.maximum(v, 0)
    else:
        qa, ka, va = q, k, v
    qs = _np_stacks(qa, heads, over_time)
    ks = _np_stacks(ka, heads, over_time)
    vs = _np_stacks(va, heads, over_time)
    gys = _np_stacks(gy, heads, over_time)
    gvs = p.swapaxes(-1, -2) @ gys
    gp = gys @ vs.swapaxes(-1, -2)
    gs = p * (gp - (gp * p).sum(-1, keepdims=True))
    gqs = (gs @ ks) * scale
    gks = (gs.swapaxes(-1, -2) @ qs) * scale
    gq = _np_unstack(gqs, heads, over_time, q.shape)
    gk = _np_unstack(gks, heads, over_time, k.shape)
    gv = _np_unstack(gvs, heads, over_time, v.shape)
    if apply_relu:
        gq *= q > 0
        gk *= k > 0
        gv *= v > 0
    return gq, gk, gv


def _np_gate_forward(gate_pre, a, b):
    g = 1.0 / (1.0 + np.exp(-gate_pre))
    return g * a + (1.0 - g) * b, g


def _np_gate_backward(grad, g, a, b):
    return grad * g * (1.0 - g) * (a - b), grad * g, grad * (1.0 - g)


def gate_forward(gate_pre: np.ndarray, a: np.ndarray, b: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """sigmoid-gated mix of a and b; returns (out, gate values)."""
    if _ext is None or _FORCE_NUMPY:
        return _np_gate_forward(gate_pre, a, b)
    out = np.empty_like(a)
    g = np.empty_like(a)
    _ext.gate_forward(np.ascontiguousarray(gate_pre).reshape(-1), a.reshape(-1),
                      b.reshape(-1), g.reshape(-1), out.reshape(-1))
    return out, g


def gate_backward(grad, g, a, b):
    if _ext is None or _FORCE_NUMPY:
        return _np_gate_backward(grad, g, a, b)
    grad = np.ascontiguousarray(grad)
    g_gate = np.empty_like(a)
    g_a = np.empty_like(a)
    g_b = np.empty_like(a)
    _ext.gate_backward(grad.reshape(-1), g.reshape(-1), a.reshape(-1),
                       b.reshape(-1), g_gate.reshape(-1), g_a.reshape(-1),
                       g_b.reshape(-1))
    return g_gate, g_a, g_b


# -- public dispatch --------------------------------------------------------

def mha_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int,
                over_time: bool, scale: float, apply_relu: bool = True
                ) -> tuple[np.ndarray, np.ndarray]:
    """Returns (out [N, Tq, V, D], p): p is [N, T, h, V, V] for spatial
    attention and [N, V, h, Tq, Tk] for temporal."""
    if _ext is None or _FORCE_NUMPY:
        return _np_mha_forward(q, k, v, heads, over_time, scale, apply_relu)
    out = np.empty_like(q)
    p = np.empty(_p_shape(q, k, heads, over_time), dtype=q.dtype)
    _ext.mha_forward(_views(q, heads, over_time), _views(k, heads, over_time),
                     _views(v, heads, over_time),
                     _views(out, heads, over_time), p, float(scale),
                     apply_relu)
    return out, p


def mha_backward(gy, q, k, v, p, heads, over_time, scale,
                 apply_relu: bool = True):
    if _ext is None or _FORCE_NUMPY:
        return _np_mha_backward(gy, q, k, v, p, heads, over_time, scale,
                                apply_relu)
    gy = np.ascontiguousarray(gy)
    gq = np.empty_like(q)
    gk = np.empty_like(k)
    gv = np.empty_like(v)
    _ext.mha_backward(_views(gy, heads, over_time),
                      _views(q, heads, over_time),
                      _views(k, heads, over_time),
                      _views(v, heads, over_time), p,
                      _views(gq, heads, over_time),
                      _views(gk, heads, over_time),
                      _views(gv, heads, over_time), float(scale), apply_relu)
    return gq, gk, gv
