# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
# cython: initializedcheck=False
"""Fused kernels: multi-head scaled-dot-product attention and gate mixing.

Attention layout [N, B, L, h, hd]: N x B batch slices, attention over L per
head. Spatial attention passes the natural view of [N, T, V, D] (B=T, L=V);
temporal attention passes a transposed view (B=V, L=T). Views may be
transposed in the outer axes but must keep the head axis stride-1 (asserted
in kernels.py); per-slice rows are staged through contiguous scratch
buffers, applying the ReLU projection activation on load, so the hot loops
run on raw pointers. Kernels are specialized for float32 and float64.
"""

import numpy as np

cimport cython
from libc.math cimport exp, expf
from libc.stdlib cimport free, malloc

ctypedef fused real_t:
    float
    double


cdef inline real_t _act(real_t x, bint apply_relu) nogil:
    if apply_relu and x < 0.0:
        return 0.0
    return x


def mha_forward(real_t[:, :, :, :, :] q, real_t[:, :, :, :, :] k,
                real_t[:, :, :, :, :] v, real_t[:, :, :, :, :] out,
                real_t[:, :, :, :, :] p, double scale, bint apply_relu):
    """out = softmax(relu(q) relu(k)^T * scale) relu(v); p saves the softmax.

    q: [N, B, Lq, H, hd]; k, v: [N, B, Lk, H, hd]; out like q;
    p: [N, B, H, Lq, Lk] (contiguous).
    """
    cdef Py_ssize_t N = q.shape[0], B = q.shape[1], Lq = q.shape[2]
    cdef Py_ssize_t H = q.shape[3], hd = q.shape[4], Lk = k.shape[2]
    cdef real_t *qb = <real_t *> malloc(Lq * hd * sizeof(real_t))
    cdef real_t *kb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *vb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *row = <real_t *> malloc(Lk * sizeof(real_t))
    if qb == NULL or kb == NULL or vb == NULL or row == NULL:
        free(qb); free(kb); free(vb); free(row)
        raise MemoryError()
    cdef Py_ssize_t n, b, h, i, j, d
    cdef real_t acc, m, z, sc = <real_t> scale
    cdef real_t *src
    cdef real_t *dst
    cdef real_t *prow
    try:
        for n in range(N):
            for b in range(B):
                for h in range(H):
                    for i in range(Lq):
                        src = &q[n, b, i, h, 0]
                        for d in range(hd):
                            qb[i * hd + d] = _act(src[d], apply_relu)
                    for j in range(Lk):
                        src = &k[n, b, j, h, 0]
                        for d in range(hd):
                            kb[j * hd + d] = _act(src[d], apply_relu)
                        src = &v[n, b, j, h, 0]
                        for d in range(hd):
                            vb[j * hd + d] = _act(src[d], apply_relu)
                    for i in range(Lq):
                        m = -1e30 if real_t is float else -1e300
                        for j in range(Lk):
                            acc = 0.0
                            for d in range(hd):
                                acc += qb[i * hd + d] * kb[j * hd + d]
                            row[j] = acc * sc
                            if row[j] > m:
                                m = row[j]
                        z = 0.0
                        # branch resolves per specialization; keeps the exp
                        # loop a direct call gcc can vectorize via libmvec
                        if real_t is float:
                            for j in range(Lk):
                                row[j] = expf(row[j] - m)
                                z += row[j]
                        else:
                            for j in range(Lk):
                                row[j] = exp(row[j] - m)
                                z += row[j]
                        prow = &p[n, b, h, i, 0]
                        for j in range(Lk):
                            row[j] /= z
                            prow[j] = row[j]
                        dst = &out[n, b, i, h, 0]
                        for d in range(hd):
                            acc = 0.0
                            for j in range(Lk):
                                acc += row[j] * vb[j * hd + d]
                            dst[d] = acc
    finally:
        free(qb); free(kb); free(vb); free(row)


def mha_backward(real_t[:, :, :, :, :] gy, real_t[:, :, :, :, :] q,
                 real_t[:, :, :, :, :] k, real_t[:, :, :, :, :] v,
                 real_t[:, :, :, :, :] p, real_t[:, :, :, :, :] gq,
                 real_t[:, :, :, :, :] gk, real_t[:, :, :, :, :] gv,
                 double scale, bint apply_relu):
    """Gradients w.r.t. the pre-activation q, k, v (ReLU mask applied)."""
    cdef Py_ssize_t N = q.shape[0], B = q.shape[1], Lq = q.shape[2]
    cdef Py_ssize_t H = q.shape[3], hd = q.shape[4], Lk = k.shape[2]
    cdef real_t *qb = <real_t *> malloc(Lq * hd * sizeof(real_t))
    cdef real_t *kb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *vb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *gyb = <real_t *> malloc(Lq * hd * sizeof(real_t))
    cdef real_t *gqb = <real_t *> malloc(Lq * hd * sizeof(real_t))
    cdef real_t *gkb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *gvb = <real_t *> malloc(Lk * hd * sizeof(real_t))
    cdef real_t *gprow = <real_t *> malloc(Lk * sizeof(real_t))
    if (qb == NULL or kb == NULL or vb == NULL or gyb == NULL or gqb == NULL
            or gkb == NULL or gvb == NULL or gprow == NULL):
        free(qb); free(kb); free(vb); free(gyb)
        free(gqb); free(gkb); free(gvb); free(gprow)
        raise MemoryError()
    cdef Py_ssize_t n, b, h, i, j, d
    cdef real_t acc, dot, gs, pij, sc = <real_t> scale
    cdef real_t *src
    cdef real_t *dst
    cdef real_t *prow
    try:
        for n in range(N):
            for b in range(B):
                for h in range(H):
                    for i in range(Lq):
                        src = &q[n, b, i, h, 0]
                        for d in range(hd):
                            qb[i * hd + d] = _act(src[d], apply_relu)
                            gqb[i * hd + d] = 0.0
                        src = &gy[n, b, i, h, 0]
                        for d in range(hd):
                            gyb[i * hd + d] = src[d]
                    for j in range(Lk):
                        src = &k[n, b, j, h, 0]
                        for d in range(hd):
                            kb[j * hd + d] = _act(src[d], apply_relu)
                            gkb[j * hd + d] = 0.0
                        src = &v[n, b, j, h, 0]
                        for d in range(hd):
                            vb[j * hd + d] = _act(src[d], apply_relu)
                            gvb[j * hd + d] = 0.0
                    for i in range(Lq):
                        prow = &p[n, b, h, i, 0]
                        dot = 0.0
                        for j in range(Lk):
                            acc = 0.0
                            for d in range(hd):
                                acc += gyb[i * hd + d] * vb[j * hd + d]
                            gprow[j] = acc
                            dot += acc * prow[j]
                        for j in range(Lk):
                            pij = prow[j]
                            gs = pij * (gprow[j] - dot) * sc
                            for d in range(hd):
                                gqb[i * hd + d] += gs * kb[j * hd + d]
                                gkb[j * hd + d] += gs * qb[i * hd + d]
                                gvb[j * hd + d] += pij * gyb[i * hd + d]
                    for i in range(Lq):
                        src = &q[n, b, i, h, 0]
                        dst = &gq[n, b, i, h, 0]
                        for d in range(hd):
                            if apply_relu and src[d] <= 0.0:
                                dst[d] = 0.0
                            else:
                                dst[d] = gqb[i * hd + d]
                    for j in range(Lk):
                        src = &k[n, b, j, h, 0]
                        dst = &gk[n, b, j, h, 0]
                        for d in range(hd):
                            if apply_relu and src[d] <= 0.0:
                                dst[d] = 0.0
                            else:
                                dst[d] = gkb[j * hd + d]
                        src = &v[n, b, j, h, 0]
                        dst = &gv[n, b, j, h, 0]
                        for d in range(hd):
                            if apply_relu and src[d] <= 0.0:
                                dst[d] = 0.0
                            else:
                                dst[d] = gvb[j * hd + d]
    finally:
        free(qb); free(kb); free(vb); free(gyb)
        free(gqb); free(gkb); free(gvb); free(gprow)


def gate_forward(real_t[::1] gate_pre, real_t[::1] a, real_t[::1] b,
                 real_t[::1] g_out, real_t[::1] out):
    """out = g * a + (1 - g) * b with g = sigmoid(gate_pre), one pass."""
    cdef Py_ssize_t n = gate_pre.shape[0], i
    cdef real_t g
    if real_t is float:
        for i in range(n):
            g = <real_t> 1.0 / (<real_t> 1.0 + expf(-gate_pre[i]))
            g_out[i] = g
            out[i] = g * a[i] + (<real_t> 1.0 - g) * b[i]
    else:
        for i in range(n):
            g = 1.0 / (1.0 + exp(-gate_pre[i]))
            g_out[i] = g
            out[i] = g * a[i] + (1.0 - g) * b[i]


def gate_backward(real_t[::1] grad, real_t[::1] g, real_t[::1] a,
                  real_t[::1] b, real_t[::1] g_gate, real_t[::1] g_a,
                  real_t[::1] g_b):
    """Gradients of the fused gate mix w.r.t. (gate_pre, a, b)."""
    cdef Py_ssize_t n = grad.shape[0], i
    cdef real_t gi, gr
    for i in range(n):
        gi = g[i]
        gr = grad[i]
        g_gate[i] = gr * gi * (<real_t> 1.0 - gi) * (a[i] - b[i])
        g_a[i] = gr * gi
        g_b[i] = gr * (<real_t> 1.0 - gi)
