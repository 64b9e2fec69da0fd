# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: conv patch gather/scatter, fused Adam, scatter-add.

Twins of _kernels_np.py with identical signatures and semantics. Loops are
single-threaded so results are reproducible in deterministic mode.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef fused real:
    float
    double


def _im2col_impl(real[:, :, :, ::1] xp, int k, int stride, real[:, ::1] cols):
    cdef Py_ssize_t n = xp.shape[0]
    cdef Py_ssize_t hp = xp.shape[1]
    cdef Py_ssize_t wp = xp.shape[2]
    cdef Py_ssize_t c = xp.shape[3]
    cdef Py_ssize_t ho = (hp - k) // stride + 1
    cdef Py_ssize_t wo = (wp - k) // stride + 1
    cdef Py_ssize_t b, i, j, ki, kj, ch, row, col
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for ki in range(k):
                    for kj in range(k):
                        for ch in range(c):
                            cols[row, col] = xp[b, i * stride + ki, j * stride + kj, ch]
                            col += 1


def im2col(xp, int k, int stride):
    """Gather sliding k x k patches of a padded NHWC tensor -> (N*Ho*Wo, k*k*C)."""
    n, hp, wp, c = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    xp = np.ascontiguousarray(xp)
    cols = np.empty((n * ho * wo, k * k * c), dtype=xp.dtype)
    _im2col_impl(xp, k, stride, cols)
    return cols


def _col2im_impl(real[:, ::1] cols, int k, int stride, real[:, :, :, ::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t hp = out.shape[1]
    cdef Py_ssize_t wp = out.shape[2]
    cdef Py_ssize_t c = out.shape[3]
    cdef Py_ssize_t ho = (hp - k) // stride + 1
    cdef Py_ssize_t wo = (wp - k) // stride + 1
    # offsets-outer order: per output cell, contributions accumulate by
    # ascending (ki, kj), matching the pure-numpy twin bit for bit
    cdef Py_ssize_t b, i, j, ki, kj, ch, row, colbase
    for ki in range(k):
        for kj in range(k):
            colbase = (ki * k + kj) * c
            for b in range(n):
                for i in range(ho):
                    for j in range(wo):
                        row = (b * ho + i) * wo + j
                        for ch in range(c):
                            out[b, i * stride + ki, j * stride + kj, ch] += cols[row, colbase + ch]


def col2im(cols, xp_shape, int k, int stride):
    """Scatter-add patch columns back onto the padded input grid."""
    out = np.zeros(xp_shape, dtype=cols.dtype)
    cols = np.ascontiguousarray(cols)
    _col2im_impl(cols, k, stride, out)
    return out


def _adam_impl(real[::1] param, real[::1] grad, real[::1] m, real[::1] v,
               double lr, double beta1, double beta2, double eps,
               double bias1, double bias2, double weight_decay):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, mi, vi
    for i in range(n):
        g = grad[i]
        if weight_decay != 0.0:
            g += weight_decay * param[i]
        mi = beta1 * m[i] + (1.0 - beta1) * g
        vi = beta2 * v[i] + (1.0 - beta2) * g * g
        m[i] = <real> mi
        v[i] = <real> vi
        param[i] -= <real> (lr * (mi / bias1) / (sqrt(vi / bias2) + eps))


def adam_step_inplace(param, grad, m, v, double lr, double beta1, double beta2,
                      double eps, double bias1, double bias2, double weight_decay):
    """Fused Adam update; mutates param, m, v in place."""
    p = param.reshape(-1)
    g = np.ascontiguousarray(grad.reshape(-1))
    mf = m.reshape(-1)
    vf = v.reshape(-1)
    _adam_impl(p, g, mf, vf, lr, beta1, beta2, eps, bias1, bias2, weight_decay)


def _scatter_add_impl(real[:, ::1] table_grad, long long[::1] indices, real[:, ::1] rows):
    cdef Py_ssize_t i, j, n = indices.shape[0]
    cdef Py_ssize_t d = table_grad.shape[1]
    cdef Py_ssize_t idx
    for i in range(n):
        idx = <Py_ssize_t> indices[i]
        for j in range(d):
            table_grad[idx, j] += rows[i, j]


def scatter_add_rows(table_grad, indices, rows):
    """table_grad[indices[i]] += rows[i], accumulated in index order."""
    idx = np.ascontiguousarray(indices, dtype=np.int64)
    rows = np.ascontiguousarray(rows)
    _scatter_add_impl(table_grad, idx, rows)
