"""Pure-numpy implementations of the hot kernels.

Drop-in twins of the compiled versions in ``_kernels.pyx``; the backend
module picks one set at import time. All functions are deterministic.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "numpy"


def im2col(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Gather sliding k x k patches of a padded NHWC tensor.

    Returns (N*Ho*Wo, k*k*C) with patch layout (kh, kw, c), row-major over
    (n, ho, wo) — the layout expected by the conv GEMM.
    """
    n, hp, wp, c = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    v = sliding_window_view(xp, (k, k), axis=(1, 2))  # (N, hp-k+1, wp-k+1, C, k, k)
    v = v[:, :: stride, :: stride][:, :ho, :wo]
    cols = np.ascontiguousarray(v.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(n * ho * wo, k * k * c)


def col2im(cols: np.ndarray, xp_shape, k: int, stride: int) -> np.ndarray:
    """Scatter-add patch columns back onto the padded input grid.

    Exact adjoint of :func:`im2col` for the same (k, stride).
    """
    n, hp, wp, c = xp_shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros(xp_shape, dtype=cols.dtype)
    cols6 = cols.reshape(n, ho, wo, k, k, c)
    for i in range(k):
        hi = i + (ho - 1) * stride + 1
        for j in range(k):
            wj = j + (wo - 1) * stride + 1
            out[:, i:hi:stride, j:wj:stride, :] += cols6[:, :, :, i, j, :]
    return out


def adam_step_inplace(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    bias1: float,
    bias2: float,
    weight_decay: float,
) -> None:
    """Fused Adam update; mutates param, m, v in place.

    bias1/bias2 are the step-dependent corrections 1 - beta^t, computed by
    the caller so the kernel stays stateless. Intermediates are float64 and
    stores round once, so results are bit-identical to the compiled kernel.
    """
    g = grad.astype(np.float64)
    if weight_decay != 0.0:
        g = g + weight_decay * param.astype(np.float64)
    mi = beta1 * m.astype(np.float64) + (1.0 - beta1) * g
    vi = beta2 * v.astype(np.float64) + (1.0 - beta2) * g * g
    m[...] = mi
    v[...] = vi
    param -= (lr * (mi / bias1) / (np.sqrt(vi / bias2) + eps)).astype(param.dtype)


def scatter_add_rows(table_grad: np.ndarray, indices: np.ndarray, rows: np.ndarray) -> None:
    """table_grad[indices[i]] += rows[i], accumulated in index order."""
    np.add.at(table_grad, indices, rows)
