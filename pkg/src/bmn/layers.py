"""Convolution layers with hand-written backward passes.

All convolutions are stride-1 cross-correlations with zero padding that
preserves the spatial extent (kernel k pads k//2). Forward functions return
the pre-activation output plus whatever the backward pass needs; activation
functions are applied by the caller.

``fused_reduce_*`` combine the sampling-mask contraction with the
sample-axis reduction convolution without materializing the (C, N, D, T)
intermediate; they must stay numerically equivalent to
``bm_forward`` + ``conv3d_sample_reduce``.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError
from .mask import SampleMask


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, x.dtype.type(0))


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _im2col1d(x: np.ndarray, k: int) -> np.ndarray:
    c, t = x.shape
    pad = k // 2
    xp = np.zeros((c, t + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + t] = x
    cols = np.empty((c, k, t), dtype=x.dtype)
    for off in range(k):
        cols[:, off] = xp[:, off:off + t]
    return cols.reshape(c * k, t)


def conv1d_forward(x, weight, bias):
    """Same-length 1-D convolution. Returns (y, cols) with cols cached."""
    out_c, in_c, k = weight.shape
    if x.shape[0] != in_c:
        raise ShapeError(f"conv1d expects {in_c} channels, got {x.shape[0]}")
    cols = _im2col1d(x, k)
    y = weight.reshape(out_c, -1) @ cols + bias[:, None]
    return y, cols


def conv1d_backward(dy, cols, weight):
    out_c, in_c, k = weight.shape
    t = dy.shape[1]
    pad = k // 2
    dw = (dy @ cols.T).reshape(weight.shape)
    db = dy.sum(axis=1)
    g = (weight.reshape(out_c, -1).T @ dy).reshape(in_c, k, t)
    dxp = np.zeros((in_c, t + 2 * pad), dtype=dy.dtype)
    for off in range(k):
        dxp[:, off:off + t] += g[:, off]
    return dxp[:, pad:pad + t], dw, db


def _im2col2d(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    c, h, w = x.shape
    if kh == 1 and kw == 1:
        return x.reshape(c, h * w)
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xp[:, ph:ph + h, pw:pw + w] = x
    return kernels.im2col2d(xp, kh, kw, h, w).reshape(c * kh * kw, h * w)


def conv2d_forward(x, weight, bias):
    """Extent-preserving 2-D convolution over a (C, D, T) grid."""
    out_c, in_c, kh, kw = weight.shape
    if x.shape[0] != in_c:
        raise ShapeError(f"conv2d expects {in_c} channels, got {x.shape[0]}")
    _, h, w = x.shape
    cols = _im2col2d(x, kh, kw)
    y = (weight.reshape(out_c, -1) @ cols).reshape(out_c, h, w)
    y += bias[:, None, None]
    return y, cols


def conv2d_backward(dy, cols, weight):
    out_c, in_c, kh, kw = weight.shape
    _, h, w = dy.shape
    dy_mat = dy.reshape(out_c, -1)
    dw = (dy_mat @ cols.T).reshape(weight.shape)
    db = dy_mat.sum(axis=1)
    g = weight.reshape(out_c, -1).T @ dy_mat
    if kh == 1 and kw == 1:
        return g.reshape(in_c, h, w), dw, db
    ph, pw = kh // 2, kw // 2
    dxp = kernels.col2im2d(g.reshape(in_c, kh * kw, h * w), kh, kw, h, w)
    return dxp[:, ph:ph + h, pw:pw + w], dw, db


def conv3d_sample_reduce(m, weight, bias):
    """Collapse the sample axis of a (C, N, D, T) map to (O, D, T) + relu.

    Per cell: out[:, i, j] = relu(W . vec(m[:, :, i, j]) + b).
    """
    out_c, in_c, n = weight.shape
    if m.ndim != 4 or m.shape[0] != in_c or m.shape[1] != n:
        raise ShapeError(
            f"expected map (C={in_c}, N={n}, D, T), got {m.shape}"
        )
    pre = np.tensordot(weight, m, axes=([1, 2], [0, 1]))
    pre += bias[:, None, None]
    return relu(pre)


def conv3d_sample_reduce_backward(dy, m, weight, y):
    """Backward for :func:`conv3d_sample_reduce` (y is its relu output)."""
    dpre = dy * (y > 0)
    dw = np.tensordot(dpre, m, axes=([1, 2], [2, 3]))
    db = dpre.sum(axis=(1, 2))
    dm = np.tensordot(weight, dpre, axes=(0, 0))
    return dm, dw, db


def fused_reduce_forward(feats, mask: SampleMask, weight, bias):
    """Sampling contraction fused with the sample-axis reduction.

    Returns (cells, w_no): the pre-relu reduced map cell-major of shape
    (D*T, O), plus the (N*O, C) reshaped weight the backward pass reuses.
    Equals ``conv3d_sample_reduce`` applied to ``bm_forward(feats, mask)``
    up to the deferred relu.
    """
    out_c, in_c, n = weight.shape
    if feats.shape[0] != in_c or feats.shape[1] != mask.length:
        raise ShapeError(
            f"expected features ({in_c}, {mask.length}), got {feats.shape}"
        )
    if n != mask.num_samples:
        raise ShapeError(
            f"weight spans {n} sample slots, mask has {mask.num_samples}"
        )
    idx0, idx1, w0, w1 = mask.taps(feats.dtype)
    w_no = np.ascontiguousarray(weight.transpose(2, 0, 1)).reshape(n * out_c, in_c)
    ut = (feats.T @ w_no.T).reshape(mask.length, n, out_c)
    cells = kernels.reduce_gather(ut, idx0, idx1, w0, w1, mask.valid)
    cells += bias[None, :]
    return cells, w_no


def fused_reduce_backward(dcells, feats, mask: SampleMask, w_no):
    """Backward for :func:`fused_reduce_forward`.

    ``dcells`` is the (D*T, O) gradient at the pre-relu output and ``w_no``
    the reshaped weight from the forward call; returns
    (dfeats, dweight, dbias) with dweight back in (O, C, N) layout.
    """
    n_out, in_c = w_no.shape
    n = mask.num_samples
    out_c = n_out // n
    idx0, idx1, w0, w1 = mask.taps(dcells.dtype)
    dut = kernels.reduce_scatter(
        dcells, idx0, idx1, w0, w1, mask.valid, mask.length
    )
    dut_mat = dut.reshape(mask.length, n_out)
    dw_no = dut_mat.T @ feats.T  # (N*O, C)
    dw = np.ascontiguousarray(
        dw_no.reshape(n, out_c, in_c).transpose(1, 2, 0)
    )
    dfeats = np.ascontiguousarray((dut_mat @ w_no).T)
    db = dcells.sum(axis=0)
    return dfeats, dw, db
