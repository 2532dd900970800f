"""Pure-numpy reference implementations of the hot kernels.

Semantics must match ``_numba`` exactly; these are also the ground truth the
benchmark compares against.
"""

import numpy as np


def bm_gather(feats, idx0, idx1, w0, w1, valid):
    # feats (C, T) -> (C, N, D, T); invalid cells stay zero.
    out = feats[:, idx0] * w0 + feats[:, idx1] * w1
    out[:, :, ~valid] = 0.0
    return out


def bm_scatter(dmap, idx0, idx1, w0, w1, valid, t_len):
    c = dmap.shape[0]
    ds_t_c = np.zeros((t_len, c), dtype=dmap.dtype)
    vw0 = np.where(valid[None], w0, 0.0)
    vw1 = np.where(valid[None], w1, 0.0)
    vals = dmap.reshape(c, -1).T
    np.add.at(ds_t_c, idx0.ravel(), vals * vw0.ravel()[:, None])
    np.add.at(ds_t_c, idx1.ravel(), vals * vw1.ravel()[:, None])
    return np.ascontiguousarray(ds_t_c.T)


def reduce_gather(ut, idx0, idx1, w0, w1, valid):
    # ut carries the projected features as (T, N, O).
    t_len, n_samples, out_dim = ut.shape
    dur, length = valid.shape
    out = np.zeros((dur * length, out_dim), dtype=ut.dtype)
    vw0 = np.where(valid[None], w0, 0.0)
    vw1 = np.where(valid[None], w1, 0.0)
    for n in range(n_samples):
        out += ut[idx0[n].ravel(), n] * vw0[n].reshape(-1, 1)
        out += ut[idx1[n].ravel(), n] * vw1[n].reshape(-1, 1)
    return out


def reduce_scatter(dcells, idx0, idx1, w0, w1, valid, t_len):
    n_samples = idx0.shape[0]
    out_dim = dcells.shape[1]
    dut = np.zeros((t_len, n_samples, out_dim), dtype=dcells.dtype)
    vw0 = np.where(valid[None], w0, 0.0)
    vw1 = np.where(valid[None], w1, 0.0)
    for n in range(n_samples):
        np.add.at(dut[:, n], idx0[n].ravel(), dcells * vw0[n].reshape(-1, 1))
        np.add.at(dut[:, n], idx1[n].ravel(), dcells * vw1[n].reshape(-1, 1))
    return dut


def im2col2d(xp, kh, kw, h, w):
    c_dim = xp.shape[0]
    cols = np.empty((c_dim, kh * kw, h * w), dtype=xp.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, u * kw + v] = xp[:, u:u + h, v:v + w].reshape(c_dim, -1)
    return cols


def col2im2d(g, kh, kw, h, w):
    c_dim = g.shape[0]
    dxp = np.zeros((c_dim, h + kh - 1, w + kw - 1), dtype=g.dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, u:u + h, v:v + w] += g[:, u * kw + v].reshape(c_dim, h, w)
    return dxp
