"""Numba ``@njit`` versions of the hot kernels.

Every ``prange`` loop owns a disjoint slice of the output, so no iteration
order depends on the thread count and results stay bit-identical run to run.
The gather/scatter kernels process channels in blocks of 16 so the tap
tables are streamed once per block instead of once per channel.
"""

import numpy as np
from numba import njit, prange

_BLOCK = 16


@njit(parallel=True, cache=True)
def bm_gather(feats, idx0, idx1, w0, w1, valid):
    c_dim, t_len = feats.shape
    n_samples, dur, length = idx0.shape
    out = np.zeros((c_dim, n_samples, dur, length), dtype=feats.dtype)
    n_blocks = (c_dim + _BLOCK - 1) // _BLOCK
    for blk in prange(n_blocks):
        c_lo = blk * _BLOCK
        c_hi = min(c_lo + _BLOCK, c_dim)
        for n in range(n_samples):
            for i in range(dur):
                for j in range(length):
                    if valid[i, j]:
                        t0 = idx0[n, i, j]
                        t1 = idx1[n, i, j]
                        a = w0[n, i, j]
                        b = w1[n, i, j]
                        for c in range(c_lo, c_hi):
                            out[c, n, i, j] = a * feats[c, t0] + b * feats[c, t1]
    return out


@njit(parallel=True, cache=True)
def bm_scatter(dmap, idx0, idx1, w0, w1, valid, t_len):
    c_dim = dmap.shape[0]
    n_samples, dur, length = idx0.shape
    ds = np.zeros((c_dim, t_len), dtype=dmap.dtype)
    n_blocks = (c_dim + _BLOCK - 1) // _BLOCK
    for blk in prange(n_blocks):
        c_lo = blk * _BLOCK
        c_hi = min(c_lo + _BLOCK, c_dim)
        for n in range(n_samples):
            for i in range(dur):
                for j in range(length):
                    if valid[i, j]:
                        t0 = idx0[n, i, j]
                        t1 = idx1[n, i, j]
                        a = w0[n, i, j]
                        b = w1[n, i, j]
                        for c in range(c_lo, c_hi):
                            g = dmap[c, n, i, j]
                            ds[c, t0] += a * g
                            ds[c, t1] += b * g
    return ds


@njit(parallel=True, cache=True)
def reduce_gather(ut, idx0, idx1, w0, w1, valid):
    # ut carries the projected features as (T, N, O).
    t_len, n_samples, out_dim = ut.shape
    dur, length = valid.shape
    out = np.zeros((dur * length, out_dim), dtype=ut.dtype)
    for cell in prange(dur * length):
        i = cell // length
        j = cell % length
        if not valid[i, j]:
            continue
        acc = out[cell]
        for n in range(n_samples):
            a = w0[n, i, j]
            b = w1[n, i, j]
            u0 = ut[idx0[n, i, j], n]
            u1 = ut[idx1[n, i, j], n]
            for o in range(out_dim):
                acc[o] += a * u0[o] + b * u1[o]
    return out


@njit(parallel=True, cache=True)
def reduce_scatter(dcells, idx0, idx1, w0, w1, valid, t_len):
    n_samples, dur, length = idx0.shape
    out_dim = dcells.shape[1]
    dut = np.zeros((t_len, n_samples, out_dim), dtype=dcells.dtype)
    for n in prange(n_samples):
        for i in range(dur):
            for j in range(length):
                if valid[i, j]:
                    g = dcells[i * length + j]
                    a = w0[n, i, j]
                    b = w1[n, i, j]
                    d0 = dut[idx0[n, i, j], n]
                    d1 = dut[idx1[n, i, j], n]
                    for o in range(out_dim):
                        d0[o] += a * g[o]
                        d1[o] += b * g[o]
    return dut


@njit(parallel=True, cache=True)
def im2col2d(xp, kh, kw, h, w):
    # xp is the zero-padded (C, h + kh - 1, w + kw - 1) input.
    c_dim = xp.shape[0]
    cols = np.empty((c_dim, kh * kw, h * w), dtype=xp.dtype)
    for c in prange(c_dim):
        for u in range(kh):
            for v in range(kw):
                k = u * kw + v
                for y in range(h):
                    row = xp[c, u + y]
                    base = y * w
                    for x in range(w):
                        cols[c, k, base + x] = row[v + x]
    return cols


@njit(parallel=True, cache=True)
def col2im2d(g, kh, kw, h, w):
    # Adjoint of im2col2d: accumulate back into the padded buffer.
    c_dim = g.shape[0]
    dxp = np.zeros((c_dim, h + kh - 1, w + kw - 1), dtype=g.dtype)
    for c in prange(c_dim):
        for u in range(kh):
            for v in range(kw):
                k = u * kw + v
                for y in range(h):
                    row = dxp[c, u + y]
                    base = y * w
                    for x in range(w):
                        row[v + x] += g[c, k, base + x]
    return dxp
