"""Boundary-matching sampling mask and the forward/adjoint contraction.

A proposal cell ``(i, j)`` stands for the interval starting at snippet ``j``
with duration ``i + 1``. For every cell, ``num_samples`` points are spread
uniformly over the duration-expanded interval and each point becomes a
two-tap linear-interpolation row over the snippet axis. The whole mask is
precomputed once per ``(T, D, N, expand)`` and shared across videos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError


def interp_row(t: float, length: int) -> dict[int, float]:
    """Sparse interpolation row for a (possibly non-integer) sample point.

    Weight ``1 - frac`` goes to ``floor(t)`` and ``frac`` to ``floor(t)+1``;
    taps falling outside ``[0, length - 1]`` are dropped, so points near the
    sequence edge yield partial rows and fully out-of-range points yield
    empty ones.
    """
    if length < 1:
        raise ParameterError("length must be >= 1")
    lo = math.floor(t)
    frac = t - lo
    row: dict[int, float] = {}
    if 0 <= lo <= length - 1:
        row[lo] = 1.0 - frac
    if frac > 0.0 and 0 <= lo + 1 <= length - 1:
        row[lo + 1] = frac
    return row


def valid_map(length: int, max_duration: int) -> np.ndarray:
    """Bool (D, T) map of cells whose end index stays inside the window."""
    dur = np.arange(1, max_duration + 1)[:, None]
    start = np.arange(length)[None, :]
    return start + dur <= length - 1


@dataclass
class SampleMask:
    """Precomputed two-tap sampling weights for all proposal cells.

    ``idx0``/``idx1`` are (N, D, T) tap indices into the snippet axis and
    ``w0``/``w1`` the matching weights (zero-weight taps point at index 0).
    Instances are immutable by convention and safe to share across threads.
    """

    length: int
    max_duration: int
    num_samples: int
    expand: float
    idx0: np.ndarray
    idx1: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    valid: np.ndarray
    _casts: dict = field(default_factory=dict, repr=False)

    def taps(self, dtype):
        """Tap arrays with weights cast to ``dtype`` (cached)."""
        key = np.dtype(dtype)
        if key not in self._casts:
            self._casts[key] = (self.w0.astype(key), self.w1.astype(key))
        w0, w1 = self._casts[key]
        return self.idx0, self.idx1, w0, w1

    def dense(self) -> np.ndarray:
        """Dense (N, T, D, T) weight tensor; intended for small-T tests."""
        n, d, t = self.idx0.shape
        w = np.zeros((n, self.length, d, t))
        nn, ii, jj = np.meshgrid(
            np.arange(n), np.arange(d), np.arange(t), indexing="ij"
        )
        np.add.at(w, (nn, self.idx0, ii, jj), self.w0)
        np.add.at(w, (nn, self.idx1, ii, jj), self.w1)
        return w

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.w0) + np.count_nonzero(self.w1))


def build_sample_mask(
    length: int, max_duration: int, num_samples: int, expand: float = 0.25
) -> SampleMask:
    """Build the sampling mask for a window of ``length`` snippets.

    For cell (i, j) with duration d = i + 1 the sample points are

        t_k = (j - expand * d) + k * (1 + 2 * expand) * d / (N - 1)

    for k = 0 .. N-1, i.e. both endpoints of the expanded interval are
    included. A cell is valid iff its end index j + d <= length - 1.
    """
    if num_samples < 2:
        raise ParameterError("num_samples must be >= 2")
    if not 1 <= max_duration <= length:
        raise ParameterError(
            f"max_duration must be in [1, {length}], got {max_duration}"
        )
    dur = np.arange(1, max_duration + 1, dtype=np.float64)[None, :, None]
    start = np.arange(length, dtype=np.float64)[None, None, :]
    k = np.arange(num_samples, dtype=np.float64)[:, None, None]
    step = (1.0 + 2.0 * expand) * dur / (num_samples - 1)
    points = (start - expand * dur) + k * step

    lo = np.floor(points)
    frac = points - lo
    lo = lo.astype(np.int32)
    hi = lo + 1
    in0 = (lo >= 0) & (lo <= length - 1)
    in1 = (hi >= 0) & (hi <= length - 1)
    idx0 = np.where(in0, lo, np.int32(0))
    idx1 = np.where(in1, hi, np.int32(0))
    w0 = np.where(in0, 1.0 - frac, 0.0)
    w1 = np.where(in1, frac, 0.0)
    return SampleMask(
        length=length,
        max_duration=max_duration,
        num_samples=num_samples,
        expand=expand,
        idx0=idx0,
        idx1=idx1,
        w0=w0,
        w1=w1,
        valid=valid_map(length, max_duration),
    )


def bm_forward(feats: np.ndarray, mask: SampleMask) -> np.ndarray:
    """Contract a (C, T) feature sequence into the (C, N, D, T) feature map.

    Entries at invalid cells are exactly zero.
    """
    if feats.ndim != 2 or feats.shape[1] != mask.length:
        raise ShapeError(
            f"expected features (C, {mask.length}), got {feats.shape}"
        )
    idx0, idx1, w0, w1 = mask.taps(feats.dtype)
    return kernels.bm_gather(feats, idx0, idx1, w0, w1, mask.valid)


def bm_backward(dmap: np.ndarray, mask: SampleMask) -> np.ndarray:
    """Adjoint of :func:`bm_forward`: (C, N, D, T) grads back to (C, T).

    Gradient entries at invalid cells are ignored.
    """
    expected = (mask.num_samples, mask.max_duration, mask.length)
    if dmap.ndim != 4 or dmap.shape[1:] != expected:
        raise ShapeError(
            f"expected gradient (C, {expected[0]}, {expected[1]}, "
            f"{expected[2]}), got {dmap.shape}"
        )
    idx0, idx1, w0, w1 = mask.taps(dmap.dtype)
    return kernels.bm_scatter(dmap, idx0, idx1, w0, w1, mask.valid, mask.length)
