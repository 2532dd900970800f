"""Hot numeric kernels with two interchangeable backends.

The sampling-mask contraction and its adjoint dominate runtime, so they are
implemented twice: a numba ``@njit`` version (default) and a pure-numpy
fallback. Selection happens once at import time via the ``BMN_BACKEND``
environment variable:

    BMN_BACKEND=numba   force numba (ImportError if unavailable)
    BMN_BACKEND=numpy   force the pure-numpy fallback
    BMN_BACKEND=auto    numba if importable, else numpy (default)

All kernels are pure functions over immutable inputs. The numba versions
parallelize only over independent output slices, so results are bit-identical
for any thread count.

Kernel signatures (idx0/idx1 are int64 ``(N, D, T)`` tap indices, w0/w1 the
matching weights in the data dtype, valid the ``(D, T)`` bool cell mask):

  bm_gather(feats, idx0, idx1, w0, w1, valid) -> (C, N, D, T)
      two-tap gather of feature columns for every sample point; invalid
      cells are left at zero.
  bm_scatter(dmap, idx0, idx1, w0, w1, valid, t_len) -> (C, T)
      exact adjoint of bm_gather; invalid cells contribute nothing.
  reduce_gather(ut, idx0, idx1, w0, w1, valid) -> (D*T, O)
      fused sampling + sample-axis reduction: ut is the (T, N, O) tensor of
      per-sample-slot projected features, the result holds the reduced
      proposal features cell-major.
  reduce_scatter(dcells, idx0, idx1, w0, w1, valid, t_len) -> (T, N, O)
      adjoint of reduce_gather.
  im2col2d(xp, kh, kw, h, w) / col2im2d(g, kh, kw, h, w)
      patch-matrix construction over a padded (C, ., .) grid and its
      adjoint, used by the 2-D convolutions.
"""

import os

from . import _numpy

_BACKEND_ENV = "BMN_BACKEND"


def _select_backend():
    choice = os.environ.get(_BACKEND_ENV, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_BACKEND_ENV} must be one of auto/numba/numpy, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy", _numpy
    try:
        from . import _numba
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", _numpy
    return "numba", _numba


BACKEND, _impl = _select_backend()

bm_gather = _impl.bm_gather
bm_scatter = _impl.bm_scatter
reduce_gather = _impl.reduce_gather
reduce_scatter = _impl.reduce_scatter
im2col2d = _impl.im2col2d
col2im2d = _impl.col2im2d


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND


def set_num_threads(n: int) -> None:
    """Limit numba's thread pool; no-op on the numpy backend."""
    if BACKEND == "numba":
        import numba

        numba.set_num_threads(n)
