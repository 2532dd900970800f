"""Training-label construction from window-local instances.

Boundary labels score each snippet location by its overlap ratio (IoR) with
an instance's start/end region; the proposal-map label is the best temporal
IoU any instance achieves against each proposal cell.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError
from .mask import valid_map


def ior(region: tuple[float, float], gt_region: tuple[float, float]) -> float:
    """Intersection of the two intervals divided by the first's length."""
    lo, hi = region
    if not hi > lo:
        raise DegenerateInputError(f"degenerate query region [{lo}, {hi}]")
    inter = min(hi, gt_region[1]) - max(lo, gt_region[0])
    return max(inter, 0.0) / (hi - lo)


def tem_labels(
    instances, length: int, boundary_ratio: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Per-location start/end boundary labels in [0, 1].

    Each instance (s, e) with duration d owns a start region
    [s - d * boundary_ratio, s + d * boundary_ratio] (end analogous); the
    label at location n is the IoR of the unit-width local region
    [n - 0.5, n + 0.5] with the closest such region, maximized over
    instances.
    """
    centers = np.arange(length, dtype=np.float64)
    lo = centers - 0.5
    hi = centers + 0.5
    g_start = np.zeros(length)
    g_end = np.zeros(length)
    for s, e in instances:
        d = e - s
        for target, anchor in ((g_start, s), (g_end, e)):
            r_lo = anchor - d * boundary_ratio
            r_hi = anchor + d * boundary_ratio
            overlap = np.minimum(hi, r_hi) - np.maximum(lo, r_lo)
            np.maximum(target, np.clip(overlap, 0.0, None), out=target)
    return g_start, g_end


def pem_label_map(instances, length: int, max_duration: int) -> np.ndarray:
    """(D, T) map of best temporal IoU per proposal cell; invalid cells 0."""
    dur = np.arange(1, max_duration + 1, dtype=np.float64)[:, None]
    start = np.arange(length, dtype=np.float64)[None, :]
    end = start + dur
    g = np.zeros((max_duration, length))
    for s, e in instances:
        if not e > s:
            continue
        inter = np.clip(np.minimum(end, e) - np.maximum(start, s), 0.0, None)
        union = dur + (e - s) - inter
        np.maximum(g, inter / union, out=g)
    g[~valid_map(length, max_duration)] = 0.0
    return g
