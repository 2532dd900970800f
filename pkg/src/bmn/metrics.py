"""Proposal-quality evaluation: temporal IoU, recall, AR@AN, AUC.

Recall is pooled over instances (micro-average): a ground-truth instance is
retrieved when some proposal in the per-video top-AN selection reaches the
IoU threshold. AR averages recall over the threshold grid and AUC is the
mean of AR(AN) over AN = 1..AN_max, expressed as a percentage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection-over-union; 0 for degenerate intervals."""
    if a[1] <= a[0] or b[1] <= b[0]:
        return 0.0
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    return inter / (max(a[1], b[1]) - min(a[0], b[0]))


def _sorted_intervals(proposals):
    """Proposals as (start, end) sorted by descending score, stable ties."""
    ordered = sorted(proposals, key=lambda p: (-p.score, p.t_start, p.t_end))
    return [(p.t_start, p.t_end) for p in ordered]


def recall_at(proposals_by_video, gts_by_video, an: int, tau: float) -> float:
    """Fraction of instances retrieved by per-video top-``an`` proposals."""
    total = sum(len(v) for v in gts_by_video.values())
    if total == 0:
        raise MetricsError("recall is undefined with zero ground-truth instances")
    retrieved = 0
    for video, gts in gts_by_video.items():
        if not gts or an <= 0:
            continue
        top = _sorted_intervals(proposals_by_video.get(video, []))[:an]
        for gt in gts:
            if any(tiou(prop, gt) >= tau for prop in top):
                retrieved += 1
    return retrieved / total


@dataclass(frozen=True)
class ArCurve:
    """Average recall per proposal budget, plus the threshold grid used."""

    values: np.ndarray  # index k holds AR at AN = k + 1
    thresholds: tuple[float, ...]

    @property
    def an_max(self) -> int:
        return len(self.values)

    def at(self, an: int) -> float:
        return float(self.values[an - 1])


def ar_curve(proposals_by_video, gts_by_video, thresholds,
             an_max: int = 100) -> ArCurve:
    """AR(AN) for AN = 1..an_max, averaging recall over ``thresholds``."""
    thresholds = tuple(thresholds)
    total = sum(len(v) for v in gts_by_video.values())
    if total == 0:
        raise MetricsError("AR is undefined with zero ground-truth instances")
    # One pass per video: prefix-best IoU per instance over the sorted
    # proposals, so every (AN, tau) read is a table lookup. Equivalent to
    # calling recall_at per grid point (asserted in tests).
    best = np.full((total, an_max), -1.0)  # instances with no proposals never match
    row = 0
    for video, gts in gts_by_video.items():
        props = _sorted_intervals(proposals_by_video.get(video, []))[:an_max]
        for gt in gts:
            if props:
                ious = np.array([tiou(p, gt) for p in props])
                prefix = np.maximum.accumulate(ious)
                best[row, :len(prefix)] = prefix
                if len(prefix) < an_max:
                    best[row, len(prefix):] = prefix[-1]
            row += 1
    taus = np.array(thresholds)[:, None, None]
    recalls = (best[None] >= taus).mean(axis=1)  # (n_tau, an_max)
    return ArCurve(values=recalls.mean(axis=0), thresholds=thresholds)


def auc(curve: ArCurve) -> float:
    """Mean of AR over integer AN, as a percentage."""
    return float(np.mean(curve.values) * 100.0)


def metrics_report(proposals_by_video, gts_by_video, thresholds,
                   an_max: int = 100) -> dict:
    """JSON-ready summary: AR at standard budgets, AUC, counts."""
    curve = ar_curve(proposals_by_video, gts_by_video, thresholds, an_max)
    budgets = [an for an in (1, 5, 10, 50, 100) if an <= an_max]
    return {
        "ar_at": {str(an): curve.at(an) for an in budgets},
        "auc": auc(curve),
        "thresholds": list(curve.thresholds),
        "an_max": an_max,
        "proposal_counts": {
            "total": int(sum(len(v) for v in proposals_by_video.values())),
            "videos": len(gts_by_video),
        },
    }
