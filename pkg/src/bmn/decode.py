"""Turn boundary probabilities and confidence maps into scored proposals.

Candidate boundaries are locations that clear half the sequence maximum or
are strict local peaks; every (start, end) pair within the duration cap
becomes a proposal whose confidence is read off the two maps. Scores fuse
by multiplication and redundant proposals are suppressed with Gaussian
soft-NMS (default) or hard greedy NMS.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Proposal:
    """A candidate interval with its boundary and map scores.

    Times are snippet indices while decoding a window and seconds after
    conversion; ``score`` is the fused retrieval score.
    """

    t_start: float
    t_end: float
    p_start: float
    p_end: float
    p_cc: float
    p_cr: float
    score: float = 0.0
    video_id: str = ""


def tiou_arrays(starts, ends, ref_start: float, ref_end: float) -> np.ndarray:
    inter = np.minimum(ends, ref_end) - np.maximum(starts, ref_start)
    union = np.maximum(ends, ref_end) - np.minimum(starts, ref_start)
    out = np.clip(inter, 0.0, None)
    np.divide(out, union, out=out, where=union > 0)
    return out


def candidate_boundaries(probs) -> np.ndarray:
    """Sorted indices that clear 0.5*max or are strict local peaks.

    Endpoints count as peaks when they exceed their single neighbor.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ParameterError("probability sequence must be 1-D and non-empty")
    keep = p > 0.5 * p.max()
    if p.size >= 2:
        peak = np.zeros(p.size, dtype=bool)
        peak[1:-1] = (p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])
        peak[0] = p[0] > p[1]
        peak[-1] = p[-1] > p[-2]
        keep |= peak
    return np.flatnonzero(keep)


def generate_proposals(
    start_idx,
    end_idx,
    conf_cls: np.ndarray,
    conf_reg: np.ndarray,
    start_probs: np.ndarray,
    end_probs: np.ndarray,
    max_duration: int,
    valid: np.ndarray | None = None,
) -> list[Proposal]:
    """Pair candidate boundaries into proposals within the duration cap.

    The confidence cell for duration d starting at s is (d - 1, s); pairs
    whose cell is marked invalid are skipped.
    """
    proposals = []
    for s in start_idx:
        for e in end_idx:
            d = e - s
            if d <= 0 or d > max_duration:
                continue
            if valid is not None and not valid[d - 1, s]:
                continue
            proposals.append(
                Proposal(
                    t_start=float(s),
                    t_end=float(e),
                    p_start=float(start_probs[s]),
                    p_end=float(end_probs[e]),
                    p_cc=float(conf_cls[d - 1, s]),
                    p_cr=float(conf_reg[d - 1, s]),
                )
            )
    return proposals


def fuse_score(p: Proposal) -> float:
    """Boundary probabilities times the geometric mean of the map reads."""
    return p.p_start * p.p_end * math.sqrt(p.p_cc * p.p_cr)


def fuse_all(proposals: list[Proposal]) -> list[Proposal]:
    return [replace(p, score=fuse_score(p)) for p in proposals]


def _argbest(scores, starts, ends) -> int:
    # Highest score; ties broken by earlier start, then earlier end.
    cand = np.flatnonzero(scores == scores.max())
    if cand.size > 1:
        cand = cand[starts[cand] == starts[cand].min()]
        if cand.size > 1:
            cand = cand[ends[cand] == ends[cand].min()]
    return int(cand[0])


def soft_nms(
    proposals: list[Proposal],
    decay: float = 0.4,
    score_floor: float = 0.001,
    top_k: int = 100,
) -> list[Proposal]:
    """Gaussian score-decay suppression.

    Repeatedly selects the best remaining proposal and decays every other
    score by exp(-tIoU^2 / decay); stops once ``top_k`` proposals are picked
    or every remaining score fell below ``score_floor``. Selected proposals
    keep their decayed scores, sorted descending.
    """
    if not proposals:
        return []
    starts = np.array([p.t_start for p in proposals])
    ends = np.array([p.t_end for p in proposals])
    scores = np.array([p.score for p in proposals], dtype=np.float64)
    alive = list(range(len(proposals)))
    picked: list[Proposal] = []
    while alive and len(picked) < top_k:
        local = _argbest(scores[alive], starts[alive], ends[alive])
        idx = alive.pop(local)
        if scores[idx] < score_floor:
            break
        picked.append(replace(proposals[idx], score=float(scores[idx])))
        if alive:
            rest = np.array(alive)
            overlap = tiou_arrays(
                starts[rest], ends[rest], starts[idx], ends[idx]
            )
            scores[rest] *= np.exp(-(overlap ** 2) / decay)
    picked.sort(key=lambda p: (-p.score, p.t_start, p.t_end))
    return picked


def greedy_nms(proposals: list[Proposal], iou_threshold: float) -> list[Proposal]:
    """Hard suppression: keep the best, drop overlaps, repeat."""
    starts = np.array([p.t_start for p in proposals])
    ends = np.array([p.t_end for p in proposals])
    scores = np.array([p.score for p in proposals], dtype=np.float64)
    alive = list(range(len(proposals)))
    kept: list[Proposal] = []
    while alive:
        local = _argbest(scores[alive], starts[alive], ends[alive])
        idx = alive.pop(local)
        kept.append(proposals[idx])
        if alive:
            rest = np.array(alive)
            overlap = tiou_arrays(starts[rest], ends[rest], starts[idx], ends[idx])
            alive = [a for a, o in zip(alive, overlap) if o < iou_threshold]
    return kept


def merge_windows(per_window: list[list[Proposal]], suppress) -> list[Proposal]:
    """Pool second-coordinate proposals across a video's windows.

    ``suppress`` is the configured NMS callable, applied once to the union.
    """
    pooled: list[Proposal] = []
    for group in per_window:
        pooled.extend(group)
    return suppress(pooled)


CSV_HEADER = ["video", "t_start", "t_end", "score",
              "p_start", "p_end", "p_cc", "p_cr"]


def write_proposals_csv(path, proposals: list[Proposal]) -> None:
    """Write proposals sorted by video then descending score.

    Times carry 4 decimal places per the interchange format.
    """
    rows = sorted(proposals, key=lambda p: (p.video_id, -p.score, p.t_start))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for p in rows:
            writer.writerow([
                p.video_id,
                f"{p.t_start:.4f}", f"{p.t_end:.4f}", f"{p.score:.6f}",
                f"{p.p_start:.6f}", f"{p.p_end:.6f}",
                f"{p.p_cc:.6f}", f"{p.p_cr:.6f}",
            ])


def read_proposals_csv(path) -> dict[str, list[Proposal]]:
    by_video: dict[str, list[Proposal]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            p = Proposal(
                t_start=float(row["t_start"]),
                t_end=float(row["t_end"]),
                p_start=float(row["p_start"]),
                p_end=float(row["p_end"]),
                p_cc=float(row["p_cc"]),
                p_cr=float(row["p_cr"]),
                score=float(row["score"]),
                video_id=row["video"],
            )
            by_video.setdefault(p.video_id, []).append(p)
    return by_video
