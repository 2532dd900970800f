"""Training objective: weighted boundary losses, map losses, regularizer.

Probabilities are clamped to [1e-7, 1 - 1e-7] before any log; gradients are
zero where the clamp is active. The map regression loss works on a sampled
cell set (all high-overlap cells plus an equal number of drawn low-overlap
cells) so the two populations stay near 1:1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-7
POSITIVE_IOU = 0.6
NEGATIVE_IOU = 0.2


def weighted_bl_loss(probs, labels, threshold: float = 0.5) -> float:
    """Class-frequency-weighted binary logistic loss.

    Labels above ``threshold`` count as positive; each class is reweighted
    by total/count so sparse positives are not drowned out. A class with no
    members contributes nothing.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    total = probs.size
    if total == 0:
        return 0.0
    pos = labels > threshold
    n_pos = int(pos.sum())
    n_neg = total - n_pos
    pc = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    loss = 0.0
    if n_pos:
        loss -= (total / n_pos) * float(np.log(pc[pos]).sum())
    if n_neg:
        loss -= (total / n_neg) * float(np.log1p(-pc[~pos]).sum())
    return loss / total


def weighted_bl_grad(probs, labels, threshold: float = 0.5) -> np.ndarray:
    """d(weighted_bl_loss)/d(probs); zero where the probability clamp bites."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    total = probs.size
    grad = np.zeros_like(probs)
    if total == 0:
        return grad
    pos = labels > threshold
    n_pos = int(pos.sum())
    n_neg = total - n_pos
    inside = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    if n_pos:
        sel = pos & inside
        grad[sel] = -(1.0 / n_pos) / probs[sel]
    if n_neg:
        sel = (~pos) & inside
        grad[sel] = (1.0 / n_neg) / (1.0 - probs[sel])
    return grad


def loss_tem(start_probs, end_probs, start_labels, end_labels,
             threshold: float = 0.5) -> float:
    """Sum of the start and end boundary losses."""
    return weighted_bl_loss(start_probs, start_labels, threshold) + \
        weighted_bl_loss(end_probs, end_labels, threshold)


def sample_regression_cells(label_map, valid, rng) -> np.ndarray:
    """Flat indices of the regression cell set: positives + drawn negatives.

    All valid cells with label > 0.6 are taken; an equal count (or as many
    as exist) is drawn uniformly without replacement from valid cells with
    label < 0.2.
    """
    flat_labels = np.asarray(label_map).ravel()
    flat_valid = np.asarray(valid).ravel()
    pos = np.flatnonzero(flat_valid & (flat_labels > POSITIVE_IOU))
    neg_pool = np.flatnonzero(flat_valid & (flat_labels < NEGATIVE_IOU))
    if pos.size == 0 or neg_pool.size == 0:
        return pos
    take = min(pos.size, neg_pool.size)
    neg = rng.choice(neg_pool, size=take, replace=False)
    return np.concatenate([pos, np.sort(neg)])


@dataclass
class PemLoss:
    total: float
    classification: float
    regression: float


def loss_pem_core(conf_cls, conf_reg, label_map, valid, reg_cells,
                  threshold: float = 0.5, reg_weight: float = 10.0) -> PemLoss:
    """Map loss with a fixed regression cell set (deterministic)."""
    v = np.asarray(valid)
    l_c = weighted_bl_loss(conf_cls[v], label_map[v], threshold)
    if reg_cells.size:
        diff = conf_reg.ravel()[reg_cells] - label_map.ravel()[reg_cells]
        l_r = float(np.mean(diff.astype(np.float64) ** 2))
    else:
        l_r = 0.0
    return PemLoss(l_c + reg_weight * l_r, l_c, l_r)


def loss_pem_core_grads(conf_cls, conf_reg, label_map, valid, reg_cells,
                        threshold: float = 0.5, reg_weight: float = 10.0):
    """Gradients of :func:`loss_pem_core` w.r.t. both confidence maps."""
    v = np.asarray(valid)
    d_cls = np.zeros(conf_cls.shape, dtype=np.float64)
    d_cls[v] = weighted_bl_grad(conf_cls[v], label_map[v], threshold)
    d_reg = np.zeros(conf_reg.size, dtype=np.float64)
    if reg_cells.size:
        diff = conf_reg.ravel()[reg_cells] - label_map.ravel()[reg_cells]
        d_reg[reg_cells] = reg_weight * 2.0 * diff / reg_cells.size
    return d_cls, d_reg.reshape(conf_reg.shape)


def loss_pem(conf_cls, conf_reg, label_map, valid, rng,
             threshold: float = 0.5, reg_weight: float = 10.0) -> PemLoss:
    """Map loss: classification over valid cells + weighted sampled MSE."""
    cells = sample_regression_cells(label_map, valid, rng)
    return loss_pem_core(
        conf_cls, conf_reg, label_map, valid, cells, threshold, reg_weight
    )


def total_loss(tem: float, pem: float, params, pem_weight: float = 1.0,
               l2_weight: float = 0.0001) -> float:
    """Multi-task objective: boundary + map losses + L2 on conv weights."""
    return tem + pem_weight * pem + l2_weight * params.weight_l2()
