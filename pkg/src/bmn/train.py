"""Mini-batch training of the proposal network.

Windows are processed one at a time (forward + backward), gradients are
averaged over the batch, and an adaptive-moment step is applied. All
randomness (parameter init, shuffling, regression-cell sampling) flows from
the single seed, so runs are bit-reproducible at a fixed thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .losses import (
    loss_pem_core,
    loss_pem_core_grads,
    loss_tem,
    sample_regression_cells,
    weighted_bl_grad,
)
from .mask import SampleMask
from .model import Architecture, ModelParams, bmn_backward, bmn_forward


@dataclass(frozen=True)
class TrainingExample:
    """One window with its precomputed label tensors."""

    video_id: str
    features: np.ndarray
    start_labels: np.ndarray
    end_labels: np.ndarray
    iou_map: np.ndarray


@dataclass
class TrainSettings:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 10
    reg_weight: float = 10.0
    pem_weight: float = 1.0
    l2_weight: float = 0.0001
    pos_threshold: float = 0.5
    seed: int = 7
    dtype: str = "float32"


@dataclass
class EpochStats:
    epoch: int
    loss: float
    tem: float
    pem: float


class Adam:
    """Adaptive-moment optimizer (decay 0.9/0.999, eps 1e-8)."""

    def __init__(self, params: ModelParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, tensor in params.tensors.items():
            g = grads[name].astype(tensor.dtype)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensor -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def window_loss_and_grads(
    example: TrainingExample,
    params: ModelParams,
    mask: SampleMask,
    settings: TrainSettings,
    reg_cells: np.ndarray,
    l2_value: float | None = None,
):
    """Loss components and parameter gradients for a single window.

    The regression cell set is passed in so callers control the sampling
    (the training loop draws fresh cells; gradient checks hold them fixed).
    ``l2_value`` lets the batch loop reuse the weight norm, which only
    changes at optimizer steps.
    """
    out = bmn_forward(example.features, params, mask)
    tem = loss_tem(
        out.start_probs, out.end_probs,
        example.start_labels, example.end_labels, settings.pos_threshold,
    )
    pem = loss_pem_core(
        out.conf_cls, out.conf_reg, example.iou_map, mask.valid, reg_cells,
        settings.pos_threshold, settings.reg_weight,
    )
    if l2_value is None:
        l2_value = params.weight_l2()
    loss = tem + settings.pem_weight * pem.total + settings.l2_weight * l2_value

    d_start = weighted_bl_grad(out.start_probs, example.start_labels,
                               settings.pos_threshold)
    d_end = weighted_bl_grad(out.end_probs, example.end_labels,
                             settings.pos_threshold)
    d_cls, d_reg = loss_pem_core_grads(
        out.conf_cls, out.conf_reg, example.iou_map, mask.valid, reg_cells,
        settings.pos_threshold, settings.reg_weight,
    )
    d_cls *= settings.pem_weight
    d_reg *= settings.pem_weight
    dtype = params.dtype
    grads = bmn_backward(
        out, d_start.astype(dtype), d_end.astype(dtype),
        d_cls.astype(dtype), d_reg.astype(dtype), params, mask,
    )
    return loss, tem, pem, grads


def train(
    examples: list[TrainingExample],
    arch: Architecture,
    mask: SampleMask,
    settings: TrainSettings,
    log=None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Train from scratch; returns final parameters and per-epoch stats."""
    if not examples:
        raise TrainingError("training set is empty")
    dtype = np.dtype(settings.dtype)
    rng = np.random.default_rng(settings.seed)
    params = ModelParams.init(arch, settings.seed, dtype)
    optimizer = Adam(params, settings.learning_rate)
    history: list[EpochStats] = []

    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(len(examples))
        sums = np.zeros(3)
        for lo in range(0, len(order), settings.batch_size):
            batch = order[lo:lo + settings.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.tensors.items()}
            l2_value = params.weight_l2()
            for idx in batch:
                ex = examples[idx]
                cells = sample_regression_cells(ex.iou_map, mask.valid, rng)
                loss, tem, pem, grads = window_loss_and_grads(
                    ex, params, mask, settings, cells, l2_value
                )
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, window "
                        f"{ex.video_id!r}: total={loss} tem={tem} "
                        f"pem={pem.total} (cls={pem.classification}, "
                        f"reg={pem.regression})"
                    )
                for name in acc:
                    acc[name] += grads[name]
                sums += (loss, tem, pem.total)
            scale = dtype.type(1.0 / len(batch))
            for name, tensor in acc.items():
                tensor *= scale
                if name.endswith(".weight"):
                    tensor += dtype.type(settings.l2_weight) * params.tensors[name]
            optimizer.step(params, acc)
        stats = EpochStats(
            epoch=epoch,
            loss=float(sums[0] / len(order)),
            tem=float(sums[1] / len(order)),
            pem=float(sums[2] / len(order)),
        )
        history.append(stats)
        if log is not None:
            log(
                f"epoch {stats.epoch:3d}  loss {stats.loss:.4f}  "
                f"tem {stats.tem:.4f}  pem {stats.pem:.4f}"
            )
    return params, history
