"""Central finite-difference verification of every backward pass.

All checks run in 64-bit. Test points are rejection-sampled until every
relu input is at least ``MARGIN_FACTOR * h`` away from its kink (and no
sigmoid saturates against the probability clamp), so the difference
quotient never straddles a nondifferentiable point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers, mask as mask_mod
from .losses import (
    loss_pem_core,
    loss_pem_core_grads,
    loss_tem,
    sample_regression_cells,
    total_loss,
    weighted_bl_grad,
    weighted_bl_loss,
)
from .model import Architecture, ModelParams, bmn_forward
from .train import TrainSettings, TrainingExample, window_loss_and_grads

STEP = 1e-5
MARGIN_FACTOR = 50.0
SATURATION_LIMIT = 14.0
LAYER_TOL = 1e-4
END_TO_END_TOL = 1e-3
MAX_RESAMPLES = 500


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def fd_grad(fn, x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``fn`` w.r.t. every entry of ``x``."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn()
        flat[i] = orig - h
        lo = fn()
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return grad


def _probe(rng, *shape):
    return rng.standard_normal(shape)


def check_conv1d(rng) -> list[CheckResult]:
    x = _probe(rng, 3, 7)
    w = _probe(rng, 4, 3, 3) * 0.5
    b = _probe(rng, 4) * 0.1
    probe = _probe(rng, 4, 7)

    def value():
        y, _ = layers.conv1d_forward(x, w, b)
        return float((y * probe).sum())

    _, cols = layers.conv1d_forward(x, w, b)
    dx, dw, db = layers.conv1d_backward(probe, cols, w)
    return [
        CheckResult("conv1d/input", rel_err(dx, fd_grad(value, x)), LAYER_TOL),
        CheckResult("conv1d/weight", rel_err(dw, fd_grad(value, w)), LAYER_TOL),
        CheckResult("conv1d/bias", rel_err(db, fd_grad(value, b)), LAYER_TOL),
    ]


def check_conv2d(rng, kernel: int) -> list[CheckResult]:
    x = _probe(rng, 3, 5, 6)
    w = _probe(rng, 4, 3, kernel, kernel) * 0.5
    b = _probe(rng, 4) * 0.1
    probe = _probe(rng, 4, 5, 6)

    def value():
        y, _ = layers.conv2d_forward(x, w, b)
        return float((y * probe).sum())

    _, cols = layers.conv2d_forward(x, w, b)
    dx, dw, db = layers.conv2d_backward(probe, cols, w)
    tag = f"conv2d_{kernel}x{kernel}"
    return [
        CheckResult(f"{tag}/input", rel_err(dx, fd_grad(value, x)), LAYER_TOL),
        CheckResult(f"{tag}/weight", rel_err(dw, fd_grad(value, w)), LAYER_TOL),
        CheckResult(f"{tag}/bias", rel_err(db, fd_grad(value, b)), LAYER_TOL),
    ]


def check_sample_reduce(rng) -> list[CheckResult]:
    margin = MARGIN_FACTOR * STEP
    for _ in range(MAX_RESAMPLES):
        m = _probe(rng, 3, 4, 5, 6)
        w = _probe(rng, 4, 3, 4) * 0.5
        b = _probe(rng, 4) * 0.1
        pre = np.tensordot(w, m, axes=([1, 2], [0, 1])) + b[:, None, None]
        if np.abs(pre).min() > margin:
            break
    else:
        raise RuntimeError("could not sample a kink-free reduce case")
    probe = _probe(rng, 4, 5, 6)

    def value():
        return float((layers.conv3d_sample_reduce(m, w, b) * probe).sum())

    y = layers.conv3d_sample_reduce(m, w, b)
    dm, dw, db = layers.conv3d_sample_reduce_backward(probe, m, w, y)
    return [
        CheckResult("sample_reduce/input", rel_err(dm, fd_grad(value, m)), LAYER_TOL),
        CheckResult("sample_reduce/weight", rel_err(dw, fd_grad(value, w)), LAYER_TOL),
        CheckResult("sample_reduce/bias", rel_err(db, fd_grad(value, b)), LAYER_TOL),
    ]


def check_bm_layer(rng) -> list[CheckResult]:
    sm = mask_mod.build_sample_mask(8, 4, 4)
    feats = _probe(rng, 2, 8)
    probe = _probe(rng, 2, 4, 4, 8)

    def value():
        return float((mask_mod.bm_forward(feats, sm) * probe).sum())

    dfeats = mask_mod.bm_backward(probe, sm)
    return [
        CheckResult("bm_layer/input", rel_err(dfeats, fd_grad(value, feats)),
                    LAYER_TOL),
    ]


def check_fused_reduce(rng) -> list[CheckResult]:
    sm = mask_mod.build_sample_mask(8, 4, 4)
    feats = _probe(rng, 2, 8)
    w = _probe(rng, 5, 2, 4) * 0.5
    b = _probe(rng, 5) * 0.1
    probe = _probe(rng, 4 * 8, 5)

    def value():
        cells, _ = layers.fused_reduce_forward(feats, sm, w, b)
        return float((cells * probe).sum())

    _, w_no = layers.fused_reduce_forward(feats, sm, w, b)
    dfeats, dw, db = layers.fused_reduce_backward(probe, feats, sm, w_no)
    return [
        CheckResult("fused_reduce/input", rel_err(dfeats, fd_grad(value, feats)),
                    LAYER_TOL),
        CheckResult("fused_reduce/weight", rel_err(dw, fd_grad(value, w)),
                    LAYER_TOL),
        CheckResult("fused_reduce/bias", rel_err(db, fd_grad(value, b)),
                    LAYER_TOL),
    ]


def check_losses(rng) -> list[CheckResult]:
    probs = rng.uniform(0.05, 0.95, 24)
    labels = rng.uniform(0.0, 1.0, 24)

    def bl_value():
        return weighted_bl_loss(probs, labels)

    results = [CheckResult(
        "weighted_bl/probs",
        rel_err(weighted_bl_grad(probs, labels), fd_grad(bl_value, probs)),
        LAYER_TOL,
    )]

    valid = mask_mod.valid_map(8, 6)
    label_map = rng.uniform(0.0, 1.0, (6, 8))
    conf_cls = rng.uniform(0.05, 0.95, (6, 8))
    conf_reg = rng.uniform(0.05, 0.95, (6, 8))
    cells = sample_regression_cells(label_map, valid, rng)

    def pem_value():
        return loss_pem_core(conf_cls, conf_reg, label_map, valid, cells).total

    d_cls, d_reg = loss_pem_core_grads(conf_cls, conf_reg, label_map, valid, cells)
    results.append(CheckResult(
        "loss_pem/conf_cls", rel_err(d_cls, fd_grad(pem_value, conf_cls)),
        LAYER_TOL,
    ))
    results.append(CheckResult(
        "loss_pem/conf_reg", rel_err(d_reg, fd_grad(pem_value, conf_reg)),
        LAYER_TOL,
    ))
    return results


def _tiny_architecture() -> Architecture:
    return Architecture(
        input_dim=4, window_len=16, max_duration=8, num_samples=4,
        base_channels=(8, 4), tem_hidden=8, reduce_dim=16, pem_hidden=8,
    )


def _sample_end_to_end_case(rng):
    """A kink-free (params, example, cells) triple for the full-loss check."""
    arch = _tiny_architecture()
    sm = mask_mod.build_sample_mask(arch.window_len, arch.max_duration,
                                    arch.num_samples)
    margin = MARGIN_FACTOR * STEP
    for _ in range(MAX_RESAMPLES):
        seed = int(rng.integers(0, 2**31))
        params = ModelParams.init(arch, seed, np.float64)
        case_rng = np.random.default_rng(seed + 1)
        feats = case_rng.standard_normal((arch.input_dim, arch.window_len))
        instances = [(3.0, 9.0), (11.0, 15.0)]
        from .labels import pem_label_map, tem_labels

        g_s, g_e = tem_labels(instances, arch.window_len)
        g_c = pem_label_map(instances, arch.window_len, arch.max_duration)
        example = TrainingExample("probe", feats, g_s, g_e, g_c)
        out = bmn_forward(feats, params, sm, keep_cache=True, with_margin=True)
        if out.cache["margin_relu"] > margin and \
                out.cache["margin_sigmoid"] < SATURATION_LIMIT:
            cells = sample_regression_cells(g_c, sm.valid, case_rng)
            return params, example, sm, cells
    raise RuntimeError("could not sample a kink-free end-to-end case")


def check_end_to_end(rng) -> list[CheckResult]:
    """Full multi-task loss gradient w.r.t. every parameter tensor."""
    params, example, sm, cells = _sample_end_to_end_case(rng)
    settings = TrainSettings(dtype="float64")
    _, _, _, grads = window_loss_and_grads(example, params, sm, settings, cells)

    def value():
        out = bmn_forward(example.features, params, sm, keep_cache=False)
        tem = loss_tem(out.start_probs, out.end_probs,
                       example.start_labels, example.end_labels,
                       settings.pos_threshold)
        pem = loss_pem_core(out.conf_cls, out.conf_reg, example.iou_map,
                            sm.valid, cells, settings.pos_threshold,
                            settings.reg_weight)
        return total_loss(tem, pem.total, params, settings.pem_weight,
                          settings.l2_weight)

    results = []
    for name, tensor in params.tensors.items():
        analytic = grads[name].astype(np.float64)
        if name.endswith(".weight"):
            analytic = analytic + settings.l2_weight * tensor
        numeric = fd_grad(value, tensor)
        results.append(CheckResult(
            f"end_to_end/{name}", rel_err(analytic, numeric), END_TO_END_TOL,
        ))
    return results


def run_all(seed: int = 0) -> list[CheckResult]:
    """Every per-layer check plus the end-to-end loss gradient."""
    rng = np.random.default_rng(seed)
    results = []
    results += check_conv1d(rng)
    results += check_conv2d(rng, 1)
    results += check_conv2d(rng, 3)
    results += check_sample_reduce(rng)
    results += check_bm_layer(rng)
    results += check_fused_reduce(rng)
    results += check_losses(rng)
    results += check_end_to_end(rng)
    return results
