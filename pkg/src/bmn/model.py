"""The two-branch proposal network: parameters, forward, manual backward.

Layer stack (channels are the full-scale defaults; all configurable):

    base:  conv1d_1 (C_in->256, k3) relu | conv1d_2 (->128, k3) relu
    TEM:   conv1d_3 (->256, k3) relu | conv1d_4 (->2, k3) sigmoid
    PEM:   sampling contraction (128 x N x D x T)
           | sample reduce (->512) relu | conv2d_1 1x1 (->128) relu
           | conv2d_2 3x3 (->128) relu | conv2d_3 1x1 (->2) sigmoid

The PEM trunk runs through the fused sampling+reduce kernel; the 1x1
convolutions operate on the cell-major (D*T, C) layout to avoid transposes.
Checkpoints are a flat named-tensor binary format (magic "BMNC").
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError, TruncationError
from .layers import (
    conv1d_backward,
    conv1d_forward,
    conv2d_backward,
    conv2d_forward,
    fused_reduce_backward,
    fused_reduce_forward,
    relu,
    sigmoid,
)
from .mask import SampleMask

CHECKPOINT_MAGIC = b"BMNC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Structural hyperparameters fixing every tensor shape."""

    input_dim: int
    window_len: int
    max_duration: int
    num_samples: int = 32
    base_channels: tuple[int, int] = (256, 128)
    tem_hidden: int = 256
    reduce_dim: int = 512
    pem_hidden: int = 128

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        b1, b2 = self.base_channels
        shapes: dict[str, tuple[int, ...]] = {}
        shapes["conv1d_1.weight"] = (b1, self.input_dim, 3)
        shapes["conv1d_1.bias"] = (b1,)
        shapes["conv1d_2.weight"] = (b2, b1, 3)
        shapes["conv1d_2.bias"] = (b2,)
        shapes["conv1d_3.weight"] = (self.tem_hidden, b2, 3)
        shapes["conv1d_3.bias"] = (self.tem_hidden,)
        shapes["conv1d_4.weight"] = (2, self.tem_hidden, 3)
        shapes["conv1d_4.bias"] = (2,)
        shapes["conv3d_1.weight"] = (self.reduce_dim, b2, self.num_samples)
        shapes["conv3d_1.bias"] = (self.reduce_dim,)
        shapes["conv2d_1.weight"] = (self.pem_hidden, self.reduce_dim, 1, 1)
        shapes["conv2d_1.bias"] = (self.pem_hidden,)
        shapes["conv2d_2.weight"] = (self.pem_hidden, self.pem_hidden, 3, 3)
        shapes["conv2d_2.bias"] = (self.pem_hidden,)
        shapes["conv2d_3.weight"] = (2, self.pem_hidden, 1, 1)
        shapes["conv2d_3.bias"] = (2,)
        return shapes


@dataclass
class ModelParams:
    """Named parameter tensors; mutated only by the optimizer step."""

    arch: Architecture
    tensors: dict[str, np.ndarray]

    @classmethod
    def init(cls, arch: Architecture, seed: int, dtype=np.float32) -> "ModelParams":
        """Uniform +-sqrt(1/fan_in) initialization, deterministic per seed."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in arch.param_shapes().items():
            if name.endswith(".weight"):
                fan_in = int(np.prod(shape[1:]))
                bound = float(np.sqrt(1.0 / fan_in))
                tensors[name] = rng.uniform(-bound, bound, shape).astype(dtype)
                tensors[name.replace(".weight", ".bias")] = rng.uniform(
                    -bound, bound, shape[0]
                ).astype(dtype)
        return cls(arch, tensors)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.arch, {k: v.astype(dtype) for k, v in self.tensors.items()}
        )

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def weight_l2(self) -> float:
        """Half the squared norm of convolution weights (biases excluded)."""
        return 0.5 * float(
            sum(
                np.sum(v.astype(np.float64) ** 2)
                for k, v in self.tensors.items()
                if k.endswith(".weight")
            )
        )


@dataclass
class ForwardOutput:
    """Network outputs plus the activations the backward pass reuses."""

    start_probs: np.ndarray
    end_probs: np.ndarray
    conf_cls: np.ndarray
    conf_reg: np.ndarray
    cache: dict = field(repr=False, default_factory=dict)


def bmn_forward(feats: np.ndarray, params: ModelParams, mask: SampleMask,
                keep_cache: bool = True, with_margin: bool = False) -> ForwardOutput:
    """Run the network on a (C_in, T) window.

    Confidence maps are zeroed at invalid cells after the sigmoid. With
    ``with_margin`` the cache records how close relu inputs come to their
    kink and how far sigmoid inputs reach into saturation, which the
    finite-difference harness uses to reject ill-conditioned test points.
    """
    arch = params.arch
    if feats.shape != (arch.input_dim, arch.window_len):
        raise ShapeError(
            f"expected input ({arch.input_dim}, {arch.window_len}), "
            f"got {feats.shape}"
        )
    if mask.length != arch.window_len or mask.max_duration != arch.max_duration \
            or mask.num_samples != arch.num_samples:
        raise ShapeError("sampling mask does not match the architecture")
    p = params.tensors
    dur, length = arch.max_duration, arch.window_len

    y1, cols1 = conv1d_forward(feats, p["conv1d_1.weight"], p["conv1d_1.bias"])
    a1 = relu(y1)
    y2, cols2 = conv1d_forward(a1, p["conv1d_2.weight"], p["conv1d_2.bias"])
    a2 = relu(y2)

    y3, cols3 = conv1d_forward(a2, p["conv1d_3.weight"], p["conv1d_3.bias"])
    a3 = relu(y3)
    y4, cols4 = conv1d_forward(a3, p["conv1d_4.weight"], p["conv1d_4.bias"])
    start_probs = sigmoid(y4[0])
    end_probs = sigmoid(y4[1])

    pre_cells, w_no = fused_reduce_forward(
        a2, mask, p["conv3d_1.weight"], p["conv3d_1.bias"]
    )
    r_cells = relu(pre_cells)  # (D*T, reduce_dim)
    w5 = p["conv2d_1.weight"].reshape(arch.pem_hidden, arch.reduce_dim)
    a5 = relu(w5 @ r_cells.T + p["conv2d_1.bias"][:, None])  # (pem, D*T)
    y6, cols6 = conv2d_forward(
        a5.reshape(arch.pem_hidden, dur, length),
        p["conv2d_2.weight"], p["conv2d_2.bias"],
    )
    a6 = relu(y6)
    w7 = p["conv2d_3.weight"].reshape(2, arch.pem_hidden)
    y7 = w7 @ a6.reshape(arch.pem_hidden, -1) + p["conv2d_3.bias"][:, None]
    conf = sigmoid(y7).reshape(2, dur, length)
    conf[:, ~mask.valid] = 0.0

    cache = {}
    if keep_cache:
        cache = dict(
            feats=feats, cols1=cols1, a1=a1, cols2=cols2, a2=a2,
            cols3=cols3, a3=a3, cols4=cols4,
            r_cells=r_cells, a5=a5, cols6=cols6, a6=a6, w_no=w_no,
        )
    if with_margin:
        pre5 = w5 @ r_cells.T + p["conv2d_1.bias"][:, None]
        cache["margin_relu"] = min(
            float(np.abs(a).min())
            for a in (y1, y2, y3, pre_cells, pre5, y6)
        )
        cache["margin_sigmoid"] = max(
            float(np.abs(y4).max()), float(np.abs(y7).max())
        )
    return ForwardOutput(
        start_probs=start_probs,
        end_probs=end_probs,
        conf_cls=conf[0],
        conf_reg=conf[1],
        cache=cache,
    )


def bmn_backward(
    out: ForwardOutput,
    d_start: np.ndarray,
    d_end: np.ndarray,
    d_cls: np.ndarray,
    d_reg: np.ndarray,
    params: ModelParams,
    mask: SampleMask,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter.

    The ``d_*`` arrays are loss gradients w.r.t. the (post-sigmoid, masked)
    outputs; contributions at invalid map cells are discarded.
    """
    arch = params.arch
    p = params.tensors
    c = out.cache
    if not c:
        raise ShapeError("forward pass was run without keep_cache")
    dur, length = arch.max_duration, arch.window_len

    dy4 = np.stack([
        d_start * out.start_probs * (1.0 - out.start_probs),
        d_end * out.end_probs * (1.0 - out.end_probs),
    ])
    da3, dw4, db4 = conv1d_backward(dy4, c["cols4"], p["conv1d_4.weight"])
    dy3 = da3 * (c["a3"] > 0)
    da2_tem, dw3, db3 = conv1d_backward(dy3, c["cols3"], p["conv1d_3.weight"])

    dconf = np.stack([
        d_cls * out.conf_cls * (1.0 - out.conf_cls),
        d_reg * out.conf_reg * (1.0 - out.conf_reg),
    ])
    dconf[:, ~mask.valid] = 0.0
    dy7 = dconf.reshape(2, -1)
    w7 = p["conv2d_3.weight"].reshape(2, arch.pem_hidden)
    a6_mat = c["a6"].reshape(arch.pem_hidden, -1)
    dw7 = (dy7 @ a6_mat.T).reshape(p["conv2d_3.weight"].shape)
    db7 = dy7.sum(axis=1)
    da6 = (w7.T @ dy7).reshape(arch.pem_hidden, dur, length)
    dy6 = da6 * (c["a6"] > 0)
    da5_map, dw6, db6 = conv2d_backward(dy6, c["cols6"], p["conv2d_2.weight"])
    dy5 = da5_map.reshape(arch.pem_hidden, -1) * (c["a5"] > 0)
    w5 = p["conv2d_1.weight"].reshape(arch.pem_hidden, arch.reduce_dim)
    dw5 = (dy5 @ c["r_cells"]).reshape(p["conv2d_1.weight"].shape)
    db5 = dy5.sum(axis=1)
    d_r_cells = dy5.T @ w5  # (D*T, reduce_dim), cell-major like r_cells
    d_pre = d_r_cells * (c["r_cells"] > 0)
    da2_pem, dw3d, db3d = fused_reduce_backward(d_pre, c["a2"], mask, c["w_no"])

    da2 = da2_tem + da2_pem
    dy2 = da2 * (c["a2"] > 0)
    da1, dw2, db2 = conv1d_backward(dy2, c["cols2"], p["conv1d_2.weight"])
    dy1 = da1 * (c["a1"] > 0)
    _, dw1, db1 = conv1d_backward(dy1, c["cols1"], p["conv1d_1.weight"])

    return {
        "conv1d_1.weight": dw1, "conv1d_1.bias": db1,
        "conv1d_2.weight": dw2, "conv1d_2.bias": db2,
        "conv1d_3.weight": dw3, "conv1d_3.bias": db3,
        "conv1d_4.weight": dw4, "conv1d_4.bias": db4,
        "conv3d_1.weight": dw3d, "conv3d_1.bias": db3d,
        "conv2d_1.weight": dw5, "conv2d_1.bias": db5,
        "conv2d_2.weight": dw6, "conv2d_2.bias": db6,
        "conv2d_3.weight": dw7, "conv2d_3.bias": db7,
    }


def save_checkpoint(path, params: ModelParams) -> None:
    """Write all tensors as float32 LE in the named-tensor format."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.tensors)))
        for name, tensor in params.tensors.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> float32 tensor mapping."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: missing checkpoint magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 12
    tensors = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            size = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
            chunk = raw[off:off + size]
            if len(chunk) != size:
                raise TruncationError(f"{path}: tensor {name!r} truncated")
            tensors[name] = np.frombuffer(chunk, dtype="<f4").reshape(dims).copy()
            off += size
    except struct.error as exc:
        raise TruncationError(f"{path}: checkpoint truncated") from exc
    return tensors


def params_from_checkpoint(path, arch: Architecture, dtype=np.float32) -> ModelParams:
    """Load a checkpoint and validate every tensor against ``arch``."""
    tensors = load_checkpoint(path)
    expected = arch.param_shapes()
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise ShapeError(
            f"checkpoint tensors do not match architecture "
            f"(missing {missing}, unexpected {extra})"
        )
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ShapeError(
                f"{name}: checkpoint shape {tensors[name].shape}, "
                f"architecture wants {shape}"
            )
    return ModelParams(arch, {k: v.astype(dtype) for k, v in tensors.items()})
