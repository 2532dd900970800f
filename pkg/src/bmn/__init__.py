"""Boundary-matching temporal action proposal generation.

Builds sampling masks for dense proposal evaluation, trains a two-branch
boundary/confidence network on feature sequences with hand-written
backward passes, decodes scored proposals and evaluates them with
AR@AN / AUC. See the README for the CLI entry points.
"""

from .config import RunConfig, load_config, make_config
from .data_io import (
    AnnotationSet,
    FeatureSequence,
    Window,
    load_annotations,
    load_features,
    make_windows,
    rescale_features,
    to_seconds,
    write_features,
)
from .decode import (
    Proposal,
    candidate_boundaries,
    fuse_score,
    generate_proposals,
    greedy_nms,
    merge_windows,
    soft_nms,
)
from .labels import ior, pem_label_map, tem_labels
from .mask import SampleMask, bm_backward, bm_forward, build_sample_mask, interp_row
from .metrics import ArCurve, ar_curve, auc, recall_at, tiou
from .model import (
    Architecture,
    ForwardOutput,
    ModelParams,
    bmn_backward,
    bmn_forward,
    load_checkpoint,
    params_from_checkpoint,
    save_checkpoint,
)
from .losses import loss_pem, loss_tem, total_loss, weighted_bl_loss
from .synthetic import SynthConfig, generate
from .train import TrainingExample, TrainSettings, train

__version__ = "0.1.0"
