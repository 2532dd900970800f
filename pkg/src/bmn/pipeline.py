"""End-to-end stages wiring the modules together for the CLI.

Rescale mode maps every sequence onto a single window of the configured
length; windowed mode slides 50%-overlap windows and needs fps metadata for
the second-coordinate conversion.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import decode, kernels, metrics
from .config import RunConfig
from .data_io import (
    AnnotationSet,
    load_annotations,
    load_features,
    make_windows,
    rescale_features,
    to_seconds,
)
from .errors import ConfigError
from .labels import pem_label_map, tem_labels
from .mask import SampleMask, build_sample_mask
from .model import ModelParams, bmn_forward, params_from_checkpoint, save_checkpoint
from .train import TrainingExample, TrainSettings, train


def apply_thread_limit(cfg: RunConfig) -> None:
    if cfg.threads:
        kernels.set_num_threads(cfg.threads)


def discover_feature_files(features_dir) -> list[Path]:
    root = Path(features_dir)
    if not root.is_dir():
        raise ConfigError(f"features directory {features_dir} does not exist")
    return sorted(root.glob("*.bmnf"))


def mask_for(cfg: RunConfig) -> SampleMask:
    m = cfg.model
    return build_sample_mask(m.window_len, m.max_duration, m.num_samples,
                             m.expand)


def _load_sequence(path, annotations: AnnotationSet | None, cfg: RunConfig):
    video_id = Path(path).stem
    duration = None
    if annotations is not None and video_id in annotations:
        duration = annotations.get(video_id).duration_seconds
    seq = load_features(path, duration_seconds=duration,
                        frame_interval=cfg.model.frame_interval)
    if cfg.mode == "rescale":
        seq = rescale_features(seq, cfg.model.window_len)
    return seq


def build_training_examples(cfg: RunConfig, mask: SampleMask):
    annotations = load_annotations(cfg.paths.annotations)
    examples: list[TrainingExample] = []
    for path in discover_feature_files(cfg.paths.features_dir):
        if Path(path).stem not in annotations:
            continue
        seq = _load_sequence(path, annotations, cfg)
        windows = make_windows(
            seq, annotations, cfg.model.window_len, training=True,
            fps=None if cfg.mode == "rescale" else cfg.fps,
        )
        for w in windows:
            g_s, g_e = tem_labels(w.instances, w.length)
            g_c = pem_label_map(w.instances, w.length, cfg.model.max_duration)
            examples.append(TrainingExample(
                video_id=w.video_id,
                features=w.features.astype(cfg.train.dtype),
                start_labels=g_s,
                end_labels=g_e,
                iou_map=g_c,
            ))
    return examples


def run_training(cfg: RunConfig, log=print):
    apply_thread_limit(cfg)
    mask = mask_for(cfg)
    examples = build_training_examples(cfg, mask)
    settings = TrainSettings(
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
        epochs=cfg.train.epochs,
        reg_weight=cfg.train.reg_weight,
        pem_weight=cfg.train.pem_weight,
        l2_weight=cfg.train.l2_weight,
        pos_threshold=cfg.train.pos_threshold,
        seed=cfg.train.seed,
        dtype=cfg.train.dtype,
    )
    params, history = train(examples, cfg.model.architecture(), mask,
                            settings, log=log)
    if cfg.paths.checkpoint:
        Path(cfg.paths.checkpoint).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(cfg.paths.checkpoint, params)
    return params, history


def _suppressor(cfg: RunConfig):
    d = cfg.decode
    if d.nms == "soft":
        return lambda props: decode.soft_nms(props, d.decay, d.score_floor,
                                             d.top_k)
    return lambda props: decode.greedy_nms(props, d.iou_threshold)


def decode_video(seq, params: ModelParams, mask: SampleMask, cfg: RunConfig):
    """All surviving proposals for one video, in seconds."""
    rescaled = cfg.mode == "rescale"
    fps = None if rescaled else cfg.fps
    windows = make_windows(seq, None, cfg.model.window_len, training=False,
                           fps=fps)
    per_window: list[list[decode.Proposal]] = []
    for w in windows:
        out = bmn_forward(w.features.astype(params.dtype), params, mask,
                          keep_cache=False)
        starts = decode.candidate_boundaries(out.start_probs)
        ends = decode.candidate_boundaries(out.end_probs)
        proposals = decode.generate_proposals(
            starts, ends, out.conf_cls, out.conf_reg,
            out.start_probs, out.end_probs, cfg.model.max_duration,
            valid=mask.valid,
        )
        proposals = decode.fuse_all(proposals)
        per_window.append([
            to_seconds(p, w, seq, rescaled, fps) for p in proposals
        ])
    merged = decode.merge_windows(per_window, _suppressor(cfg))
    return [dataclasses.replace(p, video_id=seq.video_id) for p in merged]


def run_inference(cfg: RunConfig, checkpoint_path, out_csv, log=print):
    apply_thread_limit(cfg)
    mask = mask_for(cfg)
    params = params_from_checkpoint(checkpoint_path,
                                    cfg.model.architecture(),
                                    np.dtype(cfg.train.dtype))
    annotations = None
    if cfg.paths.annotations:
        annotations = load_annotations(cfg.paths.annotations)
    all_props: list[decode.Proposal] = []
    files = discover_feature_files(cfg.paths.features_dir)
    for path in files:
        seq = _load_sequence(path, annotations, cfg)
        all_props.extend(decode_video(seq, params, mask, cfg))
    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    decode.write_proposals_csv(out_csv, all_props)
    log(f"wrote {len(all_props)} proposals for {len(files)} videos to {out_csv}")
    return all_props


def run_eval(cfg: RunConfig, proposals_csv, annotations_path, out_json,
             log=print) -> dict:
    proposals = decode.read_proposals_csv(proposals_csv)
    annotations = load_annotations(annotations_path)
    gts = {vid: list(ann.instances) for vid, ann in annotations.items()}
    report = metrics.metrics_report(proposals, gts, cfg.eval.thresholds,
                                    cfg.eval.an_max)
    Path(out_json).parent.mkdir(parents=True, exist_ok=True)
    with open(out_json, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    for an in ("1", "10", "100"):
        if an in report["ar_at"]:
            log(f"AR@{an}: {report['ar_at'][an]:.4f}")
    log(f"AUC: {report['auc']:.4f}")
    return report
