"""Command-line pipeline: gen-synthetic, train, infer, eval, gradcheck.

Every command takes ``--config <path>`` (JSON, see :mod:`bmn.config`);
``--seed`` and ``--out`` override the corresponding config fields. Exit
codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import gradcheck, pipeline, synthetic
from .config import RunConfig, load_config, make_config
from .errors import BmnError, ConfigError


def _base_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = make_config(profile=getattr(args, "profile", None))
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    return cfg


def cmd_gen_synthetic(args) -> int:
    cfg = _base_config(args)
    out_dir = Path(args.out or cfg.paths.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}")
    s = cfg.synthetic
    train_videos = args.videos if args.videos is not None else s.train_videos
    val_videos = args.val_videos if args.val_videos is not None else s.val_videos
    base = synthetic.SynthConfig(
        num_videos=train_videos,
        feature_dim=s.feature_dim,
        length=s.length,
        amplitude=s.amplitude,
        noise_std=s.noise_std,
        seed=cfg.train.seed,
    )
    train_ids = synthetic.generate(base, out_dir / "train")
    val_ids = []
    if val_videos:
        import dataclasses

        val_cfg = dataclasses.replace(base, num_videos=val_videos,
                                      seed=cfg.train.seed + 1)
        val_ids = synthetic.generate(val_cfg, out_dir / "val")
    print(f"generated {len(train_ids)} train / {len(val_ids)} val videos "
          f"under {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    if args.features:
        cfg.paths.features_dir = args.features
    if args.annotations:
        cfg.paths.annotations = args.annotations
    if args.out:
        cfg.paths.checkpoint = args.out
    if not cfg.paths.features_dir or not cfg.paths.annotations:
        raise ConfigError("train needs paths.features_dir and paths.annotations")
    if not cfg.paths.checkpoint:
        cfg.paths.checkpoint = str(Path(cfg.paths.out_dir) / "model.bmnc")
    t0 = time.perf_counter()
    _, history = pipeline.run_training(cfg, log=print)
    dt = time.perf_counter() - t0
    print(f"trained {len(history)} epochs in {dt:.1f}s; "
          f"checkpoint: {cfg.paths.checkpoint}")
    return 0


def cmd_infer(args) -> int:
    cfg = _base_config(args)
    if args.features:
        cfg.paths.features_dir = args.features
    if args.annotations:
        cfg.paths.annotations = args.annotations
    checkpoint = args.checkpoint or cfg.paths.checkpoint
    if not checkpoint:
        raise ConfigError("infer needs a checkpoint (--checkpoint or config)")
    if not cfg.paths.features_dir:
        raise ConfigError("infer needs paths.features_dir")
    out_csv = args.out or str(Path(cfg.paths.out_dir) / "proposals.csv")
    pipeline.run_inference(cfg, checkpoint, out_csv, log=print)
    return 0


def cmd_eval(args) -> int:
    cfg = _base_config(args)
    annotations = args.annotations or cfg.paths.annotations
    if not annotations:
        raise ConfigError("eval needs --annotations or paths.annotations")
    out_json = args.out or str(Path(cfg.paths.out_dir) / "metrics.json")
    pipeline.run_eval(cfg, args.proposals, annotations, out_json, log=print)
    return 0


def cmd_gradcheck(args) -> int:
    failures = 0
    for trial in range(args.trials):
        seed = (args.seed or 0) + trial
        results = gradcheck.run_all(seed)
        width = max(len(r.name) for r in results)
        print(f"-- gradient check, seed {seed} --")
        for r in results:
            status = "ok" if r.passed else "FAIL"
            print(f"{r.name:<{width}}  max rel err {r.max_rel_err:.3e}  "
                  f"(tol {r.tol:.0e})  {status}")
            failures += not r.passed
    if failures:
        print(f"{failures} gradient check(s) failed")
        return 1
    print("all gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmn",
        description="Temporal action proposal pipeline over feature sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--profile", choices=["anet", "thumos", "tiny"],
                       help="preset used when no --config is given")
        p.add_argument("--seed", type=int, help="override train.seed")
        p.add_argument("--out", help="override the command's output path")

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    common(p)
    p.add_argument("--videos", type=int, help="training video count")
    p.add_argument("--val-videos", type=int, help="validation video count")
    p.set_defaults(fn=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train and write a checkpoint")
    common(p)
    p.add_argument("--features", help="override paths.features_dir")
    p.add_argument("--annotations", help="override paths.annotations")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="decode proposals to CSV")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint to load")
    p.add_argument("--features", help="override paths.features_dir")
    p.add_argument("--annotations", help="durations for second conversion")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score a proposal CSV against annotations")
    common(p)
    p.add_argument("--proposals", required=True, help="proposal CSV to score")
    p.add_argument("--annotations", help="ground-truth annotation JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    common(p)
    p.add_argument("--trials", type=int, default=1,
                   help="number of fresh-seed repetitions")
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BmnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
