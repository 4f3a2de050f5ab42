"""Command line entry points.

Subcommands:
  synth      render a synthetic scene bundle from a JSON spec
  autolabel  run the auto-labelling pipeline over a sequence directory
  evaluate   compare predicted labels against ground truth labels
  config     write the default pipeline configuration to a file
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AutoboxError
from .evaluation import evaluate_label_dirs, format_report
from .pipeline import PipelineConfig, autolabel_dir, format_timing, load_config, save_config


def _parse_frames(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(int(part))
    if not out:
        raise ValueError("no frame indices given")
    return out


def _load_pipeline_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig()
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "canonical", False):
        cfg.canonical_output = True
    if getattr(args, "canonical_focal", None) is not None:
        cfg.canonical.canonical_focal = args.canonical_focal
    cfg.validate()
    return cfg


def cmd_synth(args) -> int:
    from .synth import generate_scene, load_scene_spec, write_bundle

    spec = load_scene_spec(args.spec)
    if args.seed is not None:
        import dataclasses

        spec = dataclasses.replace(spec, seed=args.seed)
    bundle = generate_scene(spec)
    write_bundle(bundle, args.out)
    n_boxes = sum(len(v) for v in bundle.gt_boxes.values())
    print(f"wrote {spec.frames} frames, {n_boxes} ground-truth boxes to {args.out}")
    return 0


def cmd_autolabel(args) -> int:
    cfg = _load_pipeline_config(args)
    frames = _parse_frames(args.frames) if args.frames else None
    report = autolabel_dir(args.sequence, args.out, cfg, reference_frames=frames)
    print(format_timing(report))
    return 0


def cmd_evaluate(args) -> int:
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    report = evaluate_label_dirs(args.pred, args.gt, thresholds=thresholds)
    text = format_report(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_config(args) -> int:
    save_config(PipelineConfig(), args.out)
    print(f"wrote default configuration to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autobox3d",
        description="Batch 3D vehicle auto-labelling from depth, masks and ego poses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene bundle")
    p.add_argument("--spec", required=True, help="scene spec JSON file")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("autolabel", help="label a sequence directory")
    p.add_argument("sequence", help="input sequence directory")
    p.add_argument("--out", required=True, help="output label directory")
    p.add_argument("--config", default=None, help="pipeline configuration file")
    p.add_argument("--frames", default=None,
                   help="comma separated reference frames (default: all)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes for reference frames")
    p.add_argument("--canonical", action="store_true",
                   help="emit labels in the canonical focal-length space")
    p.add_argument("--canonical-focal", type=float, default=None,
                   help="canonical focal length in pixels")
    p.set_defaults(func=cmd_autolabel)

    p = sub.add_parser("evaluate", help="AP report for two label directories")
    p.add_argument("--pred", required=True, help="predicted label directory")
    p.add_argument("--gt", required=True, help="ground truth label directory")
    p.add_argument("--thresholds", default="0.5,0.3",
                   help="comma separated IoU thresholds")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("config", help="write the default configuration file")
    p.add_argument("--out", required=True, help="destination path")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AutoboxError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
