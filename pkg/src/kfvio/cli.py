"""Command line: ``run``, ``sweep-compression`` and ``model``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import VioError
from .pipeline.config import PipelineConfig, preset
from .pipeline.model import format_report, model_report
from .pipeline.runner import run_sequence
from .pipeline.sweep import BLOCKS, TRUNCATIONS, sweep_compression, write_sweep_csv


def _config(args) -> PipelineConfig:
    if getattr(args, "preset", None):
        cfg = preset(args.preset)
    elif args.config:
        cfg = PipelineConfig.from_yaml(args.config)
    else:
        cfg = PipelineConfig()
    changes = {}
    if getattr(args, "mode", None):
        changes["stereo"] = args.mode == "stereo"
    if getattr(args, "kf_policy", None):
        changes["kf_policy"] = args.kf_policy
    if getattr(args, "no_compression", False):
        changes["compression"] = False
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return cfg.with_(**changes) if changes else cfg


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def build_parser():
    p = argparse.ArgumentParser(prog="kfvio", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run VIO over a dataset and write outputs")
    run.add_argument("--dataset", required=True, help="EuRoC directory or synthetic:NAME")
    run.add_argument("--config", help="pipeline YAML")
    run.add_argument("--preset", help="maxima, easy or a sequence name (overrides --config)")
    run.add_argument("--mode", choices=("mono", "stereo"))
    run.add_argument("--kf-policy", help="rate:k or dist:m")
    run.add_argument("--no-compression", action="store_true")
    run.add_argument("--seed", type=int)
    run.add_argument("--max-frames", type=int)
    run.add_argument("--out", required=True)

    sw = sub.add_parser("sweep-compression", help="trajectory error against codec settings")
    sw.add_argument("--dataset", default="synthetic:rendered")
    sw.add_argument("--config")
    sw.add_argument("--kf-policy")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--truncations", type=_ints, default=TRUNCATIONS)
    sw.add_argument("--blocks", type=_ints, default=BLOCKS)
    sw.add_argument("--max-frames", type=int)
    sw.add_argument("--out", required=True, help="CSV path")

    mo = sub.add_parser("model", help="memory and op-count report, no VIO")
    mo.add_argument("--config")
    mo.add_argument("--preset")
    mo.add_argument("--mode", choices=("mono", "stereo"))
    mo.add_argument("--no-compression", action="store_true")
    mo.add_argument("--json", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "run":
            report = run_sequence(cfg, args.dataset, args.out, max_frames=args.max_frames)
            line = f"{len(report.frame_classes)} frames, {report.keyframes} keyframes"
            if report.error:
                line += (f", ATE {report.error['ate_rmse']:.4f} m"
                         f" ({report.error['normalized']:.3f}% of path)")
            print(line)
        elif args.command == "sweep-compression":
            rows = sweep_compression(cfg, args.dataset, args.truncations, args.blocks,
                                     args.max_frames)
            write_sweep_csv(rows, args.out)
            for r in rows:
                print(f"{r.setting:<10}{r.bits_per_pixel:>7.3f} bpp  {r.normalized_error:.3f}%")
        else:
            report = model_report(cfg)
            print(json.dumps(report, indent=1) if args.json else format_report(report))
    except VioError as exc:
        print(f"kfvio: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
