"""Command line for training the wind UNet and applying it to scenes.

`train` fits a model on a workspace's train split and writes a checkpoint;
`predict` runs a checkpoint over a split subset and stores the result as a
scene channel (default ``wspd_cnn``), ready for the pipeline's evaluation
stage.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from .predict import predict_workspace
from .train import PRESETS, train
from .variants import VARIANTS


def cmd_train(args) -> int:
    config = PRESETS[args.preset]
    overrides = {k: getattr(args, k) for k in
                 ("steps", "batch", "lr", "crop", "base")
                 if getattr(args, k) is not None}
    if overrides:
        config = dataclasses.replace(config, **overrides)

    out = args.out
    if out is None:
        out = Path(args.workspace) / "models" / f"unet_{args.variant}.pt"
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)

    for k in range(args.repeats):
        seed = args.seed + k
        path = out if args.repeats == 1 else \
            out.with_name(f"{out.stem}_r{k}{out.suffix}")
        t0 = time.perf_counter()
        _, history = train(args.workspace, args.variant, config,
                           seed=seed, out=path)
        dt = time.perf_counter() - t0
        print(f"trained variant {args.variant} seed {seed}: "
              f"final loss {history[-1][1]:.4f} "
              f"({config.steps} steps, {dt:.0f}s) -> {path}")
    return 0


def cmd_predict(args) -> int:
    summary = predict_workspace(args.workspace, args.weights,
                                subset=args.subset, out_channel=args.channel)
    print(f"wrote channel {summary['channel']!r} "
          f"(variant {summary['variant']}) to "
          f"{len(summary['predicted'])} scene(s); "
          f"skipped {len(summary['skipped'])}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windunet", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a UNet on the train split")
    t.add_argument("--workspace", required=True)
    t.add_argument("--variant", default="IV", choices=sorted(VARIANTS),
                   help="input channel set (default: IV, all channels)")
    t.add_argument("--preset", default="desk", choices=sorted(PRESETS),
                   help="base hyperparameters (default: desk)")
    t.add_argument("--steps", type=int, help="override preset step count")
    t.add_argument("--batch", type=int, help="override preset batch size")
    t.add_argument("--lr", type=float, help="override preset learning rate")
    t.add_argument("--crop", type=int, help="override preset crop size")
    t.add_argument("--base", type=int, help="override preset feature width")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--repeats", type=int, default=1,
                   help="train N models with seeds seed..seed+N-1")
    t.add_argument("--out", help="checkpoint path "
                   "(default: <workspace>/models/unet_<variant>.pt)")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predictions as a scene channel")
    p.add_argument("--workspace", required=True)
    p.add_argument("--weights", required=True, help="checkpoint from train")
    p.add_argument("--subset", default="test",
                   choices=["train", "val", "test", "all"])
    p.add_argument("--channel", default="wspd_cnn",
                   help="output channel name (default: wspd_cnn)")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
