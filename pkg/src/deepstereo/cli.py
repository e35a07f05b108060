"""Command-line interface.

Subcommands: train, eval, infer, synth, analyze, experiment.
Exit codes: 0 success, 1 usage error, 2 runtime or divergence error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analyzer import analyze, compare
from .checkpoint import load_checkpoint, save_checkpoint
from .config import NetConfig, TrainConfig, desk_config, paper_config
from .data import (DatasetManifest, StereoSample, make_synthetic_stereogram,
                   normalize, pad_to_multiple_of_four, read_image,
                   sample_tensors, write_image, write_kitti_disparity,
                   write_pfm)
from .estimators import DisparityMap, infer_disparity
from .experiments import run_experiment_estimators, run_experiment_fullsize
from .metrics import evaluate_samples
from .model import PdsNetwork
from .train import SyntheticSpec, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _load_net_config(spec: str) -> NetConfig:
    if spec == "desk":
        return desk_config()
    if spec == "paper":
        return paper_config()
    return NetConfig.from_json(spec)


def _load_network(checkpoint: str, net_config: str) -> tuple[PdsNetwork, NetConfig]:
    cfg = _load_net_config(net_config)
    net = PdsNetwork(cfg, seed=0)
    net.load_state(load_checkpoint(checkpoint))
    return net, cfg


def _synthetic_spec(args) -> SyntheticSpec:
    return SyntheticSpec(n_train=args.train_count, n_val=args.val_count,
                         height=args.height, width=args.width,
                         max_disp=args.max_disp, n_layers=args.layers,
                         seed=args.seed)


def _add_synthetic_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-count", type=int, default=32)
    p.add_argument("--val-count", type=int, default=6)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--max-disp", type=int, default=10)
    p.add_argument("--layers", type=int, default=2)


def _cmd_train(args) -> int:
    net_cfg = _load_net_config(args.net_config)
    if args.train_config:
        train_cfg = TrainConfig.from_json(args.train_config)
    else:
        train_cfg = TrainConfig(seed=args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        train_cfg.checkpoint_dir = str(out)
        train_cfg.log_path = str(out / "train_log.csv")
    if args.manifest:
        manifest = DatasetManifest.load(args.manifest)
        samples = manifest.samples()
        val = (DatasetManifest.load(args.val_manifest).samples()
               if args.val_manifest else [])
        result = train(train_cfg, net_cfg, samples, val_samples=val,
                       quiet=False)
    else:
        result = train(train_cfg, net_cfg, _synthetic_spec(args), quiet=False)
    print(f"final validation 3PE: {result.final_val_3pe:.3f}, "
          f"best: {result.best_val_3pe:.3f}")
    return 0


def _cmd_eval(args) -> int:
    net, _ = _load_network(args.checkpoint, args.net_config)
    manifest = DatasetManifest.load(args.manifest)
    result = evaluate_samples(manifest.samples(), net, d_run=args.d_run,
                              estimator_kind=args.estimator, delta=args.delta,
                              max_eval_disp=args.max_eval_disp)
    csv_text = result.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text)
    print(csv_text, end="")
    return 0


def _cmd_infer(args) -> int:
    net, _ = _load_network(args.checkpoint, args.net_config)
    left = read_image(args.left)
    right = read_image(args.right)
    sample = StereoSample(left, right,
                          DisparityMap(np.zeros(left.shape[1:])))
    padded, (h, w) = pad_to_multiple_of_four(normalize(sample))
    lt, rt = sample_tensors(padded)
    pred = infer_disparity(lt, rt, net, d_run=args.d_run,
                           estimator_kind=args.estimator, delta=args.delta)
    values = pred.values[:h, :w].astype(np.float32)
    write_pfm(args.out, values)
    if args.png:
        write_kitti_disparity(args.png, DisparityMap(values.astype(np.float64)))
    print(f"wrote {args.out}")
    return 0


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        sample = make_synthetic_stereogram(args.seed * 100_000 + i,
                                           args.height, args.width,
                                           args.max_disp, args.layers)
        lp = out / f"{i:04d}_left.png"
        rp = out / f"{i:04d}_right.png"
        gp = out / f"{i:04d}_gt.pfm"
        write_image(lp, sample.left)
        write_image(rp, sample.right)
        write_pfm(gp, sample.gt.values.astype(np.float32))
        entries.append((lp, rp, gp))
    DatasetManifest(entries).save(out / "manifest.tsv")
    print(f"wrote {args.count} samples to {out}")
    return 0


def _cmd_analyze(args) -> int:
    reports = []
    for spec in args.config:
        cfg = _load_net_config(spec)
        reports.append(analyze(cfg, args.height, args.width,
                               d_run=args.max_disparity, label=spec))
    if len(reports) == 1 and args.format == "text":
        print(reports[0].to_text(), end="")
    else:
        print(compare(reports, sort_by=args.sort, fmt=args.format), end="")
    return 0


def _cmd_experiment(args) -> int:
    kwargs = {"out_dir": args.out, "quiet": False}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.iterations is not None:
        kwargs["iterations"] = args.iterations
    runner = (run_experiment_fullsize if args.kind == "fullsize"
              else run_experiment_estimators)
    report = runner(**kwargs)
    print(report.to_csv(), end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="deepstereo",
                     description="CPU-scale end-to-end stereo disparity "
                                 "estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--net-config", default="desk")
    p.add_argument("--train-config", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_synthetic_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--net-config", default="desk")
    p.add_argument("--estimator", default="subpixel_map",
                   choices=["subpixel_map", "soft_argmin"])
    p.add_argument("--delta", type=float, default=4.0)
    p.add_argument("--d-run", type=int, default=None)
    p.add_argument("--max-eval-disp", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="predict a disparity map")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--net-config", default="desk")
    p.add_argument("--estimator", default="subpixel_map",
                   choices=["subpixel_map", "soft_argmin"])
    p.add_argument("--delta", type=float, default=4.0)
    p.add_argument("--d-run", type=int, default=None)
    p.add_argument("--out", required=True, help="output PFM path")
    p.add_argument("--png", default=None, help="optional 16-bit PNG output")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("synth", help="materialize a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--max-disp", type=int, default=10)
    p.add_argument("--layers", type=int, default=2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("analyze", help="architecture report")
    p.add_argument("--config", action="append", required=True,
                   help="desk, paper, or a NetConfig JSON path (repeatable)")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--max-disparity", type=int, default=None)
    p.add_argument("--format", default="text", choices=["text", "csv"])
    p.add_argument("--sort", default="params",
                   choices=["params", "memory", "label"])
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("experiment", help="run a trend experiment")
    p.add_argument("kind", choices=["fullsize", "estimators"])
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures (incl. divergence) exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
