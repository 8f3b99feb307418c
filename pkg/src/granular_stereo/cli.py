"""Command-line interface for Granular Stereo."""

import argparse
import logging
from pathlib import Path
from typing import Optional

import matplotlib
import numpy as np

from granular_stereo.config.model import ModelConfig, TrainConfig
from granular_stereo.core.types import DisparityMap
from granular_stereo.errors import ShapeMismatch, ValidationError
from granular_stereo.utils.seeding import SEED_ENV_VAR, default_seed, seed_everything

logger = logging.getLogger(__name__)

DEFAULT_METRICS = "epe,bad1,bad2,d1"
VIZ_COLORMAP = "magma"


class _ArgumentParser(argparse.ArgumentParser):
    """Reports bad flags as ValidationError so the entry point prints one line and exits 2."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def parse_args(argv):
    """
    Parse command-line arguments.

    Args:
        argv: List of command-line arguments (typically sys.argv[1:]).

    Returns:
        argparse.Namespace with parsed arguments.

    Raises:
        ValidationError: On unknown commands, missing or malformed flags.
    """
    parser = _ArgumentParser(
        prog="granular-stereo",
        description="Granular Stereo - stereo matching with multi-granularity features "
                    "and local-global cost volumes",
    )
    parser.add_argument("--version", action="store_true", help="Show version and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)

    seed_help = f"Random seed (default: ${SEED_ENV_VAR} or 0)"

    gen = sub.add_parser("gen-data", help="Generate a synthetic stereo dataset")
    gen.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    gen.add_argument("--count", type=int, required=True, help="Number of stereo pairs")
    gen.add_argument("--height", type=int, default=64, help="Image height (default: 64)")
    gen.add_argument("--width", type=int, default=128, help="Image width (default: 128)")
    gen.add_argument("--max-disp", type=float, default=8.0, help="Largest disparity, below width/4 (default: 8)")
    gen.add_argument("--layers", type=int, default=3, help="Layers per scene incl. background (default: 3)")
    gen.add_argument("--seed", type=int, default=None, help=seed_help)

    tr = sub.add_parser("train", help="Train a model on a dataset directory")
    tr.add_argument("--config", type=Path, default=None, help="Configuration file (section.key = value)")
    tr.add_argument("--data", type=Path, required=True, help="Dataset directory")
    tr.add_argument("--steps", type=int, default=None, help="Optimizer steps (overrides the config)")
    tr.add_argument("--out", type=Path, required=True, help="Checkpoint file to write")
    tr.add_argument("--log", type=Path, default=None, help="Metrics log (default: checkpoint path with .jsonl)")
    tr.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume from")
    tr.add_argument("--ablate", action="append", default=[], metavar="FLAG",
                    help="Switch a component off (mgfn, lgcv, lgru or a fine-grained flag); repeatable")
    tr.add_argument("--backbone-weights", type=Path, default=None,
                    help="Checkpoint holding pretrained backbone weights")
    tr.add_argument("--seed", type=int, default=None, help=seed_help)

    ev = sub.add_parser("evaluate", help="Evaluate a checkpoint on a dataset directory")
    ev.add_argument("--ckpt", type=Path, required=True, help="Checkpoint file")
    ev.add_argument("--data", type=Path, required=True, help="Dataset directory")
    ev.add_argument("--iters", type=int, default=None, help="Refinement iterations (default: from config)")
    ev.add_argument("--region", choices=("all", "noc"), default="all", help="Pixels to score (default: all)")
    ev.add_argument("--metrics", default=DEFAULT_METRICS, help=f"Comma-separated metrics (default: {DEFAULT_METRICS})")
    ev.add_argument("--records", type=Path, default=None,
                    help="Line-delimited record file (default: <ckpt>.eval.jsonl)")

    inf = sub.add_parser("infer", help="Predict disparity for one stereo pair")
    inf.add_argument("--ckpt", type=Path, required=True, help="Checkpoint file")
    inf.add_argument("--left", type=Path, required=True, help="Left image")
    inf.add_argument("--right", type=Path, required=True, help="Right image")
    inf.add_argument("--out", type=Path, required=True, help="Output PFM disparity")
    inf.add_argument("--viz", type=Path, default=None, help="Optional color-mapped PNG")
    inf.add_argument("--iters", type=int, default=None, help="Refinement iterations (default: from config)")

    args = parser.parse_args(argv)
    if not args.version and args.command is None:
        parser.error("a command is required (gen-data, train, evaluate, infer)")
    return args


def colorize_disparity(disparity: DisparityMap, max_value: Optional[float] = None) -> np.ndarray:
    """Color-map a disparity grid normalized to [0, max] into (H, W, 3) uint8."""
    values = disparity.values if isinstance(disparity, DisparityMap) else np.asarray(disparity)
    top = float(values.max()) if max_value is None else float(max_value)
    normalized = np.clip(values / top, 0.0, 1.0) if top > 0 else np.zeros_like(values)
    rgba = matplotlib.colormaps[VIZ_COLORMAP](normalized)
    return np.rint(rgba[..., :3] * 255).astype(np.uint8)


def cmd_gen_data(args) -> None:
    from granular_stereo.data.dataset import generate_dataset

    seed = args.seed if args.seed is not None else default_seed()
    names = generate_dataset(
        args.out,
        count=args.count,
        height=args.height,
        width=args.width,
        max_disparity=args.max_disp,
        seed=seed,
        layer_count=args.layers,
    )
    print(f"Wrote {len(names)} stereo pairs to {args.out}")


def _train_configs(args) -> tuple[ModelConfig, TrainConfig]:
    from granular_stereo.config.io import load_config
    from granular_stereo.training.ablation import apply_ablation, disabled_flags

    if args.config is not None:
        model_config, train_config = load_config(args.config)
    else:
        model_config, train_config = ModelConfig(), TrainConfig()
    if args.steps is not None:
        train_config.steps = args.steps
    if args.seed is not None:
        train_config.seed = args.seed
    elif args.config is None:
        train_config.seed = default_seed(train_config.seed)
    if args.ablate:
        model_config = apply_ablation(model_config, disabled_flags(args.ablate))
    return model_config, train_config


def cmd_train(args) -> None:
    from granular_stereo.data.dataset import StereoDataset
    from granular_stereo.encoder.backbone import load_backbone_weights
    from granular_stereo.model import StereoModel
    from granular_stereo.training.trainer import train

    model_config, train_config = _train_configs(args)
    seed_everything(train_config.seed)
    dataset = StereoDataset(args.data)
    model = StereoModel(model_config)
    if args.backbone_weights is not None:
        if not model_config.ablation.multi_granularity:
            raise ValidationError("--backbone-weights needs the transformer encoder (mgfn is ablated)")
        load_backbone_weights(model.encoder, args.backbone_weights, model_config.encoder.finetune_tail)

    result = train(model, dataset, train_config, args.out, log_path=args.log, resume=args.resume)
    final = result.losses[-1] if result.losses else float("nan")
    print(f"Trained to step {result.step}; final loss {final:.4f}; checkpoint {result.checkpoint_path}")


def cmd_evaluate(args) -> None:
    from granular_stereo.data.dataset import StereoDataset
    from granular_stereo.evaluation.metrics import parse_metric_names
    from granular_stereo.evaluation.report import evaluate_model
    from granular_stereo.training.checkpoint import load_checkpoint

    metric_names = parse_metric_names(args.metrics)
    _check_iters(args.iters)
    model, _ = load_checkpoint(args.ckpt)
    dataset = StereoDataset(args.data)
    report = evaluate_model(model, dataset.samples(), metric_names, args.region, args.iters)
    print(report.render(), end="")
    records = args.records or args.ckpt.with_suffix(".eval.jsonl")
    report.write_records(records)


def cmd_infer(args) -> None:
    from granular_stereo.data.images import read_image, write_rgb
    from granular_stereo.data.pfm import write_pfm
    from granular_stereo.model import predict_disparity
    from granular_stereo.training.checkpoint import load_checkpoint

    _check_iters(args.iters)
    left, right = read_image(args.left), read_image(args.right)
    if left.shape != right.shape:
        raise ShapeMismatch(f"Left image {left.shape[1:]} and right image {right.shape[1:]} differ in size")
    model, _ = load_checkpoint(args.ckpt)
    disparity = predict_disparity(model, left, right, args.iters)
    write_pfm(disparity.values, args.out)
    print(f"Wrote disparity to {args.out}")
    if args.viz is not None:
        write_rgb(colorize_disparity(disparity), args.viz)
        print(f"Wrote visualization to {args.viz}")


def _check_iters(iters: Optional[int]) -> None:
    if iters is not None and iters < 1:
        raise ValidationError(f"Invalid --iters: {iters}. Must be >= 1.")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
}


def run_from_args(args):
    """
    Run the appropriate action based on parsed arguments.

    Args:
        args: Parsed arguments from parse_args().
    """
    if args.version:
        from granular_stereo import __version__
        print(f"granular-stereo version {__version__}")
        return

    logger.info(f"Running command: {args.command}")
    COMMANDS[args.command](args)
