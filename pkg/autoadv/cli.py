"""Command-line entry point: ``autoadv <command> [flags]``."""

import argparse
import logging
import sys

from .analysis.report import pretty_report
from .core.config import load_config
from .core.exceptions import AutoAdvError
from .core.framework import cmd_ablate, cmd_attack, cmd_calibrate, cmd_encoders, cmd_report, cmd_speed, cmd_train

logger = logging.getLogger("autoadv")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# flag -> (config key, argparse options)
FLAGS = {
    "--model": ("model", {"help": "model container path"}),
    "--dataset": ("dataset", {"help": "dataset container path (default: regenerate from the seed)"}),
    "--out": ("out", {"help": "output directory"}),
    "--seed": ("seed", {"type": int}),
    "--count": ("count", {"type": int, "help": "number of images to attack"}),
    "--eps": ("epsilon", {"help": "l-infinity radius, rational (8/255) or decimal"}),
    "--iters": ("iterations", {"type": int}),
    "--c": ("c", {"type": float}),
    "--gamma": ("gamma", {"type": float}),
    "--alpha-start": ("alpha_start", {"type": float}),
    "--alpha-end": ("alpha_end", {"type": float}),
    "--mu": ("mu", {"type": float}),
    "--beta": ("beta", {"type": float}),
    "--enc-lr": ("enc_lr", {"type": float}),
    "--enc-momentum": ("enc_momentum", {"type": float}),
    "--encoder": ("encoder", {"choices": ["fc", "conv"]}),
    "--channel-shared": ("channel_shared", {"action": "store_true"}),
    "--workers": ("workers", {"type": int}),
    "--dump-images": ("dump_images", {"action": "store_true"}),
    "--random-k": ("random_k", {"type": int}),
    "--l1-lambda": ("l1_lambda", {"type": float}),
    "--dataset-size": ("dataset_size", {"type": int}),
    "--image-size": ("image_size", {"type": int}),
    "--channels": ("channels", {"type": int}),
    "--contrast": ("contrast", {"type": float, "help": "mean pattern contrast of the synthetic images"}),
    "--noise": ("noise", {"type": float, "help": "pixel noise of the synthetic images"}),
    "--epochs": ("epochs", {"type": int}),
    "--lr": ("lr", {"type": float}),
    "--accuracy-floor": ("accuracy_floor", {"type": float}),
    "--log-level": ("log_level", {"choices": ["DEBUG", "INFO", "WARNING", "ERROR"]}),
    "--quiet": ("quiet", {"action": "store_true", "help": "no progress bars"}),
}

COMMANDS = {
    "train": "train the toy classifier and write the model container",
    "attack": "attack correctly classified validation images and write a report",
    "ablate": "compare the full method with its four ablations",
    "encoders": "compare fully-connected and convolutional encoders",
    "calibrate": "find the smallest alpha_end that binarizes the mask",
    "speed": "time the attack at two image sizes",
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="YAML config file or a stored report to replay")
    for flag, (key, options) in FLAGS.items():
        shared.add_argument(flag, dest=key, default=argparse.SUPPRESS, **options)

    parser = argparse.ArgumentParser(prog="autoadv", description="Sparse targeted adversarial attacks "
                                     "with a learned binary mask.")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, description in COMMANDS.items():
        commands.add_parser(name, parents=[shared], help=description)
    report = commands.add_parser("report", help="pretty-print a stored report")
    report.add_argument("path")
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper()), format=LOG_FORMAT, force=True)


def run(args: argparse.Namespace) -> None:
    if args.command == "report":
        configure_logging("INFO")
        print(cmd_report(args.path))
        return

    overrides = {key: value for key, value in vars(args).items() if key not in ("command", "config")}
    config = load_config(args.config, overrides)
    configure_logging(config.log_level)

    if args.command == "train":
        history = cmd_train(config)
        print(f"final val accuracy: {history.final_val_accuracy}")
    elif args.command == "attack":
        print(pretty_report(cmd_attack(config)))
    elif args.command == "ablate":
        print(pretty_report(cmd_ablate(config)))
    elif args.command == "encoders":
        print(pretty_report(cmd_encoders(config)))
    elif args.command == "calibrate":
        result = cmd_calibrate(config)
        print(f"alpha_end: {result.alpha_end}")
    elif args.command == "speed":
        summary = cmd_speed(config)
        print(f"seconds per image: {summary['seconds']}  growth: {summary['growth_rate']}%")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (AutoAdvError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
