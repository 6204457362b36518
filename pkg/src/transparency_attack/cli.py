"""Command-line entry point.

Results go to stdout as ``key=value`` lines, diagnostics to stderr. Exit
statuses: 0 ok/clean, 1 suspicious, 2 attack likely, 3 report failure,
64 usage, 70 numeric failure, 74 I/O or undecodable input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import imgio
from .blend import BlendConfig
from .compositor import AttackImage, ViewerModel, file_views, render
from .detector import ALPHA_VARIANCE_THRESHOLD, DIVERGENCE_THRESHOLD, scan
from .errors import ImageFormatError
from .metrics import HUMAN_THRESHOLD, MACHINE_THRESHOLD, evaluate
from .poison import Mode, PoisonJob, craft_files, run_job

EX_OK = 0
EX_REPORT_FAILED = 3
EX_USAGE = 64
EX_SOFTWARE = 70
EX_IOERR = 74

log = logging.getLogger("transparency_attack")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _size(text: str):
    try:
        return imgio.parse_size(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _blend_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--size", type=_size, default=imgio.DEFAULT_SIZE, metavar="WxH", help="working size (default 150x150)")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01, help="Adam learning rate")
    p.add_argument("--scale", type=float, default=0.5, help="background scale stored in RGB")
    p.add_argument("--log-interval", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transparency-attack", description="Craft, score and detect alpha-layer transparency attacks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("craft", help="craft one attack PNG")
    p.add_argument("--target", required=True, help="image people should see")
    p.add_argument("--background", required=True, help="image hidden in the RGB channels")
    p.add_argument("--out", required=True)
    _blend_options(p)

    p = sub.add_parser("poison", help="craft attacks for every image in a directory")
    p.add_argument("--targets", required=True, type=Path, metavar="DIR")
    p.add_argument("--backgrounds", required=True, nargs="+", metavar="FILE")
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--out", required=True, type=Path, metavar="DIR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tag", default="_blended")
    p.add_argument("--workers", type=int, default=1)
    _blend_options(p)

    p = sub.add_parser("flatten", help="render a file the way one viewer sees it")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--viewer", required=True, help="light, dark, drop or b=<luminance>")
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="scan a file for a hidden alpha-layer image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--v-alpha", type=float, default=ALPHA_VARIANCE_THRESHOLD)
    p.add_argument("--v-div", type=float, default=DIVERGENCE_THRESHOLD)

    p = sub.add_parser("report", help="score an attack against its source images")
    p.add_argument("--attack", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--size", type=_size, default=None, metavar="WxH", help="resize sources first (default: native size)")
    p.add_argument("--scale", type=float, default=0.5)
    p.add_argument("--human-threshold", type=float, default=HUMAN_THRESHOLD)
    p.add_argument("--machine-threshold", type=float, default=MACHINE_THRESHOLD)
    return parser


def _config(args, **extra) -> BlendConfig:
    try:
        return BlendConfig(
            size=args.size,
            steps=args.steps,
            learning_rate=args.lr,
            background_scale=args.scale,
            log_interval=args.log_interval,
            **extra,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_craft(args) -> int:
    cfg = _config(args)
    _, trace, report = craft_files(args.target, args.background, args.out, cfg)
    for step, loss in trace.entries:
        print(f"step={step} loss={loss!r}")
    print(report.to_text())
    print(f"output={args.out}")
    return EX_OK


def cmd_poison(args) -> int:
    cfg = _config(args, filename_tag=args.tag, rng_seed=args.seed)
    try:
        job = PoisonJob(args.targets, args.backgrounds, Mode(args.mode), args.out, cfg, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not args.targets.is_dir():
        raise UsageError(f"not a directory: {args.targets}")
    manifest = run_job(job)
    print(f"processed={len(manifest.records)}")
    print(f"skipped={manifest.skipped}")
    print(f"failed={manifest.failed}")
    print(f"mean_final_loss={manifest.mean_final_loss!r}")
    print(f"manifest={args.out / 'poison_manifest.txt'}")
    return EX_OK


def cmd_flatten(args) -> int:
    try:
        viewer = ViewerModel.parse(args.viewer)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    human, machine, alpha = file_views(args.input)
    if alpha is None:
        out = machine
    else:
        out = render(AttackImage.from_gray(machine, alpha), viewer)
    imgio.save_grayscale_png(out, args.out)
    print(f"output={args.out}")
    return EX_OK


def cmd_inspect(args) -> int:
    result = scan(args.input, args.v_alpha, args.v_div)
    print(result.to_text())
    return int(result.verdict)


def cmd_report(args) -> int:
    try:
        cfg = BlendConfig(size=args.size or imgio.DEFAULT_SIZE, background_scale=args.scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    attack = AttackImage.load(args.attack)
    target = imgio.load_grayscale(args.target, args.size)
    background = imgio.load_grayscale(args.background, args.size)
    if not (attack.shape == target.shape == background.shape):
        raise UsageError(
            f"dimension mismatch: attack {attack.shape}, target {target.shape}, background {background.shape}"
        )
    report = evaluate(attack, target, background, cfg, args.human_threshold, args.machine_threshold)
    print(report.to_text())
    return EX_OK if report.success else EX_REPORT_FAILED


COMMANDS = {
    "craft": cmd_craft,
    "poison": cmd_poison,
    "flatten": cmd_flatten,
    "inspect": cmd_inspect,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (OSError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_IOERR
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
