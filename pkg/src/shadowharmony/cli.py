"""Command-line entry points: ``harmonize`` and ``eval``."""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .exceptions import HarmonizeError
from .imaging import read_png, write_png
from .masks import read_mask, write_mask
from .pipeline import PipelineConfig, estimate_correction, apply_correction, load_config, save_config
from .validation import check_same_shape

logger = logging.getLogger("shadowharmony")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _png_depth(path):
    # bit depth sits at byte 24 of a PNG (signature + IHDR length/type + width + height)
    with open(path, "rb") as fh:
        head = fh.read(25)
    return 16 if len(head) == 25 and head[24] == 16 else 8


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _model_list(text):
    models = _int_list(text)
    if any(m not in range(5) for m in models):
        raise argparse.ArgumentTypeError(f"models must lie in 0..4, got {text!r}")
    return models


def _range_list(text):
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [n for n in names if n not in ("narrow", "middle", "wide")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown range preset(s): {', '.join(bad)}")
    return names


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shadowharmony",
        description="Harmonize the color and texture of a de-shadowed image region.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    h = sub.add_parser("harmonize", help="correct a shadow-removal result")
    h.add_argument("--input", required=True, type=Path, help="original image with the shadow (PNG)")
    h.add_argument("--initial", required=True, type=Path, help="initial shadow-removal result (PNG)")
    h.add_argument("--output", required=True, type=Path, help="where to write the corrected image (PNG)")
    h.add_argument("--mask", type=Path, help="correction mask (PNG, white = correct)")
    h.add_argument("--config", type=Path, help="key=value parameter file")
    h.add_argument("--dump-debug", type=Path, metavar="DIR", help="write intermediate images, maps and config")
    h.add_argument("--seed", type=int, help="random seed (default 0)")
    h.add_argument("--threads", type=_positive_int, help="worker threads (1 is bit-reproducible)")
    h.add_argument("--model", type=int, choices=range(5), help="channel model 0..4")
    h.set_defaults(func=cmd_harmonize)

    e = sub.add_parser("eval", help="run the synthetic residual-shadow study")
    e.add_argument("--out-dir", required=True, type=Path, help="directory for the CSV and images")
    e.add_argument("--alphas", type=_float_list, default=(0.2, 0.5), help="residual blend factors")
    e.add_argument("--noise", type=_float_list, default=(0.0,), help="noise standard deviations")
    e.add_argument("--models", type=_model_list, default=(0,), help="channel models")
    e.add_argument("--ranges", type=_range_list, default=("middle",), help="narrow, middle and/or wide")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--config", type=Path, help="key=value parameter file")
    e.set_defaults(func=cmd_eval)
    return parser


def _effective_config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {k: getattr(args, k) for k in ("seed", "threads", "model") if getattr(args, k, None) is not None}
    return cfg.replace(**overrides)


def cmd_harmonize(args):
    cfg = _effective_config(args)
    orig = read_png(args.input)
    initial = read_png(args.initial)
    check_same_shape(orig, initial, ("input", "initial"))
    mask = read_mask(args.mask) if args.mask else None
    dump = args.dump_debug
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)
        save_config(dump / "config.txt", cfg)
    correction = estimate_correction(orig, initial, mask, cfg, dump)
    result = apply_correction(initial, correction, cfg)
    if dump is not None:
        write_mask(dump / "mask.png", correction.mask)
        write_png(dump / "synthesized.png", correction.synthesized)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_png(args.output, result, bits=_png_depth(args.initial))
    logger.info("wrote %s (%d pixels corrected)", args.output, correction.mask.count())
    return EXIT_OK


def cmd_eval(args):
    from .evaluation import run_study

    cfg = load_config(args.config) if args.config else PipelineConfig()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    report = run_study(args.alphas, args.noise, args.models, args.ranges, args.seed, cfg, out_dir=args.out_dir)
    (args.out_dir / "results.csv").write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_FAILURE if any(r.failed for r in report.rows) else EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (HarmonizeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
