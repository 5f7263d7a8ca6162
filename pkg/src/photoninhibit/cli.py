"""``photoninhibit <command> --config run.ini --seed N --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 input/output error.
"""
import argparse
import logging
import sys
from dataclasses import replace

from . import __version__, experiments
from .config import EXPERIMENTS, ConfigError, RunConfig, load_config, validate
from .io import FormatError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

HELP = {
    "curves": "efficiency metric curves over an exposure grid",
    "static": "static-image policy runs with equal-SSIM detection deltas",
    "edge": "edge-detection F-score versus detections per pixel",
    "bracket": "saturation look-ahead study and bracket lookup table",
    "allocate": "oracle versus uniform measurement allocation",
    "sweep": "threshold x holdoff grid of score policies",
}

log = logging.getLogger("photoninhibit")


def _u64(s):
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="photoninhibit", description="SPAD photon-inhibition simulations")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", help="INI run configuration (defaults used if omitted)")
        s.add_argument("--seed", type=_u64, help="override the configured seed")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--workers", type=int, help="parallel runs (results do not depend on this)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = replace(cfg, experiment=args.command)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return validate(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s into %s (seed %d)", cfg.experiment, args.out, cfg.seed)
    try:
        experiments.run(cfg, args.out)
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
