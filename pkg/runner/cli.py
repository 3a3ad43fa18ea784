"""
Command line entry point.

    magdecay <subcommand> --config <path> [--out <dir>] [--grid-n N] [--box-l L] [--plots]

Exit codes: 0 success, 1 error (nothing written), 2 failed acceptance check.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

from src.errors import MagdecayError
from src.settings import worker_count

from .config import EXPERIMENTS, load_config
from .experiments import run_experiment
from .reports import write_outputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog='magdecay',
        description='Dispersive decay experiments for magnetic Schrödinger operators.')
    parser.add_argument('subcommand', choices=EXPERIMENTS + ('all',), help='experiment to run')
    parser.add_argument('--config', required=True, help='JSON experiment configuration')
    parser.add_argument('--out', default=None, help='output directory (default: the config\'s "output")')
    parser.add_argument('--grid-n', type=int, default=None, help='grid points per axis (power of two)')
    parser.add_argument('--box-l', type=float, default=None, help='box side length')
    parser.add_argument('--plots', action='store_true', help='write SVG plots')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    started = datetime.now(timezone.utc)

    try:
        config = load_config(args.config).with_grid(args.grid_n, args.box_l)
        settings = config.settings()
    except MagdecayError as exc:
        print(f"magdecay: configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    names = EXPERIMENTS if args.subcommand == 'all' else (args.subcommand,)
    try:
        with ThreadPoolExecutor(max_workers=min(len(names), worker_count())) as pool:
            results = list(pool.map(lambda name: run_experiment(name, config, settings), names))
    except (MagdecayError, OSError) as exc:
        logger.debug("experiment failed", exc_info=True)
        print(f"magdecay: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    out_dir = args.out or config.output
    try:
        write_outputs(out_dir, config, settings, results, plots=args.plots, started=started,
                      argv=['magdecay'] + list(sys.argv[1:] if argv is None else argv))
    except OSError as exc:
        print(f"magdecay: cannot write reports to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    for result in results:
        print(result.line())
    if any(result.passed is False for result in results):
        return EXIT_FAILED
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
