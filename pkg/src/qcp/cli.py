"""Command-line entry point: ``qcp run`` and ``qcp compare``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .harness import ConfigError, compare, format_comparison, load_config, read_metrics, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train every (algorithm, seed) of a config")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")
    run.add_argument("--trace", action="store_true", help="write per-search trace files")
    run.add_argument("--render", action="store_true", help="write ASCII renderings of executed states")
    cmp = sub.add_parser("compare", help="compare metric files")
    cmp.add_argument("files", nargs="+")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "run":
        if args.workers < 1:
            print("error: --workers must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        try:
            config = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            paths = run_experiment(config, args.workers, args.trace, args.render)
        except Exception as exc:
            print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"wrote {len(paths)} metric files and summary.tsv to {config.output}")
        return EXIT_OK

    try:
        rows = read_metrics(args.files)
    except OSError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not rows:
        print("error: no metric rows in the given files", file=sys.stderr)
        return EXIT_CONFIG
    print(format_comparison(compare(rows)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
