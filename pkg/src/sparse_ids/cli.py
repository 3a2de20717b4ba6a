"""Command-line entry point: ``run``, ``offline-check`` and ``bounds``."""
from __future__ import annotations

import argparse
import logging
import sys

from .analysis import BoundInputs, delta_branch, delta_cap, exploratory_branch, regret_bound
from .errors import NumericalError
from .experiments import ConfigError, ExperimentConfig, run_experiment, run_offline_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad usage, which matches EXIT_CONFIG.
    parser = argparse.ArgumentParser(prog="sparse-ids", description="Sparse linear bandit experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a hard_instance or gaussian_actions experiment")
    run.add_argument("--config", required=True, help="JSON config or a manifest.json from a previous run")
    run.add_argument("--threads", type=_positive_int, default=1, help="worker processes (default 1)")
    run.add_argument("--output", default=None, help="output directory (overrides the config)")

    off = sub.add_parser("offline-check", help="sample the sparse posterior on the fixed regression problem")
    off.add_argument("--config", required=True)
    off.add_argument("--output", default=None)

    bounds = sub.add_parser("bounds", help="print regret-bound reference values")
    bounds.add_argument("--n", type=_positive_int, required=True)
    bounds.add_argument("--d", type=_positive_int, required=True)
    bounds.add_argument("--s", type=_positive_int, required=True)
    bounds.add_argument("--K", type=_positive_int, required=True)
    bounds.add_argument("--cmin", type=_positive_float, default=1.0)
    bounds.add_argument("--metric-constant", type=_positive_float, default=1.0)
    return parser


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    result = run_experiment(config, threads=args.threads, output_dir=args.output)
    for name, path in sorted(result.files.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_offline(args) -> int:
    config = ExperimentConfig.load(args.config)
    files = run_offline_check(config, output_dir=args.output)
    print(f"summary: {files['summary']}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    inputs = BoundInputs(args.n, args.d, args.s, args.K, args.cmin, args.metric_constant)
    print(f"delta={delta_cap(inputs)!r}")
    print(f"delta_branch={delta_branch(inputs)}")
    print(f"bound_arbitrary={regret_bound(inputs, 'arbitrary')!r}")
    print(f"bound_exploratory={regret_bound(inputs, 'exploratory')!r}")
    print(f"exploratory_branch={exploratory_branch(inputs)}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "offline-check": _cmd_offline, "bounds": _cmd_bounds}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        # BoundInputs and other argument checks
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
