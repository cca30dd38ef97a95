"""Command-line entry point.

    hk-expect run <config.json> [--out PATH] [--format csv|jsonl] [--workers K] [--seed S]
    hk-expect reproduce <scenario> [--out PATH] [--format csv|jsonl] [--workers K]

Exit codes: 0 success, 2 configuration error, 3 propagation blow-up under
the abort policy.  HK_EXPECT_WORKERS sets the default worker count.
"""

from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig
from .errors import ConfigError, PropagationError
from .harness import SCENARIOS, emit_results, render_results, reproduce_figure, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hk-expect",
        description="Monte Carlo expectation values in the frozen-Gaussian approximation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("config", help="path to the experiment config (JSON)")
    run.add_argument("--out", help="output path (default: the config's `output`, else stdout)")
    run.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    run.add_argument("--workers", type=int, default=None, help="worker processes (default 1 or HK_EXPECT_WORKERS)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")

    rep = sub.add_parser("reproduce", help="rerun a preconfigured desk-scale experiment family")
    rep.add_argument("scenario", choices=SCENARIOS)
    rep.add_argument("--out", help="output path (default stdout)")
    rep.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    rep.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.from_file(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed: must be >= 0")
                config = ExperimentConfig.from_dict({**config.to_dict(), "seed": args.seed})
            if args.workers is not None and args.workers < 1:
                raise ConfigError("--workers: must be >= 1")
            table = run_experiment(config, args.workers)
            out = args.out or config.output
        else:
            if args.workers is not None and args.workers < 1:
                raise ConfigError("--workers: must be >= 1")
            table = reproduce_figure(args.scenario, args.workers)
            out = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PropagationError as exc:
        print(f"propagation error: {exc}", file=sys.stderr)
        return 3
    if out:
        emit_results(table, out, args.format)
        print(f"wrote {len(table)} rows to {out}")
    else:
        sys.stdout.write(render_results(table, args.format))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
