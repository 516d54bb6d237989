"""Command line entry point for running benchmarks and the test suite."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import emit_outputs, make_config, parse_config_file, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Adaptive-filter benchmark runner.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark scenario")
    run_p.add_argument("--config", type=Path, default=None,
                       help="flat key = value config file")
    run_p.add_argument("--preset", choices=("desk", "paper"), default="desk",
                       help="base parameter preset (default: desk)")
    run_p.add_argument("--scenario", type=int, choices=(1, 2), default=None,
                       help="which scenario to run")
    run_p.add_argument("--seed", type=int, default=None,
                       help="master seed for streams and methods")
    run_p.add_argument("--trials", type=int, default=None,
                       help="number of independent trials")
    run_p.add_argument("--iters", type=int, default=None,
                       help="iterations per trial")
    run_p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: 1, serial)")
    run_p.add_argument("--methods", type=str, default=None,
                       help="comma separated method list")
    run_p.add_argument("--out", type=Path, default=Path("bench_out"),
                       help="output directory (default: ./bench_out)")

    verify_p = sub.add_parser("verify", help="run the package test suite")
    verify_p.add_argument("--tests-dir", type=Path, default=None,
                          help="test directory (default: ./tests)")
    verify_p.add_argument("pytest_args", nargs="*",
                          help="extra arguments passed to pytest")
    return parser


def _config_from_args(args) -> "RunConfig":
    overrides = {}
    if args.config is not None:
        overrides.update(parse_config_file(args.config))
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if args.iters is not None:
        overrides["n_iters"] = args.iters
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.methods is not None:
        overrides["methods"] = tuple(
            m.strip() for m in args.methods.split(",") if m.strip())
    return make_config(preset=args.preset, **overrides)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_scenario(cfg)
    paths = emit_outputs(result, args.out)
    tail = max(1, cfg.n_iters // 10)
    print(f"scenario {cfg.scenario}: {cfg.n_trials} trials x "
          f"{cfg.n_iters} iterations, seed {cfg.seed}")
    for i, method in enumerate(result.methods):
        final = float(result.nmsd_db[i, -tail:].mean())
        aborted = result.aborted[method]
        note = f" ({aborted} aborted)" if aborted else ""
        print(f"  {method:<12s} final NMSD {final:8.2f} dB{note}")
    print(f"wrote {paths['results']}, {paths['plot']}, {paths['manifest']}")
    return 0


def _cmd_verify(args) -> int:
    try:
        import pytest
    except ImportError:
        print("pytest is required for 'bench verify'; "
              "install the [test] extra", file=sys.stderr)
        return 2
    tests_dir = args.tests_dir
    if tests_dir is None:
        tests_dir = Path("tests")
    if not tests_dir.exists():
        print(f"test directory {tests_dir} not found", file=sys.stderr)
        return 2
    return int(pytest.main([str(tests_dir), "-q", *args.pytest_args]))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
