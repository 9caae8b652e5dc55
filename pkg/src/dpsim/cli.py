"""Command-line front door for experiment campaigns and checks.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import AlgoConfig, ConfigError, SystemConfig, parse_config, render_config
from .experiments import (EXPERIMENT_KINDS, ExperimentSpec, cross_product_sweep,
                          default_sweep, emit, run_experiment)
from .figures import render_figures
from .gradcheck import run_grad_check

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

GRAD_CHECK_TOLERANCE = 1e-5

_KIND_BY_COMMAND = {kind.replace("_", "-"): kind for kind in EXPERIMENT_KINDS}


def _add_experiment_parser(subparsers, command: str) -> None:
    p = subparsers.add_parser(command, help=f"run the {command} campaign")
    p.add_argument("--config", type=Path, default=None,
                   help="config file (defaults to built-in parameter set)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", type=Path, default=Path("results"),
                   help="output directory for CSV/JSON/figures")
    p.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2,...",
                   help="sweep axis; repeat for a cross-product grid")
    p.add_argument("--trials", type=int, default=None,
                   help="Monte Carlo trials per sweep point")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads per sweep point")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, emit CSV/JSON only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsim",
        description="Dual-polarized stacked-metasurface HMIMO simulator")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in _KIND_BY_COMMAND:
        _add_experiment_parser(subparsers, command)

    v = subparsers.add_parser("validate-config", help="parse and validate a config file")
    v.add_argument("--config", type=Path, required=True)

    g = subparsers.add_parser("grad-check",
                              help="finite-difference check of the analytic gradients")
    g.add_argument("--instances", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--units", type=int, default=9)
    g.add_argument("--streams-per-pol", type=int, default=1)
    g.add_argument("--layers", type=int, default=2)
    g.add_argument("--tied", action="store_true",
                   help="check the tied single-polarization baseline mode")
    return parser


def _load_configs(path: Path | None) -> tuple[SystemConfig, AlgoConfig]:
    if path is None:
        return SystemConfig(), AlgoConfig()
    return parse_config(path.read_text())


def _parse_sweep_args(sweep_args: list[str]) -> dict[str, list[str]]:
    axes: dict[str, list[str]] = {}
    for arg in sweep_args:
        if "=" not in arg:
            raise ConfigError([f"--sweep expects KEY=V1,V2,..., got {arg!r}"])
        key, values = arg.split("=", 1)
        axes[key.strip()] = [v.strip() for v in values.split(",") if v.strip()]
        if not axes[key.strip()]:
            raise ConfigError([f"--sweep axis {key!r} has no values"])
    return axes


def _run_campaign(args, kind: str) -> int:
    sys_cfg, algo_cfg = _load_configs(args.config)
    if args.seed is not None:
        from dataclasses import replace
        algo_cfg = replace(algo_cfg, master_seed=args.seed)
    axes = _parse_sweep_args(args.sweep)
    sweep = cross_product_sweep(axes) if axes else default_sweep(kind)
    trials = args.trials if args.trials is not None else algo_cfg.monte_carlo_trials
    spec = ExperimentSpec(kind=kind, base_system=sys_cfg, base_algo=algo_cfg,
                          sweep=sweep, trials=trials, threads=args.threads,
                          output_path=str(args.out))
    report = run_experiment(spec)
    paths = emit(report, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    if not args.no_figures:
        for path in render_figures(report, args.out):
            print(f"figure: {path}")
    failed = [p for p in report.points if p.error]
    for point in failed:
        print(f"point {point.index} failed:\n{point.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            sys_cfg, algo_cfg = _load_configs(args.config)
            print(render_config(sys_cfg, algo_cfg), end="")
            print("config OK")
            return EXIT_OK
        if args.command == "grad-check":
            result = run_grad_check(instances=args.instances, seed=args.seed,
                                    units=args.units,
                                    streams_per_pol=args.streams_per_pol,
                                    layers=args.layers, tied=args.tied)
            print(f"instances: {result.instances}")
            print(f"max relative error: {result.max_rel_error:.3e} ({result.worst_case})")
            if result.max_rel_error >= GRAD_CHECK_TOLERANCE:
                print(f"FAIL: exceeds {GRAD_CHECK_TOLERANCE:.0e}", file=sys.stderr)
                return EXIT_RUNTIME
            print(f"OK: below {GRAD_CHECK_TOLERANCE:.0e}")
            return EXIT_OK
        return _run_campaign(args, _KIND_BY_COMMAND[args.command])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        import traceback
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
