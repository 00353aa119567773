"""Command-line interface.

Subcommands: generate-scenario, run, compare, evaluate. Exit codes: 0 on
success, 2 for configuration errors, 3 for runtime failures, 4 for
comparison mismatches. The output root can be overridden with the
FLOODSAT_OUT_ROOT environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_MISMATCH = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodsat",
        description="Agile-constellation flood observation simulator.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-scenario", help="generate scenario truth/estimate fields")
    gen.add_argument("--config", required=True, help="scenario config YAML")
    gen.add_argument("--out", required=True, help="output scenario directory")
    gen.add_argument("--seed", type=int, default=None, help="override config seed")

    run_p = sub.add_parser("run", help="execute one simulation run")
    run_p.add_argument("--config", required=True, help="run config YAML")
    run_p.add_argument("--out", required=True, help="output run directory")
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--scenario", default=None, help="override scenario directory")

    cmp_p = sub.add_parser("compare", help="run several configs on one scenario and compare")
    cmp_p.add_argument("configs", nargs="+", help="two or more run config YAMLs")
    cmp_p.add_argument("--out", required=True, help="output directory for runs and table")

    ev = sub.add_parser("evaluate", help="recompute metrics or predictor error curves")
    ev.add_argument("--run-dir", default=None, help="existing run directory to re-score")
    ev.add_argument("--scenario", default=None, help="scenario directory (error curve mode)")
    ev.add_argument("--error-curve", action="store_true", help="emit predictor error grid")
    ev.add_argument("--out", default="error_curve.csv", help="error curve CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    from . import harness
    from .evaluation import ComparisonMismatchError

    try:
        if args.command == "generate-scenario":
            scenario = harness.generate_scenario_cmd(args.config, args.out, args.seed)
            print(
                f"scenario: {len(scenario.gp_ids)} grid points, "
                f"{scenario.n_slots} slots, hash {scenario.content_hash()}"
            )
            for rid, ratio in sorted(scenario.region_precip_ratios.items()):
                print(f"  region {rid}: initial/true precipitation ratio {ratio:.3f}")
        elif args.command == "run":
            metrics = harness.run_cmd(args.config, args.out, args.seed, args.scenario)
            print(json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
        elif args.command == "compare":
            table = harness.compare_cmd(args.configs, args.out)
            _print_comparison(table)
        elif args.command == "evaluate":
            if args.error_curve:
                if not args.scenario:
                    raise ConfigError("--error-curve requires --scenario")
                rows = harness.evaluate_error_curve_cmd(args.scenario, args.out)
                print(f"{len(rows)} grid cells written to {args.out}")
            elif args.run_dir:
                summary = harness.evaluate_run_cmd(args.run_dir)
                print(json.dumps(summary, indent=2, sort_keys=True))
            else:
                raise ConfigError("evaluate requires --run-dir or --error-curve --scenario")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComparisonMismatchError as exc:
        print(f"comparison mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logging.getLogger(__name__).exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _print_comparison(table: list[dict]) -> None:
    header = (
        f"{'label':<24} {'total':>12} {'Δtotal%':>9} {'per-obs':>10} "
        f"{'Δper-obs%':>10} {'runtime_s':>10} {'rt/horizon':>11} {'best':>5}"
    )
    print(header)
    print("-" * len(header))
    for r in table:
        print(
            f"{r['label']:<24} {r['total_flood_magnitude']:>12.4f} "
            f"{r['total_delta_pct']:>9.2f} {r['per_observation']:>10.5f} "
            f"{r['per_observation_delta_pct']:>10.2f} "
            f"{r['max_modeled_runtime_s']:>10.3f} {r['runtime_per_unit_horizon']:>11.6f} "
            f"{'*' if r['is_best'] else '':>5}"
        )


if __name__ == "__main__":
    sys.exit(main())
