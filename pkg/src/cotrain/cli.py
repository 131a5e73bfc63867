"""Command-line driver.

Subcommands:
    theory      analytic per-generation metric trajectories for one config
    limits      closed-form limits plus convergence certificate (exit 2 if
                the feedback map diverges)
    mc          seeded Monte Carlo vs analytic-moment comparison report
    efficiency  relative-efficiency sweep over an alpha grid for one config
    figure      run a named preset (fig3 | fig4 | fig5)
    check       convergence certificate only

Exit codes: 0 success, 1 validation/usage error, 2 numerical divergence
(a limit was requested where the spectral radius is >= 1).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, experiments, scenarios
from .errors import ConditioningError, CotrainError, DivergenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2

DEFAULT_EFFICIENCY_ALPHAS = tuple(round(0.05 * i, 2) for i in range(20))


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario config JSON file")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--reps", type=int, default=2000, help="Monte Carlo replications")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="record output format"
    )

    parser = _Parser(prog="cotrain", description=__doc__, parents=[common],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"cotrain {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser("theory", parents=[common], help="analytic trajectory table")
    sub.add_parser("limits", parents=[common], help="closed-form limits + certificate")
    sub.add_parser("mc", parents=[common], help="Monte Carlo comparison report")
    sub.add_parser("efficiency", parents=[common], help="relative-efficiency alpha sweep")
    fig = sub.add_parser("figure", parents=[common], help="run a named preset")
    fig.add_argument("name", choices=scenarios.PRESET_NAMES, help="preset name")
    sub.add_parser("check", parents=[common], help="convergence certificate only")
    return parser


def _load_config(args) -> scenarios.ScenarioConfig:
    if args.config is None:
        raise _UsageError(f"'{args.command}' requires --config <path>")
    config = scenarios.load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("cotrain: a command is required", file=sys.stderr)
            return EXIT_USAGE
        return _dispatch(args)
    except _UsageError as exc:
        print(f"cotrain: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, ConditioningError) as exc:
        print(f"cotrain: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CotrainError, OSError, json.JSONDecodeError) as exc:
        print(f"cotrain: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args) -> int:
    out: Path = args.out
    if args.command == "theory":
        config = _load_config(args)
        table = experiments.run_experiment(config, out, fmt=args.format)
        print(f"wrote {len(table.records)} records to {out / ('trajectory.' + args.format)}")
        return EXIT_OK
    if args.command == "limits":
        config = _load_config(args)
        report = experiments.limits_report(config)
        _write_json(out / "limits.json", report)
        print(json.dumps(report["certificate"], indent=1))
        print(f"wrote {out / 'limits.json'}")
        return EXIT_OK
    if args.command == "mc":
        config = _load_config(args)
        if args.reps < 2:
            raise _UsageError("--reps must be at least 2")
        report = experiments.mc_comparison_report(
            config, n_reps=args.reps, base_seed=config.seed
        )
        _write_json(out / "mc_report.json", report)
        print(
            f"max |z| = {report['max_abs_z']:.3f}, "
            f"final cov rel err = {report['final_cov_rel_err']:.4f}"
        )
        print(f"wrote {out / 'mc_report.json'}")
        return EXIT_OK
    if args.command == "efficiency":
        config = _load_config(args)
        beta = config.beta_schedule[0] if config.horizon >= 1 else config.beta0
        table = experiments.efficiency_table(
            config, DEFAULT_EFFICIENCY_ALPHAS, (beta,)
        )
        data_path = out / ("efficiency." + args.format)
        out.mkdir(parents=True, exist_ok=True)
        if args.format == "csv":
            table.write_csv(data_path)
        else:
            table.write_json(data_path)
        table.write_manifest(out / "efficiency_manifest.json")
        print(f"wrote {len(table.records)} records to {data_path}")
        return EXIT_OK
    if args.command == "figure":
        preset = scenarios.get_preset(args.name, seed=args.seed)
        table = experiments.run_experiment(preset, out, fmt=args.format)
        print(f"wrote {len(table.records)} records to {out / (args.name + '.' + args.format)}")
        return EXIT_OK
    if args.command == "check":
        config = _load_config(args)
        report = experiments.certificate_report(config)
        print(json.dumps(report, indent=1))
        return EXIT_OK
    raise _UsageError(f"unknown command {args.command!r}")  # pragma: no cover


def main() -> None:  # console-script entry point
    sys.exit(cli_main())


if __name__ == "__main__":  # pragma: no cover
    main()
