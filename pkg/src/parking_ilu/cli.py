"""``parking-ilu`` command line.

Exit codes: 0 success, 1 usage or config error, 2 class validation failure,
3 numerical or simulation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from . import __version__
from ._numerics import NumericalError
from .bounds import bound_report
from .config import ConfigError, RunConfig, load_config
from .harness import (
    ExperimentConfig,
    brute_force_threshold,
    estimator_mse_sweep,
    fit_log_growth,
    fmt,
    run_experiment,
    write_csv_atomic,
)
from .intensity import ClassEmptyError, validate_class
from .oracle import optimal_threshold
from .simulate import SimulationError, StreamFactory, sample_path

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Invalid(Exception):
    pass


def _print_csv(header, rows, out=None):
    out = out or sys.stdout
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def _require_valid(cfg: RunConfig):
    report = validate_class(cfg.model)
    if not report.passed:
        raise _Invalid(report.message)
    return report


def cmd_validate(cfg: RunConfig, args) -> int:
    report = validate_class(cfg.model)
    status = "pass" if report.passed else "fail"
    prop = "" if report.violated_property is None else str(report.violated_property)
    witness = "" if report.witness is None else fmt(report.witness)
    _print_csv(["status", "method", "violated_property", "witness", "message"],
               [(status, report.method, prop, witness, report.message)])
    if not cfg.env.is_nonempty:
        print(f"warning: class M(L) is empty for S={cfg.env.S}, L={cfg.env.L}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_solve(cfg: RunConfig, args) -> int:
    _require_valid(cfg)
    r = optimal_threshold(cfg.model, cfg.tolerances)
    _print_csv(["b_star", "tail_mean", "expected_cost_at_star", "residual"],
               [(r.b_star, r.tail_mean, r.expected_cost_at_star, r.residual)])
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    _require_valid(cfg)

    def rows():
        for rep in range(cfg.replications):
            factory = StreamFactory(cfg.seed, rep)
            for n in range(cfg.T + 1):
                p = sample_path(cfg.model, cfg.threshold, factory.generator(n))
                yield (rep, n, p.threshold, p.stop_position, p.jump_positions.size,
                       ";".join(fmt(x) for x in p.jump_positions))

    path = write_csv_atomic(os.path.join(cfg.directory, "simulate.csv"),
                            ["replication", "round", "threshold", "stop", "jump_count", "jumps"], rows())
    print(path)
    return EXIT_OK


def cmd_run(cfg: RunConfig, args) -> int:
    _require_valid(cfg)
    config = ExperimentConfig(cfg.model, cfg.T, cfg.replications, cfg.seed, cfg.policy, cfg.tolerances)
    result = run_experiment(config, jobs=args.jobs)
    fit = fit_log_growth(result.curve.cumulative) if cfg.T >= 100 else None
    for path in result.write_csvs(cfg.directory, rounds=True, fit=fit):
        print(path)
    print(f"cumulative_regret,{fmt(result.curve.cumulative[-1])}", file=sys.stderr)
    return EXIT_OK


def cmd_mse(cfg: RunConfig, args) -> int:
    _require_valid(cfg)
    rows = estimator_mse_sweep(cfg.model, cfg.n_values, cfg.mse_replications, cfg.seed, cfg.tolerances)
    path = write_csv_atomic(
        os.path.join(cfg.directory, "mse.csv"),
        ["n", "quantity", "empirical_mse", "se", "theory", "kind", "ratio"],
        ((r.n, r.quantity, r.empirical, r.se, r.theory, r.kind, r.ratio) for r in rows),
    )
    print(path)
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, args) -> int:
    report = bound_report(cfg.env, cfg.model if validate_class(cfg.model).passed else None, cfg.tolerances)
    items = [(k, "" if v is None else fmt(v)) for k, v in report.as_dict().items()]
    _print_csv(["quantity", "value"], items)
    write_csv_atomic(os.path.join(cfg.directory, "bounds.csv"), ["quantity", "value"], items)
    return EXIT_OK


def cmd_brute(cfg: RunConfig, args) -> int:
    _require_valid(cfg)
    res = brute_force_threshold(cfg.model, cfg.grid_step, cfg.paths_per_point, cfg.seed)
    write_csv_atomic(os.path.join(cfg.directory, "brute.csv"), ["b", "mean_abs_stop", "se"],
                     zip(res.grid, res.costs, res.ses))
    _print_csv(["b_brute", "cost", "ci_halfwidth"], [(res.b, res.cost, res.ci_halfwidth)])
    return EXIT_OK


COMMANDS = {
    "validate": (cmd_validate, "check the intensity against the class M(L)"),
    "solve": (cmd_solve, "optimal threshold as one CSV row"),
    "simulate": (cmd_simulate, "sample paths at the configured threshold"),
    "run": (cmd_run, "learning experiment with regret curve"),
    "mse": (cmd_mse, "estimator mean-square-error sweep"),
    "bounds": (cmd_bounds, "explicit regret constants"),
    "brute": (cmd_brute, "Monte Carlo grid search for the threshold"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parking-ilu", description="Learning the parking threshold.")
    parser.add_argument("--version", action="version", version=f"parking-ilu {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("config", help="INI experiment configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    handler = COMMANDS[args.command][0]
    try:
        return handler(cfg, args)
    except (_Invalid, ClassEmptyError) as e:
        print(f"validation failed: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, SimulationError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
