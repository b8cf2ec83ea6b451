#!/usr/bin/env python3
"""
pectl - Command Line Entry Point
"""
import argparse
import logging
import sys
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from .actions.scenario import (
    EXIT_CONDITION_FAIL,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_PASS,
    EXIT_UNEXPECTED,
    applicable_condition,
    parse_vary,
    run_scenario,
    sweep,
    write_sweep_csv,
)
from .core.analysis import DEFAULT_C1_MAX, design_c1, gain_report
from .core.errors import ConfigError, DivergenceError, InfeasibleGainError, InvalidParameterError
from .core.grid import Grid
from .core.kernel import (
    KernelConfig,
    build_inverse_kernel,
    build_kernel,
    export_csv,
    kernel_bound_Nc1,
    ky_at_zero,
    l2_norm_2d,
    pde_residual,
)
from .utils.config import load_config, with_output
from .utils.utils import format_value
from .views.report import gain_table, render, report_text, sweep_table

logger = logging.getLogger("pectl")


def setup_logging(debug: bool = False, verbose: bool = False) -> None:
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=debug)],
        force=True,
    )


def cmd_kernel(args) -> int:
    grid = Grid(args.n)
    cfg = KernelConfig(c1=args.c1)
    forward = build_kernel(cfg, grid)
    export_csv(forward, args.out)
    if args.inverse:
        export_csv(build_inverse_kernel(cfg, grid, forward), args.inverse)
    print(f"c1 = {format_value(args.c1)}")
    print(f"n_points = {grid.n_points}")
    print(f"picard_iterations = {forward.iterations}")
    print(f"k11 = {format_value(forward.k11)}")
    print(f"pde_residual = {format_value(pde_residual(forward))}")
    print(f"ky_at_zero = {format_value(ky_at_zero(forward))}")
    print(f"l2_norm = {format_value(l2_norm_2d(forward))}")
    print(f"Nc1 = {format_value(kernel_bound_Nc1(args.c1))}")
    return EXIT_PASS


def cmd_check_gains(args) -> int:
    cfg = load_config(args.config)
    c1 = args.c1 if args.c1 is not None else cfg.c1
    if args.target_k1 is not None:
        try:
            c1 = design_c1(cfg.params, args.target_k1, c1_max=args.c1_max)
        except InfeasibleGainError as e:
            print(f"design = infeasible ({e})")
            return EXIT_CONDITION_FAIL
        print(f"design_c1 = {format_value(c1)}")
    report = gain_report(cfg.params, c1)
    if args.table:
        render([gain_table(report)])
    else:
        sys.stdout.write(report_text(report))
    passed, _ = applicable_condition(cfg, report)
    return EXIT_PASS if passed else EXIT_CONDITION_FAIL


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = with_output(cfg, args.out)
    result = run_scenario(cfg)
    if args.table:
        render([gain_table(result.report, result.fit)])
    else:
        sys.stdout.write(report_text(result.report, result.fit))
        print(f"guaranteed_rate = {format_value(result.guaranteed_rate)}")
        if result.equivalence_error is not None:
            print(f"equivalence_error = {format_value(result.equivalence_error)}")
    return result.status


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    key, values = parse_vary(args.vary)
    rows = sweep(cfg, key, values, workers=args.workers)
    render([sweep_table(key, rows)])
    if args.out:
        write_sweep_csv(rows, args.out)
    return max((row.status for row in rows), default=EXIT_PASS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pectl",
        description="Backstepping boundary control for a coupled parabolic-elliptic system",
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="Compute the gain kernel and write it as CSV")
    p.add_argument("--c1", type=float, required=True, help="Design gain c1 > 0")
    p.add_argument("--n", type=int, default=201, help="Grid points (default: 201)")
    p.add_argument("--out", type=Path, default=Path("kernel.csv"), help="Output CSV")
    p.add_argument("--inverse", type=Path, default=None, help="Also write the inverse kernel here")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("check-gains", help="Evaluate the stability conditions for a scenario")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--c1", type=float, default=None, help="Override the scenario c1")
    p.add_argument("--target-k1", type=float, default=None, help="Search the smallest c1 with K1 >= this value")
    p.add_argument("--c1-max", type=float, default=DEFAULT_C1_MAX, help="Upper end of the c1 search")
    p.add_argument("--table", action="store_true", help="Render a table instead of key = value lines")
    p.set_defaults(func=cmd_check_gains)

    p = sub.add_parser("simulate", help="Run a scenario and write its trajectory")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="Override the scenario output path")
    p.add_argument("--table", action="store_true", help="Render a table instead of key = value lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Run a scenario over a range of one parameter")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--vary", required=True, help="key=start:stop:count, e.g. c1=0.1:10:25")
    p.add_argument("--workers", type=int, default=None, help="Thread pool size (default: scenario value)")
    p.add_argument("--out", type=Path, default=None, help="Write the sweep table as CSV")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    """Main entry point for pectl"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.debug, args.verbose)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except InvalidParameterError as e:
        logger.error(f"Invalid parameter: {e}")
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error(f"Simulation diverged: {e}")
        return EXIT_DIVERGENCE
    except KeyboardInterrupt:
        return EXIT_UNEXPECTED
    except Exception as e:
        if args.debug:
            raise
        logger.error(f"Unexpected error: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
