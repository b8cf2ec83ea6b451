#!/usr/bin/env python3
"""
pectl - Scenario Actions Module
-----------
Runs a scenario end to end (kernels, simulation, decay fit, CSV) and
sweeps one numeric key across a range of values.
"""
import concurrent.futures
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core import analysis
from ..core.control import ControlMode, Controller, simulate_closed_loop
from ..core.errors import ConfigError, DecayFitError, DivergenceError, InvalidParameterError, MalformedValueError
from ..core.kernel import build_inverse_kernel, build_kernel, forward_transform
from ..core.pde import Trajectory, simulate, simulate_target
from ..utils.config import INTEGER_KEYS, NUMERIC_KEYS, ScenarioConfig, ScenarioMode
from ..utils.utils import format_elapsed, write_rows_csv, write_trajectory_csv
from ..views.report import REPORT_COLUMNS, report_csv_row

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_UNEXPECTED = 1
EXIT_CONDITION_FAIL = 2
EXIT_DIVERGENCE = 3
EXIT_CONFIG = 4

# Fitted rates may fall short of a guaranteed rate by this much.
RATE_RELATIVE_SLACK = 0.05
RATE_ABSOLUTE_SLACK = 0.05
# The audit needs a fit window of at least this many time constants 1/rate.
MIN_AUDIT_TIME_CONSTANTS = 1.0


@dataclass
class ScenarioResult:
    cfg: ScenarioConfig
    report: analysis.GainReport
    fit: Optional[analysis.DecayFit]
    trajectory: Trajectory
    guaranteed_rate: float
    condition_pass: bool
    decay_pass: Optional[bool]
    equivalence_error: Optional[float] = None
    elapsed: float = 0.0

    @property
    def status(self) -> int:
        if not self.condition_pass or self.decay_pass is False:
            return EXIT_CONDITION_FAIL
        return EXIT_PASS


def applicable_condition(cfg: ScenarioConfig, report: analysis.GainReport) -> Tuple[bool, float]:
    """Pass flag and guaranteed rate of the stability condition that covers this mode."""
    if cfg.mode is ScenarioMode.OPEN_LOOP:
        return report.open_loop_pass, report.M
    if cfg.mode is ScenarioMode.OBSERVER_ONLY:
        return report.observer_pass, report.K3
    if cfg.mode is ScenarioMode.OUTPUT_FEEDBACK:
        return report.closed_loop_pass and report.observer_pass, min(report.K1, report.K3)
    return report.closed_loop_pass, report.K1


def _window_settles(fit: analysis.DecayFit, guaranteed: float) -> bool:
    span = fit.window[1] - fit.window[0]
    return guaranteed <= 0.0 or span * guaranteed >= MIN_AUDIT_TIME_CONSTANTS - 1e-9


def _decay_series(cfg: ScenarioConfig, trajectory: Trajectory) -> np.ndarray:
    if cfg.mode is ScenarioMode.OBSERVER_ONLY:
        return trajectory.norm_err_u + trajectory.norm_err_v
    return trajectory.joint_norm()


def _simulate(cfg: ScenarioConfig, forward, inverse):
    grid = cfg.grid
    u0 = cfg.u0.build(grid)
    params = cfg.params
    if cfg.mode is ScenarioMode.OPEN_LOOP:
        return simulate(params, u0, None, cfg.T, cfg.dt, cfg.snapshot_every), None
    if cfg.mode is ScenarioMode.TARGET_SYSTEM:
        ctrl = Controller(forward, ControlMode.STATE_FEEDBACK)
        target = simulate_target(params, forward, inverse, forward_transform(forward, u0), cfg.T, cfg.dt,
                                 cfg.snapshot_every)
        physical = simulate(params, u0, ctrl, cfg.T, cfg.dt, cfg.snapshot_every)
        return target, analysis.equivalence_error(forward, physical, target)
    if cfg.mode is ScenarioMode.OUTPUT_FEEDBACK:
        ctrl = Controller(forward, ControlMode.OUTPUT_FEEDBACK)
    else:
        ctrl = Controller(forward, ControlMode.STATE_FEEDBACK)
    observer_u0 = cfg.observer_u0.build(grid) if cfg.mode.has_observer else None
    traj = simulate_closed_loop(params, ctrl, u0, cfg.T, cfg.dt, cfg.snapshot_every,
                                observer_u0=observer_u0, noise_std=cfg.noise_std, seed=cfg.seed)
    return traj, None


def run_scenario(cfg: ScenarioConfig, write_csv: bool = True) -> ScenarioResult:
    """Gain report, simulation, decay fit and trajectory CSV for one scenario.

    DivergenceError propagates to the caller.
    """
    started = time.monotonic()
    report = analysis.gain_report(cfg.params, cfg.c1)
    condition_pass, guaranteed = applicable_condition(cfg, report)

    forward = inverse = None
    if cfg.mode.needs_kernel:
        forward = build_kernel(cfg.kernel_config, cfg.grid)
        inverse = build_inverse_kernel(cfg.kernel_config, cfg.grid, forward)

    trajectory, equivalence = _simulate(cfg, forward, inverse)

    fit = None
    decay_pass = None
    try:
        fit = analysis.fit_decay(trajectory.times, _decay_series(cfg, trajectory), cfg.fit_window)
    except DecayFitError as exc:
        logger.info(f"Decay fit skipped: {exc}")
    if fit is not None and condition_pass and not _window_settles(fit, guaranteed):
        logger.info(f"Decay audit skipped: fit window {fit.window[0]:g}..{fit.window[1]:g} is shorter "
                    f"than {MIN_AUDIT_TIME_CONSTANTS:g}/{guaranteed:.4g}")
    elif fit is not None and condition_pass:
        floor = guaranteed - RATE_RELATIVE_SLACK * abs(guaranteed) - RATE_ABSOLUTE_SLACK
        decay_pass = fit.rate >= floor
        if not decay_pass:
            logger.warning(f"Fitted rate {fit.rate:.4g} is below the guaranteed {guaranteed:.4g}")

    if write_csv:
        write_trajectory_csv(trajectory, cfg.out)
        logger.info(f"Trajectory written to {cfg.out}")

    elapsed = time.monotonic() - started
    logger.info(f"Scenario {cfg.mode.value} finished in {format_elapsed(elapsed)}")
    return ScenarioResult(cfg, report, fit, trajectory, guaranteed, condition_pass, decay_pass,
                          equivalence, elapsed)


def parse_vary(spec: str) -> Tuple[str, np.ndarray]:
    """``key=start:stop:count`` -> (key, evenly spaced values)."""
    key, sep, rng = spec.partition("=")
    key = key.strip().lower()
    if not sep or key not in NUMERIC_KEYS + INTEGER_KEYS:
        raise MalformedValueError(f"--vary: expected numeric key=start:stop:count, got {spec!r}", key=key)
    parts = rng.split(":")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise MalformedValueError(f"--vary: cannot parse range {rng!r}", key=key) from None
    if len(parts) != 3 or count < 1:
        raise MalformedValueError(f"--vary: need start:stop:count with count >= 1, got {rng!r}", key=key)
    return key, np.linspace(start, stop, count)


@dataclass
class SweepRow:
    value: float
    result: Optional[ScenarioResult]
    status: int
    message: str = ""


# Swept value, the full gain report, then what the run itself showed.
SWEEP_COLUMNS = ("value",) + REPORT_COLUMNS + ("guaranteed_rate", "fitted_rate", "r_squared", "decay_pass", "status")


def _sweep_one(cfg: ScenarioConfig, key: str, value: float) -> SweepRow:
    try:
        result = run_scenario(cfg.with_value(key, value), write_csv=False)
    except DivergenceError as exc:
        logger.warning(f"{key}={value:g}: {exc}")
        return SweepRow(value, None, EXIT_DIVERGENCE, str(exc))
    except (ConfigError, InvalidParameterError) as exc:
        logger.warning(f"{key}={value:g}: {exc}")
        return SweepRow(value, None, EXIT_CONFIG, str(exc))
    return SweepRow(value, result, result.status)


def sweep(cfg: ScenarioConfig, key: str, values: Sequence[float], workers: Optional[int] = None) -> List[SweepRow]:
    """Run one scenario per value of ``key``; rows come back in input order."""
    workers = workers or cfg.workers
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_sweep_one, cfg, key, float(v)) for v in values]
        rows = [f.result() for f in futures]
    logger.info(f"Sweep over {key}: {len(rows)} scenarios on {workers} workers")
    return rows


def sweep_csv_rows(rows: Sequence[SweepRow]):
    for row in rows:
        if row.result is None:
            yield [row.value] + [None] * (len(SWEEP_COLUMNS) - 2) + [row.status]
            continue
        res = row.result
        fit = res.fit
        yield [row.value, *report_csv_row(res.report), res.guaranteed_rate,
               fit.rate if fit else None, fit.r_squared if fit else None, res.decay_pass, row.status]


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    write_rows_csv(path, SWEEP_COLUMNS, sweep_csv_rows(rows))
    logger.info(f"Sweep table written to {path}")
