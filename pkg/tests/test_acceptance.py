"""Full-horizon runs at n=201, dt=1e-4."""
import numpy as np
import pytest

from pectl.actions.scenario import run_scenario
from pectl.core.analysis import (
    closed_loop_condition,
    design_c1,
    equivalence_error,
    fit_decay,
    lemma5_bound_check,
    observer_condition,
    observer_robin_rate,
    open_loop_condition,
)
from pectl.core.control import ControlMode, Controller, observer_gains, simulate_closed_loop
from pectl.core.grid import Grid
from pectl.core.kernel import KernelConfig, build_inverse_kernel, build_kernel, forward_transform
from pectl.core.nonlin import scaled_sin, scaled_tanh
from pectl.core.pde import SystemParams, simulate, simulate_target
from pectl.utils.config import ScenarioMode, parse_config

DT = 1e-4
T = 5.0
EVERY = 1000

UNSTABLE = SystemParams(rho=-0.5)
NONLINEAR = SystemParams(rho=-0.2, alpha=0.3, beta=0.3, gamma=2.0,
                         f1=scaled_tanh(0.05), f2=scaled_sin(0.05), f3=scaled_tanh(0.05))


@pytest.fixture(scope="module")
def grid():
    return Grid(201)


@pytest.fixture(scope="module")
def kernel(grid):
    return build_kernel(KernelConfig(c1=2.0), grid)


@pytest.mark.slow
def test_state_feedback_stabilizes_unstable_plant(grid, kernel):
    assert closed_loop_condition(UNSTABLE, 2.0).K1 == pytest.approx(1.5)
    u0 = grid.field(1.0)
    closed = simulate_closed_loop(UNSTABLE, Controller(kernel, ControlMode.STATE_FEEDBACK), u0, T, DT, EVERY)
    fit = fit_decay(closed.times, closed.joint_norm(), window=(2.5, 5.0))
    assert fit.rate >= 1.4
    assert fit.r_squared >= 0.999

    open_loop = simulate(UNSTABLE, u0, None, T, DT, EVERY)
    assert fit_decay(open_loop.times, open_loop.joint_norm()).rate <= -0.45


@pytest.mark.slow
def test_designed_gain_stabilizes_nonlinear_plant(grid):
    c1 = design_c1(NONLINEAR, 0.5)
    assert closed_loop_condition(NONLINEAR, c1).K1 >= 0.5 - 1e-9
    forward = build_kernel(KernelConfig(c1=c1), grid)
    traj = simulate_closed_loop(NONLINEAR, Controller(forward, ControlMode.STATE_FEEDBACK), grid.field(1.0), T, DT, EVERY)
    assert fit_decay(traj.times, traj.joint_norm()).rate >= 0.45
    assert lemma5_bound_check(NONLINEAR, c1, traj, forward)


@pytest.mark.slow
def test_observer_error_decays(grid, kernel):
    # The observer condition does not hold for this data; the error still
    # decays at the rate of its Robin problem.
    check = observer_condition(UNSTABLE, 2.0)
    _, sigma2 = observer_gains(kernel)
    u0 = grid.field(lambda x: np.cos(np.pi * x))
    traj = simulate_closed_loop(UNSTABLE, Controller(kernel, ControlMode.STATE_FEEDBACK), u0, T, DT, EVERY, observer_u0=grid.zeros())
    fit = fit_decay(traj.times, traj.norm_err_u, window=(2.5, 5.0))
    assert fit.r_squared >= 0.99
    if check.passed:
        assert fit.rate >= 0.95 * check.K3
    assert fit.rate >= 0.95 * observer_robin_rate(UNSTABLE, sigma2)


@pytest.mark.slow
def test_output_feedback_decays(grid, kernel):
    _, sigma2 = observer_gains(kernel)
    reference = observer_robin_rate(UNSTABLE, sigma2)
    ctrl = Controller(kernel, ControlMode.OUTPUT_FEEDBACK)
    traj = simulate_closed_loop(UNSTABLE, ctrl, grid.field(1.0), T, DT, EVERY, observer_u0=grid.zeros())
    joint = traj.joint_norm()
    fit = fit_decay(traj.times, joint, window=(2.5, 5.0))
    assert fit.rate >= 0.9 * reference
    assert fit.r_squared >= 0.99
    assert joint[-1] <= 0.5 * joint[0]


@pytest.mark.slow
def test_target_equivalence_refines():
    params = SystemParams(rho=-1.0, alpha=0.3, beta=0.3, gamma=2.0)
    horizon = 1.0
    errors = []
    for n, dt in ((201, 1e-4), (401, 2.5e-5)):
        grid = Grid(n)
        cfg = KernelConfig(c1=2.0)
        forward = build_kernel(cfg, grid)
        inverse = build_inverse_kernel(cfg, grid, forward)
        u0 = grid.field(lambda x: np.exp(-0.5 * ((x - 0.5) / 0.1) ** 2))
        every = int(round(horizon / dt / 10))
        physical = simulate(params, u0, Controller(forward, ControlMode.STATE_FEEDBACK), horizon, dt, every)
        target = simulate_target(params, forward, inverse, forward_transform(forward, u0), horizon, dt, every)
        errors.append(equivalence_error(forward, physical, target))
    assert errors[0] <= 1e-2
    assert errors[1] <= 2.5e-3
    assert errors[1] < errors[0]


@pytest.mark.slow
def test_open_loop_nonlinear_rate(grid):
    params = SystemParams(rho=2.0, alpha=0.5, beta=0.5, gamma=2.0,
                          f1=scaled_tanh(0.1), f2=scaled_tanh(0.1), f3=scaled_tanh(0.1))
    check = open_loop_condition(params)
    assert check.passed
    traj = simulate(params, grid.field(1.0), None, 3.0, DT, EVERY)
    assert fit_decay(traj.times, traj.joint_norm()).rate >= 0.95 * check.M


@pytest.mark.parametrize("mode", [m.value for m in ScenarioMode])
def test_zero_data_stays_zero_in_every_mode(mode):
    cfg = parse_config(
        f"rho = -0.2\nalpha = 0.3\nbeta = 0.3\ngamma = 2\nf1 = tanh(0.05)\nmode = {mode}\n"
        "u0 = constant(0)\nobserver_u0 = constant(0)\ngrid_n = 51\ndt = 1e-3\nT = 0.2\n"
    )
    result = run_scenario(cfg, write_csv=False)
    assert np.all(result.trajectory.joint_norm() == 0.0)
    assert np.all(result.trajectory.omega == 0.0)
    assert result.fit is None
