import numpy as np
import pytest
from scipy import integrate

from pectl.core.control import (
    ControlMode,
    Controller,
    ObserverState,
    control_signal,
    observer_gains,
    observer_step,
    output_feedback_signal,
    simulate_closed_loop,
    simulate_error_system,
)
from pectl.core.errors import InvalidParameterError
from pectl.core.grid import Grid, l2_norm
from pectl.core.kernel import KernelConfig, bessel_kernel, build_inverse_kernel, build_kernel, forward_transform
from pectl.core.nonlin import scaled_sin, scaled_tanh
from pectl.core.pde import SystemParams, simulate

LINEAR = SystemParams(rho=-0.5)
COUPLED = SystemParams(rho=-0.2, alpha=0.3, beta=0.3, gamma=2.0,
                       f1=scaled_tanh(0.05), f2=scaled_sin(0.05), f3=scaled_tanh(0.05))


@pytest.fixture(scope="module")
def kernel():
    return build_kernel(KernelConfig(c1=2.0), Grid(101))


def test_controller_needs_forward_kernel(kernel):
    with pytest.raises(InvalidParameterError):
        Controller(None, ControlMode.STATE_FEEDBACK)
    inverse = build_inverse_kernel(KernelConfig(c1=2.0), kernel.grid, kernel)
    with pytest.raises(InvalidParameterError):
        Controller(inverse, ControlMode.STATE_FEEDBACK)


def test_control_signal_trivial_cases(kernel):
    grid = kernel.grid
    assert control_signal(Controller(kernel, ControlMode.STATE_FEEDBACK), grid.zeros()) == 0.0
    assert control_signal(Controller(kernel, ControlMode.OPEN_LOOP), grid.field(1.0)) == 0.0


def test_controller_default_mode(kernel):
    assert Controller().mode is ControlMode.OPEN_LOOP
    assert Controller(kernel).mode is ControlMode.STATE_FEEDBACK
    u = kernel.grid.field(1.0)
    assert control_signal(Controller(kernel), u) == control_signal(Controller(kernel, ControlMode.STATE_FEEDBACK), u)
    assert control_signal(Controller(kernel), u) != 0.0


def test_control_signal_matches_closed_form():
    c1 = 2.0

    def column_integral(x):
        return integrate.quad(lambda y: float(bessel_kernel(c1, x, y)), 0.0, x, epsabs=1e-13)[0]

    delta = 1e-4
    expected = (column_integral(1.0 + delta) - column_integral(1.0 - delta)) / (2.0 * delta)
    for n in (201, 401):
        grid = Grid(n)
        ctrl = Controller(build_kernel(KernelConfig(c1=c1), grid), ControlMode.STATE_FEEDBACK)
        assert control_signal(ctrl, grid.field(1.0)) == pytest.approx(expected, abs=1e-3)


def test_observer_gains(kernel):
    sigma1, sigma2 = observer_gains(kernel)
    assert np.all(sigma1.values == 0.0)
    assert sigma2 == pytest.approx(1.0)


def test_observer_rejects_in_domain_injection(kernel):
    grid = kernel.grid
    with pytest.raises(InvalidParameterError):
        ObserverState(0.0, grid.zeros(), grid.zeros(), 1.0, grid.field(1.0))


def test_observer_step_rejects_nonfinite_measurement(kernel):
    obs = ObserverState.start(LINEAR, kernel, kernel.grid.zeros())
    with pytest.raises(InvalidParameterError):
        observer_step(LINEAR, obs, float("nan"), 0.0, 1e-3)


def test_output_feedback_signal(kernel):
    grid = kernel.grid
    u = grid.field(lambda x: 1.0 + x ** 2)
    ctrl = Controller(kernel, ControlMode.OUTPUT_FEEDBACK)
    perfect = ObserverState.start(LINEAR, kernel, u)
    assert output_feedback_signal(ctrl, perfect) == control_signal(ctrl, u)
    assert output_feedback_signal(ctrl, ObserverState.start(LINEAR, kernel, grid.zeros())) == 0.0
    with pytest.raises(InvalidParameterError):
        output_feedback_signal(Controller(kernel, ControlMode.STATE_FEEDBACK), perfect)


def test_zero_error_is_absorbing(kernel):
    grid = kernel.grid
    u0 = grid.field(lambda x: np.cos(np.pi * x) + 0.5)
    ctrl = Controller(kernel, ControlMode.STATE_FEEDBACK)
    traj = simulate_closed_loop(COUPLED, ctrl, u0, T=0.2, dt=1e-3, observer_u0=u0)
    assert traj.has_observer
    assert np.max(traj.norm_err_u) <= 1e-12
    assert np.max(traj.norm_err_v) <= 1e-12


def test_closed_loop_is_deterministic(kernel):
    grid = kernel.grid
    ctrl = Controller(kernel, ControlMode.OUTPUT_FEEDBACK)
    runs = [
        simulate_closed_loop(LINEAR, ctrl, grid.field(1.0), T=0.05, dt=1e-3, noise_std=0.01, seed=3)
        for _ in range(2)
    ]
    np.testing.assert_array_equal(runs[0].norm_err_u, runs[1].norm_err_u)
    np.testing.assert_array_equal(runs[0].omega, runs[1].omega)


def test_state_feedback_matches_policy_run(kernel):
    grid = kernel.grid
    ctrl = Controller(kernel, ControlMode.STATE_FEEDBACK)
    u0 = grid.field(1.0)
    joint = simulate_closed_loop(LINEAR, ctrl, u0, T=0.05, dt=1e-3)
    plain = simulate(LINEAR, u0, ctrl, T=0.05, dt=1e-3)
    np.testing.assert_array_equal(joint.norm_u, plain.norm_u)


@pytest.mark.parametrize("params", [LINEAR, COUPLED], ids=["linear", "nonlinear"])
def test_error_system_matches_joint_run(kernel, params):
    grid = kernel.grid
    u0 = grid.field(lambda x: np.exp(-0.5 * ((x - 0.4) / 0.15) ** 2))
    ctrl = Controller(kernel, ControlMode.OUTPUT_FEEDBACK)
    joint = simulate_closed_loop(params, ctrl, u0, T=0.1, dt=1e-4, snapshot_every=1)
    error = simulate_error_system(params, kernel, joint, u0)
    assert len(error) == len(joint)
    for plant, obs, eps in zip(joint.snapshots, joint.observer_snapshots, error.snapshots):
        assert l2_norm(plant.u - obs.u - eps.u) <= 1e-6
        assert l2_norm(plant.v - obs.v - eps.v) <= 1e-6


def test_error_system_zero_data(kernel):
    traj = simulate_error_system(LINEAR, kernel, None, kernel.grid.zeros(), dt=1e-3, T=0.1)
    assert np.all(traj.norm_u == 0.0)


def test_nonlinear_error_system_needs_every_step(kernel):
    grid = kernel.grid
    ctrl = Controller(kernel, ControlMode.STATE_FEEDBACK)
    plant = simulate_closed_loop(COUPLED, ctrl, grid.field(1.0), T=0.05, dt=1e-3, snapshot_every=10)
    with pytest.raises(InvalidParameterError):
        simulate_error_system(COUPLED, kernel, plant, grid.field(1.0))
    with pytest.raises(InvalidParameterError):
        simulate_error_system(COUPLED, kernel, None, grid.field(1.0), dt=1e-3, T=0.05)


def test_transformed_error_boundary_condition():
    grid = Grid(201)
    kernel = build_kernel(KernelConfig(c1=2.0), grid)
    eps0 = grid.field(lambda x: 1.0 + np.cos(np.pi * x))
    traj = simulate_error_system(LINEAR, kernel, None, eps0, dt=1e-4, T=0.05, snapshot_every=500)
    eps = traj.final.u
    transformed = forward_transform(kernel, eps).values
    h = grid.h
    slope = (3.0 * transformed[-1] - 4.0 * transformed[-2] + transformed[-3]) / (2.0 * h)
    expected = -float(np.dot(grid.weights, kernel.kx_at_1 * eps.values))
    assert slope == pytest.approx(expected, abs=1e-2 * np.max(np.abs(eps.values)))


def test_control_law_is_lipschitz(kernel):
    grid = kernel.grid
    ctrl = Controller(kernel, ControlMode.STATE_FEEDBACK)
    bound = float(np.dot(grid.weights, np.abs(kernel.kx_at_1))) + abs(kernel.k11)
    rng = np.random.default_rng(11)
    for _ in range(200):
        u = grid.field(rng.uniform(-5.0, 5.0, grid.n_points))
        w = grid.field(rng.uniform(-5.0, 5.0, grid.n_points))
        gap = abs(control_signal(ctrl, u) - control_signal(ctrl, w))
        assert gap <= bound * np.max(np.abs(u.values - w.values)) + 1e-12


def test_observer_forgets_wrong_estimate_of_resting_plant(kernel):
    grid = kernel.grid
    ctrl = Controller(kernel, ControlMode.STATE_FEEDBACK)
    traj = simulate_closed_loop(LINEAR, ctrl, grid.zeros(), T=3.0, dt=1e-3, snapshot_every=100,
                                observer_u0=grid.field(1.0))
    assert np.all(traj.norm_u == 0.0)
    assert np.all(traj.omega == 0.0)
    err = traj.norm_err_u
    assert err[0] == pytest.approx(1.0)
    assert err[-1] < err[len(err) // 2] < err[0]
    assert err[-1] <= 0.6 * err[0]
