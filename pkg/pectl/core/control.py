#!/usr/bin/env python3
"""
pectl - Control Module
-----------
Boundary feedback law, boundary observer and the output-feedback loop.

The state-feedback law is

    omega(t) = int_0^1 k_x(1, y) u(y, t) dy + k(1, 1) u(1, t).

The observer is a copy of the plant whose flux at x = 1 is corrected by
sigma2 (u(1) - u_hat(1)) with sigma2 = -k(1, 1); there is no in-domain
injection (sigma1 = 0).
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidParameterError
from .grid import Field, check_same_grid, composite_quadrature, l2_norm
from .kernel import Kernel
from .nonlin import apply_field
from .pde import (
    DEFAULT_DT,
    DEFAULT_HORIZON,
    DEFAULT_SNAPSHOT_EVERY,
    SimState,
    SystemParams,
    Trajectory,
    TrajectoryRecorder,
    implicit_diffusion_solve,
    neumann_flux,
    nonlinear_forcing,
    solve_elliptic_rhs,
    step_count,
    step_parabolic,
)

logger = logging.getLogger(__name__)


class ControlMode(Enum):
    OPEN_LOOP = "open_loop"
    STATE_FEEDBACK = "state_feedback"
    OUTPUT_FEEDBACK = "output_feedback"


@dataclass(frozen=True)
class Controller:
    """Boundary law built on a forward kernel. Callable as a pde policy.

    Without an explicit mode a kernel means state feedback and no kernel
    means open loop.
    """
    kernel: Optional[Kernel] = None
    mode: Optional[ControlMode] = None

    def __post_init__(self):
        if self.mode is None:
            default = ControlMode.OPEN_LOOP if self.kernel is None else ControlMode.STATE_FEEDBACK
            object.__setattr__(self, "mode", default)
        if self.mode is not ControlMode.OPEN_LOOP:
            if self.kernel is None:
                raise InvalidParameterError(f"{self.mode.value} needs a kernel")
            if self.kernel.inverse:
                raise InvalidParameterError("the feedback law uses the forward kernel k, not l")

    def __call__(self, state: SimState) -> float:
        return control_signal(self, state.u)


def control_signal(ctrl: Controller, u: Field) -> float:
    """omega = trapz(k_x(1, .) u) + k(1, 1) u(1); zero in open loop."""
    if ctrl.mode is ControlMode.OPEN_LOOP:
        return 0.0
    kernel = ctrl.kernel
    check_same_grid(kernel.grid, u.grid)
    return composite_quadrature(kernel.kx_at_1 * u.values, u.grid.h) + kernel.k11 * u.at_right()


def observer_gains(kernel: Kernel) -> Tuple[Field, float]:
    """(sigma1, sigma2) = (0, -k(1, 1))."""
    sigma2 = -kernel.k11
    assert sigma2 >= 0.0
    return kernel.grid.zeros(), sigma2


@dataclass(frozen=True, eq=False)
class ObserverState:
    """Estimate (u_hat, v_hat) with its output-injection gains."""
    t: float
    u_hat: Field
    v_hat: Field
    sigma2: float
    sigma1: Field

    def __post_init__(self):
        if np.any(self.sigma1.values != 0.0):
            raise InvalidParameterError("in-domain injection sigma1 must vanish")

    @classmethod
    def start(cls, params: SystemParams, kernel: Kernel, u_hat0: Field, t: float = 0.0) -> "ObserverState":
        """Observer at t with v_hat solved from u_hat0."""
        check_same_grid(kernel.grid, u_hat0.grid)
        sigma1, sigma2 = observer_gains(kernel)
        state = SimState.initial(params, u_hat0, t)
        return cls(t, state.u, state.v, sigma2, sigma1)

    def as_state(self) -> SimState:
        return SimState(self.t, self.u_hat, self.v_hat)


def observer_step(
    params: SystemParams,
    obs: ObserverState,
    measurement_u1: float,
    omega: float,
    dt: float,
) -> ObserverState:
    """Advance the estimate with flux omega + sigma2 (y - u_hat(1))."""
    if not np.isfinite(measurement_u1):
        raise InvalidParameterError("measurement must be finite")
    flux = omega + obs.sigma2 * (measurement_u1 - obs.u_hat.at_right())
    nxt = step_parabolic(params, obs.as_state(), flux, dt)
    return ObserverState(nxt.t, nxt.u, nxt.v, obs.sigma2, obs.sigma1)


def output_feedback_signal(ctrl: Controller, obs: ObserverState) -> float:
    """The state-feedback law evaluated on u_hat."""
    if ctrl.mode is not ControlMode.OUTPUT_FEEDBACK:
        raise InvalidParameterError(f"output feedback requested from a {ctrl.mode.value} controller")
    return control_signal(ctrl, obs.u_hat)


def simulate_closed_loop(
    params: SystemParams,
    ctrl: Controller,
    u0: Field,
    T: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
    snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
    observer_u0: Optional[Field] = None,
    noise_std: float = 0.0,
    seed: int = 0,
) -> Trajectory:
    """Plant plus (optionally) observer.

    An observer runs whenever ``observer_u0`` is given or the controller is in
    output-feedback mode (u_hat0 defaults to zero). In output feedback omega is
    computed from u_hat, otherwise from u. The observer is fed u(1) plus
    Gaussian noise of standard deviation ``noise_std``.
    """
    if noise_std < 0.0:
        raise InvalidParameterError("noise_std must be nonnegative")
    output_feedback = ctrl.mode is ControlMode.OUTPUT_FEEDBACK
    with_observer = output_feedback or observer_u0 is not None
    if with_observer and ctrl.kernel is None:
        raise InvalidParameterError("the observer needs a kernel for its injection gain")

    n_steps = step_count(T, dt)
    rng = np.random.default_rng(seed)
    recorder = TrajectoryRecorder(n_steps, dt, snapshot_every, observer=with_observer)
    state = SimState.initial(params, u0)
    obs = None
    if with_observer:
        obs = ObserverState.start(params, ctrl.kernel, observer_u0 if observer_u0 is not None else u0.grid.zeros())

    for step in range(n_steps + 1):
        omega = output_feedback_signal(ctrl, obs) if output_feedback else control_signal(ctrl, state.u)
        recorder.record(step, state, omega, obs.as_state() if obs is not None else None)
        if step == n_steps:
            break
        if obs is not None:
            y = state.u.at_right()
            if noise_std > 0.0:
                y += noise_std * rng.standard_normal()
            obs = observer_step(params, obs, y, omega, dt)
        state = step_parabolic(params, state, omega, dt)

    logger.debug(f"closed loop ({ctrl.mode.value}): {n_steps} steps, final ||u||={l2_norm(state.u):.3e}")
    return recorder.finish()


def simulate_error_system(
    params: SystemParams,
    kernel: Kernel,
    plant_trajectory: Optional[Trajectory],
    eps_u0: Field,
    dt: Optional[float] = None,
    T: Optional[float] = None,
    snapshot_every: int = 1,
) -> Trajectory:
    """Estimation error e = u - u_hat simulated on its own:

        e_t = e_xx - rho e + alpha e_v + f1(u) - f1(u - e) + f2(v) - f2(v - e_v),
        gamma e_v - e_v_xx = beta e + f3(u) - f3(u - e),
        e_x(0) = 0,  e_x(1) = -sigma2 e(1).

    The nonlinear terms need the plant state at every step, so a nonlinear
    system requires a plant trajectory stored with ``snapshot_every=1``. In the
    linear case the plant may be omitted, and then ``T`` and ``dt`` are required.
    Snapshots store (e, e_v).
    """
    check_same_grid(kernel.grid, eps_u0.grid)
    grid = eps_u0.grid
    if plant_trajectory is not None:
        dt = plant_trajectory.dt if dt is None else dt
        if dt != plant_trajectory.dt:
            raise InvalidParameterError("dt differs from the plant trajectory's")
        n_steps = len(plant_trajectory) - 1
        check_same_grid(plant_trajectory.snapshots[0].u.grid, grid)
    elif not params.is_linear:
        raise InvalidParameterError("the nonlinear error system needs the plant trajectory")
    else:
        if dt is None or T is None:
            raise InvalidParameterError("T and dt are required without a plant trajectory")
        n_steps = step_count(T, dt)

    plant_states = None
    if not params.is_linear:
        if plant_trajectory.snapshot_steps != list(range(n_steps + 1)):
            raise InvalidParameterError("plant trajectory must keep every step (snapshot_every=1)")
        plant_states = plant_trajectory.snapshots

    _, sigma2 = observer_gains(kernel)
    recorder = TrajectoryRecorder(n_steps, dt, snapshot_every)
    eps = eps_u0
    for step in range(n_steps + 1):
        plant = plant_states[step] if plant_states is not None else None
        eps_v = _error_elliptic(params, eps, plant)
        recorder.record(step, SimState(step * dt, eps, eps_v), 0.0)
        if step == n_steps:
            break
        forcing = params.alpha * eps_v.values + _error_nonlinearity(params, eps, eps_v, plant)
        rhs = eps.values + dt * (forcing + neumann_flux(grid, -sigma2 * eps.at_right()))
        eps = Field(grid, implicit_diffusion_solve(grid, params.rho, dt, rhs, (step + 1) * dt))
    return recorder.finish()


def _error_elliptic(params: SystemParams, eps: Field, plant: Optional[SimState]) -> Field:
    if params.beta == 0.0 and params.f3.is_zero:
        return eps.grid.zeros()
    rhs = params.beta * eps.values
    if plant is not None and not params.f3.is_zero:
        rhs = rhs + apply_field(params.f3, plant.u).values - apply_field(params.f3, plant.u - eps).values
    return Field(eps.grid, solve_elliptic_rhs(eps.grid, params.gamma, rhs))


def _error_nonlinearity(params: SystemParams, eps: Field, eps_v: Field, plant: Optional[SimState]) -> np.ndarray:
    if plant is None:
        return np.zeros(eps.grid.n_points)
    return nonlinear_forcing(params, plant.u, plant.v) - nonlinear_forcing(
        params, plant.u - eps, plant.v - eps_v
    )
