#!/usr/bin/env python3
"""
pectl - PDE Module
-----------
Discrete dynamics of the coupled system

    u_t = u_xx - rho u + alpha v + f1(u) + f2(v),   u_x(0) = 0, u_x(1) = omega(t)
    0   = v_xx - gamma v + beta u + f3(u),          v_x(0) = v_x(1) = 0

on a uniform grid with ghost-point Neumann ends. The parabolic part is
advanced by a first-order IMEX step (backward Euler on u_xx - rho u, the
coupling, the nonlinearities and the boundary flux explicit); v is re-solved
from u after every step so each stored state satisfies the elliptic
constraint.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import DivergenceError, InvalidParameterError, ResonanceError
from .grid import Field, Grid, check_same_grid, l2_norm
from .kernel import Kernel, forward_transform, inverse_transform
from .nonlin import ZERO, Nonlinearity, apply_field

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-4
DEFAULT_HORIZON = 5.0
DEFAULT_SNAPSHOT_EVERY = 100

RESONANCE_GUARD = 1e-6
ELLIPTIC_TOLERANCE = 1e-10
CONSISTENCY_TOLERANCE = 1e-8
BLOWUP_NORM = 1e12

# omega = policy(state); None means open loop.
Policy = Optional[Callable[["SimState"], float]]


@dataclass(frozen=True)
class SystemParams:
    """Plant coefficients and nonlinearities."""
    rho: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 1.0
    f1: Nonlinearity = ZERO
    f2: Nonlinearity = ZERO
    f3: Nonlinearity = ZERO

    def __post_init__(self):
        for name in ("rho", "alpha", "beta", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        n_top = math.ceil(math.sqrt(abs(self.gamma)) / math.pi) + 2
        modes = (np.arange(n_top + 1) * np.pi) ** 2
        gap = np.abs(self.gamma + modes)
        if gap.min() <= RESONANCE_GUARD:
            n = int(gap.argmin())
            raise ResonanceError(
                f"gamma={self.gamma} is within {RESONANCE_GUARD:g} of -(n pi)^2 for n={n}"
            )

    @property
    def M1(self) -> float:
        return self.f1.lipschitz

    @property
    def M2(self) -> float:
        return self.f2.lipschitz

    @property
    def M3(self) -> float:
        return self.f3.lipschitz

    @property
    def is_linear(self) -> bool:
        return self.f1.is_zero and self.f2.is_zero and self.f3.is_zero


@dataclass(frozen=True, eq=False)
class SimState:
    """(u, v) at time t, v slaved to u by the elliptic equation."""
    t: float
    u: Field
    v: Field

    @classmethod
    def initial(cls, params: SystemParams, u0: Field, t: float = 0.0) -> "SimState":
        """Consistent state: v0 is always solved from u0."""
        return cls(t, u0, solve_elliptic(params, u0))


@dataclass(eq=False)
class Trajectory:
    """Per-step norms and boundary input, plus sampled full states.

    Norm columns have one entry per step (ceil(T/dt) + 1 rows). ``snapshots``
    holds every ``snapshot_every``-th state and always the first and last;
    ``snapshot_steps`` gives their step indices. When ``transformed`` is set
    the u slot of each snapshot holds the target-system state u~.
    """
    times: np.ndarray
    norm_u: np.ndarray
    norm_v: np.ndarray
    omega: np.ndarray
    snapshots: List[SimState] = field(default_factory=list)
    snapshot_steps: List[int] = field(default_factory=list)
    observer_snapshots: List[SimState] = field(default_factory=list)
    norm_u_hat: Optional[np.ndarray] = None
    norm_v_hat: Optional[np.ndarray] = None
    norm_err_u: Optional[np.ndarray] = None
    norm_err_v: Optional[np.ndarray] = None
    dt: float = DEFAULT_DT
    transformed: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def has_observer(self) -> bool:
        return self.norm_u_hat is not None

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]

    def joint_norm(self) -> np.ndarray:
        """||u|| + ||v||, plus the estimation error when an observer ran."""
        total = self.norm_u + self.norm_v
        if self.has_observer:
            total = total + self.norm_err_u + self.norm_err_v
        return total


class TrajectoryRecorder:
    """Accumulates a Trajectory step by step."""

    def __init__(self, n_steps: int, dt: float, snapshot_every: int, observer: bool = False,
                 transformed: bool = False):
        if snapshot_every < 1:
            raise InvalidParameterError("snapshot_every must be >= 1")
        self.n_steps = n_steps
        self.snapshot_every = snapshot_every
        self.observer = observer
        self.trajectory = Trajectory(
            times=np.empty(n_steps + 1),
            norm_u=np.empty(n_steps + 1),
            norm_v=np.empty(n_steps + 1),
            omega=np.empty(n_steps + 1),
            dt=dt,
            transformed=transformed,
        )
        if observer:
            for name in ("norm_u_hat", "norm_v_hat", "norm_err_u", "norm_err_v"):
                setattr(self.trajectory, name, np.empty(n_steps + 1))

    def record(self, step: int, state: SimState, omega: float, observer: Optional[SimState] = None):
        traj = self.trajectory
        traj.times[step] = step * traj.dt
        traj.norm_u[step] = l2_norm(state.u)
        traj.norm_v[step] = l2_norm(state.v)
        traj.omega[step] = omega
        if self.observer:
            traj.norm_u_hat[step] = l2_norm(observer.u)
            traj.norm_v_hat[step] = l2_norm(observer.v)
            traj.norm_err_u[step] = l2_norm(state.u - observer.u)
            traj.norm_err_v[step] = l2_norm(state.v - observer.v)
        if step % self.snapshot_every == 0 or step == self.n_steps:
            traj.snapshots.append(state)
            traj.snapshot_steps.append(step)
            if self.observer:
                traj.observer_snapshots.append(observer)

    def finish(self) -> Trajectory:
        return self.trajectory


def step_count(T: float, dt: float) -> int:
    """Number of steps covering [0, T]: ceil(T / dt), robust to T/dt round-off."""
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if not (np.isfinite(T) and T > 0.0):
        raise InvalidParameterError(f"T must be positive, got {T}")
    return int(math.ceil(round(T / dt, 9)))


@lru_cache(maxsize=32)
def _elliptic_band(grid: Grid, gamma: float) -> np.ndarray:
    """gamma I - D_h in solve_banded layout, D_h the ghost-point Neumann Laplacian."""
    n, inv_h2 = grid.n_points, 1.0 / grid.h ** 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -inv_h2
    ab[0, 1] = -2.0 * inv_h2
    ab[1, :] = gamma + 2.0 * inv_h2
    ab[2, :-1] = -inv_h2
    ab[2, -2] = -2.0 * inv_h2
    ab.setflags(write=False)
    return ab


@lru_cache(maxsize=32)
def _diffusion_band(grid: Grid, damping: float, dt: float) -> np.ndarray:
    """I - dt (D_h - damping I) in solve_banded layout."""
    n, r = grid.n_points, dt / grid.h ** 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[0, 1] = -2.0 * r
    ab[1, :] = 1.0 + 2.0 * r + dt * damping
    ab[2, :-1] = -r
    ab[2, -2] = -2.0 * r
    ab.setflags(write=False)
    return ab


def discrete_neumann_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues (4/h^2) sin^2(m pi h / 2) of -D_h, m = 0..n-1."""
    m = np.arange(grid.n_points)
    return 4.0 / grid.h ** 2 * np.sin(0.5 * m * np.pi * grid.h) ** 2


def _band_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def solve_elliptic_rhs(grid: Grid, gamma: float, rhs: np.ndarray) -> np.ndarray:
    """Solve gamma v - v_xx = rhs with v_x(0) = v_x(1) = 0 on ``grid``."""
    gap = np.abs(gamma + discrete_neumann_eigenvalues(grid))
    if gap.min() <= RESONANCE_GUARD:
        raise ResonanceError(
            f"gamma={gamma} makes the discrete Neumann operator singular on {grid.n_points} points"
        )
    ab = _elliptic_band(grid, float(gamma))
    v = solve_banded((1, 1), ab, rhs)
    scale = max(1.0, float(np.max(np.abs(rhs))), (abs(gamma) + 4.0 / grid.h ** 2) * float(np.max(np.abs(v))))
    residual = float(np.max(np.abs(_band_matvec(ab, v) - rhs))) / scale
    if residual > ELLIPTIC_TOLERANCE:
        raise ResonanceError(f"elliptic solve is ill-conditioned (scaled residual {residual:.2e})")
    return v


def solve_elliptic(params: SystemParams, u: Field) -> Field:
    """v = (gamma I - d2/dx2)^-1 (beta u + f3(u)) with Neumann ends."""
    if params.beta == 0.0 and params.f3.is_zero:
        return u.grid.zeros()
    rhs = params.beta * u.values + apply_field(params.f3, u).values
    return Field(u.grid, solve_elliptic_rhs(u.grid, params.gamma, rhs))


def elliptic_residual(params: SystemParams, state: SimState) -> float:
    """Scaled max-norm residual of gamma v - v_xx - beta u - f3(u)."""
    check_same_grid(state.u.grid, state.v.grid)
    grid = state.u.grid
    rhs = params.beta * state.u.values + apply_field(params.f3, state.u).values
    ab = _elliptic_band(grid, float(params.gamma))
    v = state.v.values
    scale = max(1.0, float(np.max(np.abs(rhs))), (abs(params.gamma) + 4.0 / grid.h ** 2) * float(np.max(np.abs(v))))
    return float(np.max(np.abs(_band_matvec(ab, v) - rhs))) / scale


def is_consistent(params: SystemParams, state: SimState, tol: float = CONSISTENCY_TOLERANCE) -> bool:
    return elliptic_residual(params, state) <= tol


def implicit_diffusion_solve(grid: Grid, damping: float, dt: float, rhs: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Backward-Euler solve (I - dt (D_h - damping)) x = rhs with the blow-up guard."""
    x = solve_banded((1, 1), _diffusion_band(grid, float(damping), float(dt)), rhs, check_finite=False)
    norm = math.sqrt(max(float(np.dot(grid.weights, x * x)), 0.0)) if np.all(np.isfinite(x)) else math.inf
    if not norm <= BLOWUP_NORM:
        raise DivergenceError(t, norm)
    return x


def neumann_flux(grid: Grid, flux: float) -> np.ndarray:
    """Ghost-point contribution of u_x(1) = flux to the discrete u_xx: 2 flux / h in the last row."""
    out = np.zeros(grid.n_points)
    out[-1] = 2.0 * flux / grid.h
    return out


def nonlinear_forcing(params: SystemParams, u: Field, v: Field) -> np.ndarray:
    """f1(u) + f2(v)."""
    out = np.zeros(u.grid.n_points)
    if not params.f1.is_zero:
        out = out + apply_field(params.f1, u).values
    if not params.f2.is_zero:
        out = out + apply_field(params.f2, v).values
    return out


def explicit_forcing(params: SystemParams, u: Field, v: Field) -> np.ndarray:
    """f1(u) + alpha v + f2(v)."""
    return params.alpha * v.values + nonlinear_forcing(params, u, v)


def step_parabolic(params: SystemParams, state: SimState, boundary_input: float, dt: float) -> SimState:
    """One IMEX step with u_x(1) = boundary_input; v re-solved at the new time."""
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    grid = state.u.grid
    rhs = state.u.values + dt * (
        explicit_forcing(params, state.u, state.v) + neumann_flux(grid, boundary_input)
    )
    t = state.t + dt
    u_next = Field(grid, implicit_diffusion_solve(grid, params.rho, dt, rhs, t))
    return SimState(t, u_next, solve_elliptic(params, u_next))


def simulate(
    params: SystemParams,
    u0: Field,
    policy: Policy = None,
    T: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
    snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
) -> Trajectory:
    """Run the plant from u0 with omega = policy(state) at the start of each step."""
    n_steps = step_count(T, dt)
    recorder = TrajectoryRecorder(n_steps, dt, snapshot_every)
    state = SimState.initial(params, u0)
    for step in range(n_steps + 1):
        omega = 0.0 if policy is None else float(policy(state))
        recorder.record(step, state, omega)
        if step < n_steps:
            state = step_parabolic(params, state, omega, dt)
    logger.debug(f"simulate: {n_steps} steps, final ||u||={l2_norm(state.u):.3e}")
    return recorder.finish()


def physical_state(params: SystemParams, inverse: Kernel, utilde: Field, t: float = 0.0) -> SimState:
    """(u, v) behind a target-system state: u = (I + L) u~, v solved from u."""
    u = inverse_transform(inverse, utilde)
    return SimState(t, u, solve_elliptic(params, u))


def reaction_map(params: SystemParams, forward: Kernel, inverse: Kernel, utilde: Field) -> Field:
    """Non-diffusive part of the target dynamics:

        -(c1 + rho) u~ + (I - K)[alpha v + f1(u) + f2(v)],  u = (I + L) u~.
    """
    phys = physical_state(params, inverse, utilde)
    coupling = Field(utilde.grid, explicit_forcing(params, phys.u, phys.v))
    return forward_transform(forward, coupling) - (forward.c1 + params.rho) * utilde


def simulate_target(
    params: SystemParams,
    forward: Kernel,
    inverse: Kernel,
    u0tilde: Field,
    T: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
    snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
) -> Trajectory:
    """Simulate u~_t = u~_xx - (c1 + rho) u~ + (I - K)[alpha v + f1(u) + f2(v)],
    u~_x(0) = u~_x(1) = 0, with u = (I + L) u~ and v from the elliptic equation.

    Snapshots store (u~, v); ``norm_u`` is ||u~||.
    """
    check_same_grid(forward.grid, u0tilde.grid)
    check_same_grid(inverse.grid, u0tilde.grid)
    grid = u0tilde.grid
    damping = forward.c1 + params.rho
    n_steps = step_count(T, dt)
    recorder = TrajectoryRecorder(n_steps, dt, snapshot_every, transformed=True)
    utilde = u0tilde
    for step in range(n_steps + 1):
        t = step * dt
        phys = physical_state(params, inverse, utilde, t)
        recorder.record(step, SimState(t, utilde, phys.v), 0.0)
        if step == n_steps:
            break
        coupling = Field(grid, explicit_forcing(params, phys.u, phys.v))
        rhs = utilde.values + dt * forward_transform(forward, coupling).values
        utilde = Field(grid, implicit_diffusion_solve(grid, damping, dt, rhs, t + dt))
    logger.debug(f"simulate_target: {n_steps} steps, final ||u~||={l2_norm(utilde):.3e}")
    return recorder.finish()


def step_matrix(params: SystemParams, grid: Grid, dt: float) -> np.ndarray:
    """Dense (I - dt (D_h - rho))^-1: the linear implicit part of one step."""
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    return solve_banded((1, 1), _diffusion_band(grid, float(params.rho), float(dt)), np.eye(grid.n_points))


def spectral_radius(matrix: np.ndarray, grid: Grid, iterations: int = 2000, tol: float = 1e-13, seed: int = 0) -> float:
    """Power iteration in the trapezoid-weighted norm, where D_h is self-adjoint."""
    rng = np.random.default_rng(seed)
    w = grid.weights

    def norm(x):
        return math.sqrt(float(np.dot(w, x * x)))

    x = rng.standard_normal(grid.n_points)
    x /= norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = matrix @ x
        current = norm(y)
        if current == 0.0:
            return 0.0
        x = y / current
        if abs(current - estimate) <= tol * current:
            return current
        estimate = current
    return estimate
