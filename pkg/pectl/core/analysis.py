#!/usr/bin/env python3
"""
pectl - Analysis Module
-----------
Closed-form stability constants, the operator spectrum and empirical decay
fits.

Stability conditions:
    open loop        M  = rho - alpha beta / gamma - M_lip > 0 (and a stable spectrum)
    state feedback   K1 = c1 + rho - (M1 + (M2 + |alpha|)(|beta| + M3)) (1 + N)^2 > 0
    observer         K3 = c1 + rho - K4 > 0
with M_lip = M1 + M3 |alpha| + M2 |beta| + M2 M3 and N the kernel bound.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf

from .errors import DecayFitError, InfeasibleGainError, InvalidParameterError
from .grid import Field, Grid, l2_norm
from .kernel import Kernel, forward_transform, kernel_bound_Nc1
from .pde import SystemParams, Trajectory, reaction_map

logger = logging.getLogger(__name__)

DEFAULT_SPECTRUM_MODES = 64
MIN_FIT_SAMPLES = 10
FIT_FLOOR = 1e-14
LEMMA5_SLACK = 1e-6
DEFAULT_C1_MAX = 10.0
_SQUARE_LIMIT = 1e150


def _times(coefficient: float, factor: float) -> float:
    """coefficient * factor with 0 * inf = 0 (vanishing gains kill an unbounded N)."""
    return 0.0 if coefficient == 0.0 else coefficient * factor


def _equivalence_square(c1: float) -> float:
    """(1 + N)^2, inf when N is unbounded or the square leaves the float range."""
    N = kernel_bound_Nc1(c1)
    if not math.isfinite(N) or N > _SQUARE_LIMIT:
        return math.inf
    return (1.0 + N) ** 2


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    margin: float
    tail_certified: bool


class OpenLoopCheck(NamedTuple):
    M: float
    passed: bool


class ClosedLoopCheck(NamedTuple):
    K1: float
    passed: bool


class ObserverCheck(NamedTuple):
    K3: float
    K4: float
    eta: float
    passed: bool


class WellposednessConstants(NamedTuple):
    L1: float
    L2: float
    L3: float


def spectrum(params: SystemParams, n_max: int = DEFAULT_SPECTRUM_MODES) -> Spectrum:
    """lambda_n = -rho + alpha beta / (gamma + (n pi)^2) - (n pi)^2 for n = 0..n_max.

    ``tail_certified`` is set when the bound
    lambda_n <= -(n pi)^2 + |rho| + |alpha beta| / min_{m > n_max} |gamma + (m pi)^2|
    for n > n_max stays below the computed margin.
    """
    if n_max < 0:
        raise InvalidParameterError("n_max must be nonnegative")
    modes = (np.arange(n_max + 1) * np.pi) ** 2
    eigenvalues = -params.rho + params.alpha * params.beta / (params.gamma + modes) - modes
    margin = float(eigenvalues.max())

    first = n_max + 1
    last = max(first, math.ceil(math.sqrt(abs(params.gamma)) / math.pi) + 2)
    tail_modes = (np.arange(first, last + 1) * np.pi) ** 2
    distance = float(np.abs(params.gamma + tail_modes).min())
    tail_bound = -(first * np.pi) ** 2 + abs(params.rho) + abs(params.alpha * params.beta) / distance
    certified = tail_bound < margin
    if not certified:
        logger.warning(f"spectral tail beyond n={n_max} is not bounded by the computed margin")
    return Spectrum(eigenvalues, margin, certified)


def lipschitz_aggregate(params: SystemParams) -> float:
    """M_lip = M1 + M3 |alpha| + M2 |beta| + M2 M3."""
    return params.M1 + params.M3 * abs(params.alpha) + params.M2 * abs(params.beta) + params.M2 * params.M3


def printed_open_loop_constant(params: SystemParams) -> float:
    """rho - alpha beta / gamma - M1 + M3 |alpha| + M2 |beta| + M2 M3, signs taken literally."""
    return (params.rho - params.alpha * params.beta / params.gamma - params.M1
            + params.M3 * abs(params.alpha) + params.M2 * abs(params.beta) + params.M2 * params.M3)


def open_loop_condition(params: SystemParams) -> OpenLoopCheck:
    """M = rho - alpha beta / gamma - M_lip; passes when M > 0 and the spectrum is stable.

    M is also the guaranteed open-loop decay rate.
    """
    M = params.rho - params.alpha * params.beta / params.gamma - lipschitz_aggregate(params)
    return OpenLoopCheck(M, bool(M > 0.0 and spectrum(params).margin < 0.0))


def _closed_loop_gains(params: SystemParams) -> float:
    return params.M1 + (params.M2 + abs(params.alpha)) * (abs(params.beta) + params.M3)


def closed_loop_condition(params: SystemParams, c1: float) -> ClosedLoopCheck:
    K1 = c1 + params.rho - _times(_closed_loop_gains(params), _equivalence_square(c1))
    proof_form = closed_loop_constant_proof_form(params, c1)
    assert math.isclose(K1, proof_form, rel_tol=1e-12, abs_tol=1e-12)
    return ClosedLoopCheck(K1, bool(K1 > 0.0))


def closed_loop_constant_proof_form(params: SystemParams, c1: float) -> float:
    """c1 + rho - (L5 + |alpha| (|beta| + M3)) (1 + N)^2, L5 = M1 + M2 (|beta| + M3)."""
    L5 = params.M1 + params.M2 * (abs(params.beta) + params.M3)
    gains = L5 + abs(params.alpha) * (abs(params.beta) + params.M3)
    return c1 + params.rho - _times(gains, _equivalence_square(c1))


def eta_constant(c1: float) -> float:
    """(c1/2)(1 + c1/2) e^(c1/4) (sqrt(pi / (2 c1)) erf(sqrt(c1 / 2)))^(1/2)."""
    if not (np.isfinite(c1) and c1 > 0.0):
        raise InvalidParameterError(f"c1 must be positive, got {c1}")
    inner = math.sqrt(math.pi / (2.0 * c1)) * erf(math.sqrt(0.5 * c1))
    return 0.5 * c1 * (1.0 + 0.5 * c1) * math.exp(0.25 * c1) * math.sqrt(inner)


def observer_gain_factor(params: SystemParams, eta: float) -> float:
    """(M2 + |alpha|)(|beta| + M3) + (eta^2 + 1) / 2 + M1, the bracket of K4."""
    return (params.M2 + abs(params.alpha)) * (abs(params.beta) + params.M3) + 0.5 * (eta * eta + 1.0) + params.M1


def observer_condition(params: SystemParams, c1: float) -> ObserverCheck:
    eta = eta_constant(c1)
    K4 = _times(observer_gain_factor(params, eta), _equivalence_square(c1))
    K3 = c1 + params.rho - K4
    return ObserverCheck(K3, K4, eta, bool(K3 > 0.0))


def wellposedness_constants(params: SystemParams, c1: float) -> WellposednessConstants:
    N = kernel_bound_Nc1(c1)
    root = math.sqrt(2.0 * (1.0 + N * N)) if np.isfinite(N) else math.inf
    L1 = _times(abs(params.beta) + params.M3, root)
    L2 = _times(params.M2, L1) + _times(params.M1, root)
    L3 = _times(L1 * abs(params.alpha) + L2, 1.0 + N) + abs(c1 + params.rho)
    return WellposednessConstants(L1, L2, L3)


def resolvent_norm(gamma: float) -> float:
    """||(gamma I - d2/dx2)^-1|| = 1 / min_n |gamma + (n pi)^2| under Neumann ends."""
    n_top = math.ceil(math.sqrt(abs(gamma)) / math.pi) + 2
    modes = (np.arange(n_top + 1) * np.pi) ** 2
    return float(1.0 / np.abs(gamma + modes).min())


@dataclass(frozen=True)
class DecayFit:
    """log ||x(t)|| ~ intercept - rate t over ``window``."""
    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]


def fit_decay(times: Sequence[float], norms: Sequence[float], window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Least-squares line through (t, log norm); defaults to the second half of the record."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise DecayFitError("times and norms must be 1-D and of equal length")
    if t.size == 0:
        raise DecayFitError("empty record")
    if window is None:
        window = (0.5 * (t[0] + t[-1]), float(t[-1]))
    keep = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    t, y = t[keep], y[keep]
    if t.size < MIN_FIT_SAMPLES:
        raise DecayFitError(f"need at least {MIN_FIT_SAMPLES} samples in the fit window, got {t.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= FIT_FLOOR):
        raise DecayFitError("norms in the fit window must be finite and above the floor")
    log_y = np.log(y)
    slope, intercept = np.polyfit(t, log_y, 1)
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    ss_res = float(np.sum((log_y - (slope * t + intercept)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(float(-slope), float(intercept), r_squared, (float(window[0]), float(window[1])))


def lemma5_bound_check(
    params: SystemParams,
    c1: float,
    trajectory: Trajectory,
    forward: Optional[Kernel] = None,
) -> bool:
    """||v|| <= (|beta| + M3)(1 + N) ||u~|| at every stored state.

    A physical trajectory is transformed with ``forward``; a target-system
    trajectory is used as is.
    """
    if not trajectory.transformed and forward is None:
        raise InvalidParameterError("a physical trajectory needs the forward kernel")
    factor = _times(abs(params.beta) + params.M3, 1.0 + kernel_bound_Nc1(c1))
    ok = True
    for state in trajectory.snapshots:
        utilde = state.u if trajectory.transformed else forward_transform(forward, state.u)
        lhs, rhs = l2_norm(state.v), factor * l2_norm(utilde)
        if lhs > rhs + LEMMA5_SLACK:
            logger.warning(f"v bound violated at t={state.t:.4g}: {lhs:.4g} > {rhs:.4g}")
            ok = False
    return ok


def design_c1(params: SystemParams, target_K1: float, c1_max: float = DEFAULT_C1_MAX, c1_min: float = 1e-3) -> float:
    """Smallest c1 in [c1_min, c1_max] with K1(c1) >= target_K1 (grid scan, then brentq)."""
    def excess(c1: float) -> float:
        return closed_loop_condition(params, c1).K1 - target_K1

    grid = np.geomspace(c1_min, c1_max, 400)
    values = np.array([excess(c) for c in grid])
    feasible = np.flatnonzero(values >= 0.0)
    if feasible.size == 0:
        raise InfeasibleGainError(f"K1 >= {target_K1} is not reachable for c1 <= {c1_max}")
    first = int(feasible[0])
    if first == 0:
        return float(grid[0])
    lo, hi = float(grid[first - 1]), float(grid[first])
    # brentq needs a finite bracket; K1 is -inf where N is unbounded.
    for _ in range(200):
        if np.isfinite(excess(lo)):
            break
        mid = math.sqrt(lo * hi)
        if excess(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    c1 = brentq(excess, lo, hi, xtol=1e-12)
    while excess(c1) < 0.0:
        c1 = math.nextafter(c1, math.inf)
    logger.debug(f"design_c1: c1={c1:.10g} gives K1={excess(c1) + target_K1:.6g}")
    return float(c1)


def observer_robin_rate(params: SystemParams, sigma2: float) -> float:
    """Slowest decay rate mu^2 + rho of e_t = e_xx - rho e, e_x(0) = 0, e_x(1) = -sigma2 e(1),
    mu the smallest nonnegative root of mu tan(mu) = sigma2.

    Exact for the linear decoupled case only.
    """
    if not params.is_linear or params.alpha * params.beta != 0.0:
        raise InvalidParameterError("the Robin rate applies to linear systems with alpha beta = 0")
    if sigma2 < 0.0:
        raise InvalidParameterError("sigma2 must be nonnegative")
    if sigma2 == 0.0:
        return float(params.rho)
    mu = brentq(lambda m: m * math.sin(m) - sigma2 * math.cos(m), 0.0, 0.5 * math.pi, xtol=1e-14)
    return float(mu * mu + params.rho)


def random_smooth_field(grid: Grid, rng: np.random.Generator, modes: int = 6, scale: float = 1.0) -> Field:
    """Random combination of the first ``modes`` Neumann cosines."""
    coeffs = rng.standard_normal(modes) * scale / (1.0 + np.arange(modes))
    x = grid.nodes
    return grid.field(sum(c * np.cos(m * np.pi * x) for m, c in enumerate(coeffs)))


def audit_reaction_lipschitz(
    params: SystemParams,
    forward: Kernel,
    inverse: Kernel,
    samples: int = 200,
    seed: int = 0,
) -> float:
    """Largest ||Lambda(a) - Lambda(b)|| / ||a - b|| over random smooth pairs."""
    rng = np.random.default_rng(seed)
    grid = forward.grid
    worst = 0.0
    for _ in range(samples):
        a = random_smooth_field(grid, rng, scale=3.0)
        b = random_smooth_field(grid, rng, scale=3.0)
        gap = l2_norm(a - b)
        if gap == 0.0:
            continue
        ratio = l2_norm(reaction_map(params, forward, inverse, a) - reaction_map(params, forward, inverse, b)) / gap
        worst = max(worst, ratio)
    return worst


@dataclass(frozen=True)
class GainReport:
    """Every derived constant for one (params, c1) pair.

    ``M`` is the open-loop rate rho - alpha beta / gamma - M_lip. ``M_printed``
    is the same expression with only M1 subtracted (see
    printed_open_loop_constant); it is reported, never used as a rate.
    """
    c1: float
    M: float
    M_printed: float
    M_lip: float
    Nc1: float
    eta: float
    K1: float
    K1_proof_form: float
    K3: float
    K4: float
    L1: float
    L2: float
    L3: float
    spectral_margin: float
    spectrum_certified: bool
    resolvent_norm: float
    open_loop_pass: bool
    closed_loop_pass: bool
    observer_pass: bool

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def gain_report(params: SystemParams, c1: float) -> GainReport:
    spec = spectrum(params)
    open_loop = open_loop_condition(params)
    closed = closed_loop_condition(params, c1)
    observer = observer_condition(params, c1)
    wp = wellposedness_constants(params, c1)
    report = GainReport(
        c1=float(c1),
        M=open_loop.M,
        M_printed=printed_open_loop_constant(params),
        M_lip=lipschitz_aggregate(params),
        Nc1=kernel_bound_Nc1(c1),
        eta=observer.eta,
        K1=closed.K1,
        K1_proof_form=closed_loop_constant_proof_form(params, c1),
        K3=observer.K3,
        K4=observer.K4,
        L1=wp.L1,
        L2=wp.L2,
        L3=wp.L3,
        spectral_margin=spec.margin,
        spectrum_certified=spec.tail_certified,
        resolvent_norm=resolvent_norm(params.gamma),
        open_loop_pass=open_loop.passed,
        closed_loop_pass=closed.passed,
        observer_pass=observer.passed,
    )
    logger.debug(f"gain report c1={c1:g}: K1={report.K1:.4g} K3={report.K3:.4g} M={report.M:.4g}")
    return report


def equivalence_error(forward: Kernel, physical: Trajectory, target: Trajectory) -> float:
    """sup_t ||(I - K) u(t) - u~(t)|| / sup_t ||u~(t)|| over the shared snapshots."""
    if physical.snapshot_steps != target.snapshot_steps or not target.transformed:
        raise InvalidParameterError("need a physical and a target trajectory with the same snapshots")
    worst = max(
        l2_norm(forward_transform(forward, phys.u) - tgt.u)
        for phys, tgt in zip(physical.snapshots, target.snapshots)
    )
    scale = max(l2_norm(tgt.u) for tgt in target.snapshots)
    return worst / scale if scale > 0.0 else worst
