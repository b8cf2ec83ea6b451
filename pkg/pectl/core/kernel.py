#!/usr/bin/env python3
"""
pectl - Backstepping Kernel Module
-----------
Builds the Volterra kernel k(x, y) of the state transform

    u~(x) = u(x) - int_0^x k(x, y) u(y) dy,

which solves k_yy - k_xx + c1 k = 0, k_y(x, 0) = 0, k(x, x) = -c1 x / 2 on
0 <= y <= x <= 1, and the kernel l(x, y) of its inverse.

k is computed by successive approximations on the Goursat form of the
kernel equation. With the even extension in y and characteristic
coordinates xi = x + y, eta = x - y, G(xi, eta) = k(x, y) satisfies

    G(xi, eta) = -c1 (xi + eta) / 4 + (c1 / 4) int_0^xi int_0^eta G

on the quadrant xi, eta >= 0. Each Picard sweep is a pair of cumulative
trapezoid integrals over the whole (xi, eta) array.

l is defined operationally as the kernel of (I - K)^-1 - I for the
discretized operator, so forward and inverse transforms compose to the
identity at the discrete level.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_triangular

from .errors import ConvergenceError, InvalidParameterError
from .grid import Field, Grid, check_same_grid, volterra_apply, volterra_weights

logger = logging.getLogger(__name__)

DEFAULT_PICARD_ITERATIONS = 60
DEFAULT_PICARD_TOLERANCE = 1e-12
# The bound is reported as infinite once N^2 would leave the float range.
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class KernelConfig:
    """Design gain and Picard controls."""
    c1: float = 2.0
    picard_iterations: int = DEFAULT_PICARD_ITERATIONS
    tolerance: float = DEFAULT_PICARD_TOLERANCE

    def __post_init__(self):
        if not (np.isfinite(self.c1) and self.c1 > 0.0):
            raise InvalidParameterError(f"c1 must be positive, got {self.c1}")
        if self.picard_iterations < 1:
            raise InvalidParameterError("picard_iterations must be positive")
        if not self.tolerance > 0.0:
            raise InvalidParameterError("tolerance must be positive")


@dataclass(frozen=True, eq=False)
class Kernel:
    """Lower-triangular samples k[i, j] = k(x_i, x_j), j <= i (zeros above).

    ``kx_at_1`` holds dk/dx(1, y_j) and ``k11`` = k(1, 1); together they
    make up the boundary feedback law.
    """
    grid: Grid
    c1: float
    k_values: np.ndarray
    k_diag: np.ndarray
    kx_at_1: np.ndarray
    k11: float
    iterations: int = 0
    residual: float = 0.0
    inverse: bool = False

    def __post_init__(self):
        for name in ("k_values", "k_diag", "kx_at_1"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @cached_property
    def operator(self) -> np.ndarray:
        """Trapezoid-weighted Volterra matrix: (operator @ f)[i] ~ int_0^x_i k f."""
        op = volterra_weights(self.grid.n_points, self.grid.h) * self.k_values
        op.setflags(write=False)
        return op

    def transform_matrix(self) -> np.ndarray:
        """Discrete I - K (forward) or I + L (inverse)."""
        sign = 1.0 if self.inverse else -1.0
        return np.eye(self.grid.n_points) + sign * self.operator

    @classmethod
    def zero(cls, grid: Grid, c1: float = 0.0) -> "Kernel":
        n = grid.n_points
        return cls(grid, c1, np.zeros((n, n)), np.zeros(n), np.zeros(n), 0.0)


def _goursat_grid(cfg: KernelConfig, grid: Grid):
    """Picard iteration for G on the (xi, eta) square [0, 2]^2."""
    h = grid.h
    m = 2 * (grid.n_points - 1) + 1
    s = np.arange(m) * h
    xi, eta = np.meshgrid(s, s, indexing="ij")
    g0 = -0.25 * cfg.c1 * (xi + eta)
    p, q = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    triangle = (p + q) <= 2 * (grid.n_points - 1)

    g = g0.copy()
    residual = np.inf
    for iteration in range(1, cfg.picard_iterations + 1):
        integral = cumulative_trapezoid(
            cumulative_trapezoid(g, dx=h, axis=0, initial=0.0), dx=h, axis=1, initial=0.0
        )
        g_next = g0 + 0.25 * cfg.c1 * integral
        residual = float(np.max(np.abs(g_next - g)[triangle]))
        g = g_next
        if residual <= cfg.tolerance:
            logger.debug(f"Picard converged after {iteration} sweeps (residual {residual:.2e})")
            return g, iteration, residual
    raise ConvergenceError("kernel Picard iteration did not converge", cfg.picard_iterations, residual)


def _sample_triangle(g: np.ndarray, n: int) -> np.ndarray:
    rows, cols = np.tril_indices(n)
    k = np.zeros((n, n))
    k[rows, cols] = g[rows + cols, rows - cols]
    return k


def build_kernel(cfg: KernelConfig, grid: Grid) -> Kernel:
    """Backstepping kernel k on ``grid``."""
    n, h = grid.n_points, grid.h
    g, iterations, residual = _goursat_grid(cfg, grid)
    k = _sample_triangle(g, n)

    diag = -0.5 * cfg.c1 * grid.nodes
    k[np.arange(n), np.arange(n)] = diag
    assert np.max(np.abs(np.diag(k) + 0.5 * cfg.c1 * grid.nodes)) == 0.0

    # k_x = G_xi + G_eta along the top row x = 1 (xi + eta = 2).
    g_xi = np.gradient(g, h, axis=0, edge_order=2)
    g_eta = np.gradient(g, h, axis=1, edge_order=2)
    j = np.arange(n)
    kx_at_1 = g_xi[n - 1 + j, n - 1 - j] + g_eta[n - 1 + j, n - 1 - j]

    logger.info(f"Built kernel c1={cfg.c1:g} on {n} points in {iterations} sweeps")
    return Kernel(grid, cfg.c1, k, diag, kx_at_1, float(diag[-1]), iterations, residual)


def _top_row_x_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """d/dx of lower-triangular samples at x = 1.

    Second-order backward differences where the stencil stays in the
    triangle; the last two columns are extrapolated quadratically in y.
    """
    n = values.shape[0]
    out = np.empty(n)
    cols = np.arange(n - 2)
    out[: n - 2] = (3.0 * values[n - 1, cols] - 4.0 * values[n - 2, cols] + values[n - 3, cols]) / (2.0 * h)
    for j in (n - 2, n - 1):
        out[j] = 3.0 * out[j - 1] - 3.0 * out[j - 2] + out[j - 3]
    return out


def build_inverse_kernel(cfg: KernelConfig, grid: Grid, forward: Optional[Kernel] = None) -> Kernel:
    """Kernel l with (I + L) = (I - K)^-1 exactly for the discrete operators."""
    if forward is None:
        forward = build_kernel(cfg, grid)
    check_same_grid(forward.grid, grid)
    n, h = grid.n_points, grid.h

    a = forward.transform_matrix()
    expected_diag = 1.0 - 0.5 * h * forward.k_diag
    expected_diag[0] = 1.0
    # Trapezoid puts h/2 on the diagonal, so the discrete I - K has diagonal 1 + O(h).
    assert np.array_equal(np.diag(a), expected_diag)

    resolvent = solve_triangular(a, np.eye(n), lower=True) - np.eye(n)
    weights = volterra_weights(n, h)
    ell = np.zeros((n, n))
    mask = weights > 0.0
    ell[mask] = resolvent[mask] / weights[mask]
    ell = np.tril(ell)

    logger.info(f"Built inverse kernel c1={cfg.c1:g} on {n} points")
    return Kernel(
        grid,
        cfg.c1,
        ell,
        np.diag(ell).copy(),
        _top_row_x_derivative(ell, h),
        float(ell[-1, -1]),
        inverse=True,
    )


def forward_transform(kernel: Kernel, u: Field) -> Field:
    """u~ = u - int_0^x k(x, y) u(y) dy."""
    return u - volterra_apply(kernel, u)


def inverse_transform(kernel: Kernel, utilde: Field) -> Field:
    """u = u~ + int_0^x l(x, y) u~(y) dy."""
    return utilde + volterra_apply(kernel, utilde)


def kernel_bound_Nc1(c1: float) -> float:
    """L2 bound shared by k and l: sqrt(c1 pi / 8) (erfi(a) erf(a))^(1/2), a = sqrt(2 / c1).

    erfi(a) is evaluated as 2/sqrt(pi) exp(a^2) D(a) (Dawson's integral) so the
    product stays finite; N is inf once N^2 would overflow.
    """
    if not (np.isfinite(c1) and c1 > 0.0):
        raise InvalidParameterError(f"c1 must be positive, got {c1}")
    a = np.sqrt(2.0 / c1)
    log_sq = (
        np.log(c1 * np.pi / 8.0)
        + np.log(special.erf(a))
        + np.log(2.0 / np.sqrt(np.pi) * special.dawsn(a))
        + a * a
    )
    if log_sq > _EXP_LIMIT:
        return float("inf")
    return float(np.exp(0.5 * log_sq))


def bessel_kernel(c1: float, x, y) -> np.ndarray:
    """Closed form k(x, y) = -c1 x I1(z) / z, z = sqrt(c1 (x^2 - y^2)). Oracle only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.sqrt(np.maximum(c1 * (x * x - y * y), 0.0))
    ratio = np.where(z > 1e-8, special.i1(z) / np.where(z > 1e-8, z, 1.0), 0.5)
    return -c1 * x * ratio


def bessel_inverse_kernel(c1: float, x, y) -> np.ndarray:
    """Closed form l(x, y) = -c1 x J1(z) / z. Oracle only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.sqrt(np.maximum(c1 * (x * x - y * y), 0.0))
    ratio = np.where(z > 1e-8, special.j1(z) / np.where(z > 1e-8, z, 1.0), 0.5)
    return -c1 * x * ratio


def wave_operator(kernel: Kernel) -> np.ndarray:
    """Central-difference k_xx - k_yy on interior nodes 1 <= j < i <= n - 2 (NaN elsewhere)."""
    k = kernel.k_values
    n, h = kernel.grid.n_points, kernel.grid.h
    out = np.full((n, n), np.nan)
    i, j = np.tril_indices(n, k=-1)
    keep = (i <= n - 2) & (j >= 1)
    i, j = i[keep], j[keep]
    k_xx = k[i + 1, j] - 2.0 * k[i, j] + k[i - 1, j]
    k_yy = k[i, j + 1] - 2.0 * k[i, j] + k[i, j - 1]
    out[i, j] = (k_xx - k_yy) / (h * h)
    return out


def pde_residual(kernel: Kernel) -> float:
    """max |k_yy - k_xx + c1 k| over interior nodes."""
    wave = wave_operator(kernel)
    res = -wave + kernel.c1 * kernel.k_values
    return float(np.nanmax(np.abs(res)))


def ky_at_zero(kernel: Kernel) -> float:
    """max_x |dk/dy(x, 0)| by the one-sided second-order difference (rows x >= 2h)."""
    k = kernel.k_values
    d = (-3.0 * k[2:, 0] + 4.0 * k[2:, 1] - k[2:, 2]) / (2.0 * kernel.grid.h)
    return float(np.max(np.abs(d)))


def l2_norm_2d(kernel: Kernel) -> float:
    """Trapezoid L2 norm of k over the triangle 0 <= y <= x <= 1."""
    grid = kernel.grid
    row_integrals = (volterra_weights(grid.n_points, grid.h) * kernel.k_values ** 2).sum(axis=1)
    return float(np.sqrt(np.dot(grid.weights, row_integrals)))


@dataclass(frozen=True)
class InverseKernelDiagnostic:
    """How well the operational l satisfies each candidate variant of its PDE."""
    residual_c1: float
    residual_c1_squared: float
    diagonal_error_c1: float
    diagonal_error_c1_squared: float

    @property
    def best_variant(self) -> str:
        score_c1 = self.residual_c1 + self.diagonal_error_c1
        score_sq = self.residual_c1_squared + self.diagonal_error_c1_squared
        return "c1" if score_c1 <= score_sq else "c1^2"


def inverse_kernel_diagnostic(inverse: Kernel) -> InverseKernelDiagnostic:
    """Compare l against l_xx - l_yy + c l = 0, l(x, x) = -c x / 2 for c = c1 and c1^2.

    Rows next to the diagonal are skipped: the operational diagonal carries an
    O(h) offset that a second difference would amplify.
    """
    c1 = inverse.c1
    wave = wave_operator(inverse)
    n = inverse.grid.n_points
    i, j = np.indices((n, n))
    wave[j >= i - 1] = np.nan
    ell = inverse.k_values
    x = inverse.grid.nodes

    def residual(c: float) -> float:
        return float(np.nanmax(np.abs(wave + c * ell)))

    def diag_error(c: float) -> float:
        return float(np.max(np.abs(inverse.k_diag + 0.5 * c * x)))

    diagnostic = InverseKernelDiagnostic(residual(c1), residual(c1 * c1), diag_error(c1), diag_error(c1 * c1))
    logger.debug(f"Inverse kernel matches the {diagnostic.best_variant} variant")
    return diagnostic


def export_csv(kernel: Kernel, path: Union[str, Path]) -> Path:
    """Write (x, y, k) for j <= i with a one-line c1 / n_points header."""
    path = Path(path)
    x = kernel.grid.nodes
    rows, cols = np.tril_indices(kernel.grid.n_points)
    table = np.column_stack([x[rows], x[cols], kernel.k_values[rows, cols]])
    with open(path, "w") as f:
        kind = "inverse" if kernel.inverse else "forward"
        f.write(f"# c1={float(kernel.c1)!r} n_points={kernel.grid.n_points} kind={kind}\n")
        np.savetxt(f, table, delimiter=",", header="x,y,k", comments="", fmt="%.17g")
    logger.info(f"Kernel written to {path}")
    return path


def import_csv(path: Union[str, Path]) -> Kernel:
    """Read a table written by export_csv back into a Kernel.

    Only k is stored, so ``kx_at_1`` is rebuilt from the table by one-sided
    differences and agrees with the built kernel to O(h^2).
    """
    path = Path(path)
    with open(path) as f:
        header = f.readline()
    if not header.startswith("#"):
        raise InvalidParameterError(f"{path}: missing '# c1=... n_points=...' header")
    fields = dict(token.split("=", 1) for token in header[1:].split() if "=" in token)
    try:
        c1 = float(fields["c1"])
        n = int(fields["n_points"])
    except (KeyError, ValueError):
        raise InvalidParameterError(f"{path}: cannot read c1 and n_points from {header.strip()!r}") from None
    kind = fields.get("kind", "forward")
    if kind not in ("forward", "inverse"):
        raise InvalidParameterError(f"{path}: unknown kernel kind {kind!r}")

    grid = Grid(n)
    table = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    rows, cols = np.tril_indices(n)
    if table.shape != (rows.size, 3):
        raise InvalidParameterError(f"{path}: expected {rows.size} rows of x,y,k, got {table.shape}")
    x = grid.nodes
    if not (np.allclose(table[:, 0], x[rows], atol=1e-12) and np.allclose(table[:, 1], x[cols], atol=1e-12)):
        raise InvalidParameterError(f"{path}: nodes do not match a uniform grid of {n} points")

    k = np.zeros((n, n))
    k[rows, cols] = table[:, 2]
    logger.info(f"Kernel read from {path} ({kind}, c1={c1:g}, {n} points)")
    return Kernel(grid, c1, k, np.diag(k).copy(), _top_row_x_derivative(k, grid.h), float(k[-1, -1]),
                  inverse=kind == "inverse")
