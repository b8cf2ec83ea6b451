#!/usr/bin/env python3
"""
pectl - Grid Module
-----------
Uniform 1-D discretization of [0, 1], sampled fields, and the composite
trapezoid rule every other module integrates with.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Union

import numpy as np

from .errors import GridMismatchError, InvalidParameterError

if TYPE_CHECKING:
    from .kernel import Kernel

DEFAULT_GRID_POINTS = 201


@dataclass(frozen=True)
class Grid:
    """Uniform grid x_i = i*h on [0, 1]."""
    n_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise InvalidParameterError(f"n_points must be an integer >= 3, got {self.n_points}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n_points, dtype=float) * self.h
        x[-1] = 1.0
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on the full interval."""
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w

    def field(self, values: Union[np.ndarray, Callable[[np.ndarray], np.ndarray], float]) -> "Field":
        """Build a Field from samples, a callable of x, or a constant."""
        if callable(values):
            data = values(self.nodes)
        elif np.isscalar(values):
            data = np.full(self.n_points, float(values))
        else:
            data = values
        return Field(self, np.asarray(data, dtype=float))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_points))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a function on a Grid. Immutable after construction."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.n_points,):
            raise InvalidParameterError(
                f"field has shape {vals.shape}, grid expects ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            check_same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def at_right(self) -> float:
        """Sample at x = 1 (the actuated and measured boundary)."""
        return float(self.values[-1])


def check_same_grid(a: Grid, b: Grid) -> None:
    if a.n_points != b.n_points:
        raise GridMismatchError(f"grid mismatch: {a.n_points} vs {b.n_points} points")


def composite_quadrature(values, h: float) -> float:
    """Composite trapezoid rule with spacing h."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise InvalidParameterError("composite_quadrature needs at least 2 samples")
    return float(h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))


def inner(f: Field, g: Field) -> float:
    """Trapezoid L2 inner product."""
    check_same_grid(f.grid, g.grid)
    return composite_quadrature(f.values * g.values, f.grid.h)


def l2_norm(f: Field) -> float:
    """Trapezoid approximation of (int_0^1 f^2 dx)^(1/2)."""
    return float(np.sqrt(max(composite_quadrature(f.values * f.values, f.grid.h), 0.0)))


def mass(f: Field) -> float:
    """int_0^1 f dx."""
    return composite_quadrature(f.values, f.grid.h)


def volterra_weights(n_points: int, h: float) -> np.ndarray:
    """Lower-triangular trapezoid weights: row i integrates over [0, x_i]."""
    w = np.tril(np.full((n_points, n_points), h))
    idx = np.arange(n_points)
    w[:, 0] = 0.5 * h
    w[idx, idx] = 0.5 * h
    w[0, 0] = 0.0
    return w


def volterra_apply(kernel: "Kernel", f: Field) -> Field:
    """g(x_i) = int_0^{x_i} K(x_i, y) f(y) dy by row-wise trapezoid."""
    check_same_grid(kernel.grid, f.grid)
    g = kernel.operator @ f.values
    g[0] = 0.0
    return Field(f.grid, g)
