import numpy as np
import pytest
from scipy import integrate

from pectl.core.errors import GridMismatchError, InvalidParameterError
from pectl.core.grid import (
    Grid,
    composite_quadrature,
    inner,
    l2_norm,
    mass,
    volterra_apply,
)
from pectl.core.kernel import Kernel


def make_kernel(grid, values):
    n = grid.n_points
    k = np.tril(values)
    return Kernel(grid, 1.0, k, np.diag(k), np.zeros(n), float(k[-1, -1]))


def test_grid_rejects_too_few_points():
    with pytest.raises(InvalidParameterError):
        Grid(2)


def test_nodes_and_weights():
    grid = Grid(11)
    assert grid.h == pytest.approx(0.1)
    assert grid.nodes[0] == 0.0 and grid.nodes[-1] == 1.0
    assert grid.weights.sum() == pytest.approx(1.0)


def test_field_is_immutable():
    f = Grid(11).field(1.0)
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_field_rejects_wrong_shape_and_nonfinite():
    grid = Grid(11)
    with pytest.raises(InvalidParameterError):
        grid.field(np.zeros(5))
    with pytest.raises(InvalidParameterError):
        grid.field(np.full(11, np.nan))


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        Grid(11).field(1.0) + Grid(21).field(1.0)
    with pytest.raises(GridMismatchError):
        inner(Grid(11).field(1.0), Grid(21).field(1.0))


def test_l2_norm_examples():
    grid = Grid(201)
    assert l2_norm(grid.zeros()) == 0.0
    assert l2_norm(grid.field(1.0)) == pytest.approx(1.0, abs=1e-14)
    assert l2_norm(grid.field(lambda x: np.cos(np.pi * x))) == pytest.approx(np.sqrt(0.5), abs=1e-3)


def test_mass_of_linear_profile():
    grid = Grid(51)
    assert mass(grid.field(lambda x: x)) == pytest.approx(0.5, abs=1e-14)


def test_composite_quadrature():
    assert composite_quadrature([1.0, 1.0], 1.0) == 1.0
    assert composite_quadrature([0.0, 1.0], 1.0) == 0.5
    x = np.linspace(0.0, 1.0, 101)
    assert composite_quadrature(x ** 2, 0.01) == pytest.approx(1.0 / 3.0, abs=1e-4)
    with pytest.raises(InvalidParameterError):
        composite_quadrature([1.0], 1.0)


def test_volterra_zero_kernel():
    grid = Grid(21)
    out = volterra_apply(make_kernel(grid, np.zeros((21, 21))), grid.field(np.cos))
    assert np.all(out.values == 0.0)


def test_volterra_unit_kernel_integrates_constants_exactly():
    grid = Grid(21)
    out = volterra_apply(make_kernel(grid, np.ones((21, 21))), grid.field(1.0))
    np.testing.assert_allclose(out.values, grid.nodes, atol=1e-14)


def test_volterra_kernel_y():
    grid = Grid(41)
    values = np.tile(grid.nodes, (41, 1))
    out = volterra_apply(make_kernel(grid, values), grid.field(1.0))
    assert abs(out.at_right() - 0.5) <= grid.h ** 2


def test_volterra_grid_mismatch():
    grid = Grid(21)
    with pytest.raises(GridMismatchError):
        volterra_apply(make_kernel(grid, np.ones((21, 21))), Grid(11).field(1.0))


def test_norms_go_through_composite_quadrature():
    grid = Grid(31)
    f = grid.field(lambda x: np.exp(x) * np.sin(3.0 * x))
    g = grid.field(lambda x: 1.0 + x)
    assert mass(f) == composite_quadrature(f.values, grid.h)
    assert inner(f, g) == composite_quadrature(f.values * g.values, grid.h)
    assert l2_norm(f) ** 2 == pytest.approx(composite_quadrature(f.values ** 2, grid.h), rel=1e-15)
    assert mass(f) == pytest.approx(float(np.dot(grid.weights, f.values)), rel=1e-14)


def test_l2_norm_converges_at_second_order():
    def f(x):
        return np.exp(x) * np.sin(3.0 * x)

    exact = np.sqrt(integrate.quad(lambda x: f(x) ** 2, 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0])
    errors = [abs(l2_norm(Grid(n).field(f)) - exact) for n in (51, 101, 201, 401)]
    ratios = [coarse / fine for coarse, fine in zip(errors, errors[1:])]
    assert errors[0] < 1e-2
    for ratio in ratios:
        assert 3.5 <= ratio <= 4.5


def test_l2_norm_is_a_norm():
    grid = Grid(101)
    rng = np.random.default_rng(4)
    for _ in range(50):
        f = grid.field(rng.standard_normal(grid.n_points))
        g = grid.field(rng.standard_normal(grid.n_points))
        scale = rng.uniform(-10.0, 10.0)
        assert l2_norm(scale * f) == pytest.approx(abs(scale) * l2_norm(f), rel=1e-12)
        assert l2_norm(f + g) <= l2_norm(f) + l2_norm(g) + 1e-12


def test_volterra_is_linear():
    grid = Grid(41)
    rng = np.random.default_rng(8)
    kernel = make_kernel(grid, rng.standard_normal((41, 41)))
    f = grid.field(rng.standard_normal(41))
    g = grid.field(np.cos)
    a, b = 2.5, -0.75
    combined = volterra_apply(kernel, a * f + b * g).values
    separate = a * volterra_apply(kernel, f).values + b * volterra_apply(kernel, g).values
    np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-12)
