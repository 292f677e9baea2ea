import ast
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import latentcond.oracle as oracle
from latentcond.errors import GridTooSmallError, NonFiniteError, ShapeError
from latentcond.oracle import (
    Grid1D,
    Grid2D,
    empirical_tv,
    finite_diff_grad,
    gaussian_mle_closed_form,
    grid_ebm_density,
    relative_error,
)


def quad(p):
    return 0.5 * (p * p).sum(axis=1)


def double_well(p):
    return ((p[:, 0] ** 2 - 1) ** 2)


def sample_grid(grid, n, rng):
    """Exact draws from a 1-D grid distribution: pick a cell, then a uniform point in it."""
    cells = rng.choice(grid.n, size=n, p=grid.mass)
    return grid.lo + (cells + rng.random(n)) * grid.width


# ---------------------------------------------------------------- grid densities


def test_standard_normal_moments():
    g = grid_ebm_density(quad, 1.0, Grid1D(-8, 8))
    assert abs(g.mean()) < 1e-3 and abs(g.var() - 1) < 1e-3
    assert g.mass.sum() == pytest.approx(1.0, abs=1e-12) and np.all(g.mass >= 0)


def test_doubling_beta_halves_variance():
    v1 = grid_ebm_density(quad, 1.0, Grid1D(-8, 8)).var()
    v2 = grid_ebm_density(quad, 2.0, Grid1D(-8, 8)).var()
    assert abs(v2 - v1 / 2) < 1e-3


def test_double_well_modes_at_plus_minus_one():
    g = grid_ebm_density(double_well, 1.0, Grid1D(-3, 3))
    left, right = g.mass[: g.n // 2], g.mass[g.n // 2:]
    c = g.centers
    assert abs(c[np.argmax(left)] + 1) < 2 * g.width
    assert abs(c[g.n // 2 + np.argmax(right)] - 1) < 2 * g.width
    assert g.mass[g.n // 2] < left.max()


def test_narrow_grid_is_rejected():
    with pytest.raises(GridTooSmallError):
        grid_ebm_density(quad, 1.0, Grid1D(-2, 2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_energy_is_rejected():
    with pytest.raises(NonFiniteError):
        grid_ebm_density(lambda p: np.log(p[:, 0]), 1.0, Grid1D(-1, 1, 16))


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(0.2, 4.0))
def test_constant_shift_leaves_density_unchanged(shift, beta):
    a = grid_ebm_density(quad, beta, Grid1D(-10, 10, 512))
    b = grid_ebm_density(lambda p: quad(p) + shift, beta, Grid1D(-10, 10, 512))
    np.testing.assert_allclose(a.mass, b.mass, rtol=0, atol=1e-12)


def test_two_dimensional_grid_moments():
    g = grid_ebm_density(lambda p: 0.5 * p[:, 0] ** 2 + p[:, 1] ** 2, 1.0, Grid2D((-8, -8), (8, 8)))
    assert g.mass.shape == (256 * 256,)
    mean = g.mass @ g.centers
    var = g.mass @ (g.centers - mean) ** 2
    np.testing.assert_allclose(mean, 0, atol=1e-3)
    np.testing.assert_allclose(var, [1.0, 0.5], atol=2e-3)


def test_two_dimensional_cell_index():
    g = Grid2D((0, 0), (1, 2), (2, 4))
    idx = g.cell_index(np.array([[0.1, 0.1], [0.9, 1.9], [1.5, 0.5], [np.nan, 0.0]]))
    np.testing.assert_array_equal(idx, [0, 7, 8, 8])


# ---------------------------------------------------------------- total variation


def test_exact_samples_give_small_tv():
    g = grid_ebm_density(quad, 1.0, Grid1D(-8, 8)).coarsen(64)
    x = sample_grid(g, 10**6, np.random.default_rng(0))
    assert empirical_tv(x, g) <= 0.02


def test_disjoint_support_gives_one():
    g = Grid1D(0, 2, 2, np.array([1.0, 0.0]))
    assert empirical_tv(np.full(10, 1.5), g) == 1.0
    assert empirical_tv(np.full(10, 7.0), g) == 1.0


def test_half_mass_displaced_gives_half():
    g = Grid1D(0, 2, 2, np.array([1.0, 0.0]))
    assert empirical_tv(np.array([0.5, 1.5]), g) == 0.5


def test_empty_samples_rejected():
    with pytest.raises(ShapeError):
        empirical_tv(np.array([]), Grid1D(0, 1, 4, np.full(4, 0.25)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=1, max_size=40), st.lists(st.integers(0, 7), min_size=1, max_size=40))
def test_tv_is_symmetric_between_grid_supported_distributions(a, b):
    """Swapping which histogram is the reference leaves the distance unchanged."""
    g = Grid1D(0, 8, 8)
    pa = np.bincount(a, minlength=8) / len(a)
    pb = np.bincount(b, minlength=8) / len(b)
    xa, xb = np.array(a) + 0.5, np.array(b) + 0.5
    d1 = empirical_tv(xa, g.with_mass(pb))
    d2 = empirical_tv(xb, g.with_mass(pa))
    assert d1 == pytest.approx(d2, abs=1e-15)
    assert 0.0 <= d1 <= 1.0


# ---------------------------------------------------------------- finite differences


def test_quadratic_gradient_is_z():
    z = np.array([0.3, -1.2, 4.0])
    np.testing.assert_allclose(finite_diff_grad(lambda v: 0.5 * v @ v, z), z, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(1e-4, 1.0))
def test_linear_function_is_exact_for_any_step(a, h):
    a = np.array(a)
    g = finite_diff_grad(lambda v: float(a @ v), np.array([0.5, -1.0, 2.0]), h=h)
    np.testing.assert_allclose(g, a, rtol=1e-9, atol=1e-9)


def test_error_is_second_order():
    fn = lambda v: float((v ** 3).sum())  # noqa: E731
    z = np.array([0.7, -1.3])
    exact = 3 * z * z
    e1 = np.abs(finite_diff_grad(fn, z, h=1e-2) - exact)
    e2 = np.abs(finite_diff_grad(fn, z, h=5e-3) - exact)
    np.testing.assert_allclose(e1 / e2, 4.0, rtol=1e-3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_finite_diff_validates_inputs():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.zeros(2), h=0)
    with pytest.raises(NonFiniteError):
        finite_diff_grad(lambda v: float(np.log(v[0])), np.zeros(1))


def test_finite_diff_does_not_mutate_input():
    z = np.array([1.0, 2.0])
    finite_diff_grad(lambda v: float(v.sum()), z)
    np.testing.assert_array_equal(z, [1.0, 2.0])


# ---------------------------------------------------------------- Gaussian MLE


def test_mle_of_two_points():
    m, v = gaussian_mle_closed_form(np.array([-1.0, 1.0]))
    assert m[0] == 0.0 and v[0] == 1.0


def test_mle_of_constant_samples():
    _, v = gaussian_mle_closed_form(np.full((10, 3), 2.5))
    np.testing.assert_array_equal(v, 0.0)


def test_mle_of_standard_normal_draws():
    m, v = gaussian_mle_closed_form(np.random.default_rng(1).standard_normal(10**5))
    assert abs(m[0]) < 0.02 and abs(v[0] - 1) < 0.02


def test_mle_needs_two_samples():
    with pytest.raises(ShapeError):
        gaussian_mle_closed_form(np.ones((1, 2)))


def test_relative_error_scale():
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error([2.0], [1.0]) == 0.5


# ---------------------------------------------------------------- independence


def test_oracle_does_not_touch_the_autodiff_package():
    tree = ast.parse(Path(oracle.__file__).read_text())
    mods = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            mods.update(a.name for a in node.names)
        elif isinstance(node, ast.ImportFrom):
            mods.add(node.module or "")
    assert not any("diffcore" in m for m in mods), mods
