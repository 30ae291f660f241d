import math

import numpy as np
import pytest

from ksradial.grid import (
    INITIAL_KINDS,
    build_grid,
    cell_gradient,
    grad_q_functional,
    integrate,
    lp_norm,
    make_initial_data,
    radial_derivative,
    sphere_area,
)


def test_sphere_area_known_values():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("n,R,expected", [(3, 1.0, 4 * math.pi / 3), (2, 1.0, math.pi), (1, 2.0, 4.0)])
def test_shell_volumes_sum_to_ball_volume(n, R, expected):
    g = build_grid(n, R, 64)
    assert abs(g.shell_volumes.sum() - expected) <= 1e-12 * expected
    assert g.volume == pytest.approx(expected, rel=1e-14)


def test_one_dimensional_shells_are_intervals():
    g = build_grid(1, 2.0, 8)
    np.testing.assert_allclose(g.shell_volumes, 0.5, rtol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("I", [8, 64, 512, 4096])
def test_quadrature_exact_for_constants(n, I):
    g = build_grid(n, 1.0, I)
    assert integrate(np.full(I, 2.5), g) == pytest.approx(2.5 * g.volume, rel=1e-12)


def test_grid_geometry_invariants():
    g = build_grid(3, 1.5, 16)
    assert np.all(np.diff(g.centers) > 0)
    assert np.all(g.faces[:-1] < g.centers) and np.all(g.centers < g.faces[1:])
    assert g.faces[0] == 0.0 and g.faces[-1] == 1.5
    assert g.face_areas[0] == 0.0
    with pytest.raises(ValueError):
        g.centers[0] = 1.0


@pytest.mark.parametrize("args", [(0, 1.0, 8), (3, 0.0, 8), (3, 1.0, 3), (3, -1.0, 8), (2.5, 1.0, 8)])
def test_build_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_grid_equality_by_spec():
    assert build_grid(3, 1.0, 32) == build_grid(3, 1.0, 32)
    assert hash(build_grid(3, 1.0, 32)) == hash(build_grid(3, 1.0, 32))
    assert build_grid(3, 1.0, 32) != build_grid(3, 1.0, 64)
    assert build_grid(2, 1.0, 32).spec() == {"n": 2, "R": 1.0, "I": 32}


def test_integrate_length_mismatch():
    with pytest.raises(ValueError):
        integrate(np.ones(5), build_grid(3, 1.0, 8))


def test_integrate_bump_second_order():
    # n = 1: 2 * int_0^1 (1 - r^2)^2 dr = 16/15
    errs = []
    for I in (32, 64, 128, 256):
        g = build_grid(1, 1.0, I)
        errs.append(abs(integrate((1 - g.centers**2) ** 2, g) - 16 / 15))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.9)


def test_lp_norm_constant_and_sup():
    g = build_grid(3, 1.0, 64)
    c = 3.0
    for p in (1.0, 2.0, 5.0):
        assert lp_norm(np.full(64, c), g, p) == pytest.approx(c * g.volume ** (1 / p), rel=1e-12)
    f = np.zeros(64)
    f[10] = 7.0
    assert lp_norm(f, g, math.inf) == 7.0
    with pytest.raises(ValueError):
        lp_norm(f, g, 0.5)


def test_lp_norm_of_r_converges():
    # n = 1, R = 1: (2 int_0^1 r^2)^(1/2) = (2/3)^(1/2)
    errs = []
    for I in (32, 64, 128):
        g = build_grid(1, 1.0, I)
        errs.append(abs(lp_norm(g.centers, g, 2.0) - math.sqrt(2 / 3)))
    assert errs[2] < errs[1] < errs[0]
    assert np.log2(errs[1] / errs[2]) > 1.9


def test_norm_monotonicity_random():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3):
        g = build_grid(n, 1.0, 50)
        for _ in range(20):
            f = rng.uniform(0, 5, 50) ** 3
            for p in (1.0, 2.0, 4.0):
                assert lp_norm(f, g, p) <= lp_norm(f, g, math.inf) * g.volume ** (1 / p) * (1 + 1e-12)


def test_radial_derivative_examples():
    g = build_grid(1, 1.0, 16)
    np.testing.assert_array_equal(radial_derivative(np.full(16, 4.0), g), 0.0)
    d = radial_derivative(g.centers.copy(), g)
    assert d[0] == 0.0 and d[-1] == 0.0
    np.testing.assert_allclose(d[1:-1], 1.0, rtol=1e-12)
    d2 = radial_derivative(g.centers**2, g)
    np.testing.assert_allclose(d2[1:-1], 2 * g.faces[1:-1], rtol=1e-12)


def test_cell_gradient_averages_faces():
    g = build_grid(2, 1.0, 8)
    f = g.centers**2
    d = radial_derivative(f, g)
    np.testing.assert_allclose(cell_gradient(f, g), 0.5 * (d[:-1] + d[1:]))


def test_grad_q_functional_examples():
    g = build_grid(3, 1.0, 32)
    c = np.full(32, 2.0)
    assert grad_q_functional(c, g, 4.0, 0.0) == 0.0
    assert grad_q_functional(c, g, 2.0, 1.0) == pytest.approx(g.volume, rel=1e-12)


def test_grad_q_functional_affine_n1():
    # int_{-1}^{1} |1|^3 = 2; the boundary cells carry a half-gradient, an O(h) defect
    errs = []
    for I in (32, 64, 128):
        g = build_grid(1, 1.0, I)
        errs.append(abs(grad_q_functional(g.centers.copy(), g, 3.0, 0.0) - 2.0))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 2.0 * 2.0 / 128


@pytest.mark.parametrize("kind", INITIAL_KINDS)
def test_initial_data_nonnegative_with_flat_boundaries(kind):
    g = build_grid(3, 1.0, 200)
    f = make_initial_data(kind, 2.0, g, center=0.5, width=0.05)
    assert np.all(f >= 0)
    d = radial_derivative(f, g)
    assert d[0] == 0.0 and d[-1] == 0.0


def test_initial_data_examples():
    g = build_grid(3, 1.0, 64)
    np.testing.assert_array_equal(make_initial_data("constant", 1.0, g), 1.0)
    bump = make_initial_data("poly_bump", 1.0, g)
    assert bump[0] == pytest.approx(1.0, abs=1e-3)
    # near R the bump is 4 (1 - r)^2, so the last difference is 8 h^2
    assert abs(bump[-1] - bump[-2]) == pytest.approx(8 * g.h**2, rel=0.05)


def test_mollified_step_close_to_step():
    g = build_grid(3, 1.0, 2000)
    width = 0.05
    f = make_initial_data("mollified_step", 1.0, g, center=0.5, width=width)
    step = np.where(g.centers < 0.5, 1.0, 0.0)
    l1 = integrate(np.abs(f - step), g)
    shell = g.sigma * 0.5**2  # area of the sphere where the step sits
    assert l1 <= 2.0 * width * shell
    # the profile is constant near R (flattened before mollifying)
    assert np.all(f[g.centers > 1 - width] == f[-1])


def test_initial_data_rejects_bad_input():
    g = build_grid(3, 1.0, 32)
    with pytest.raises(ValueError):
        make_initial_data("square", 1.0, g)
    with pytest.raises(ValueError):
        make_initial_data("poly_bump", -1.0, g)
    with pytest.raises(ValueError):
        make_initial_data("gaussian_bump", 1.0, g)
    with pytest.raises(ValueError):
        make_initial_data("gaussian_bump", 1.0, g, center=2.0, width=0.1)
