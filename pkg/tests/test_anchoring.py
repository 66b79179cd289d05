import numpy as np
import pytest

from colloidfield import (
    ConfigurationError,
    INFINITE,
    ValidationError,
    boundary_data,
    build_grid,
    dirichlet_anchoring,
    is_infinite,
    sphere,
    spheroid,
    surface_energy_eval,
    surface_energy_gradient,
    weak_anchoring,
)
from conftest import E1, E3, random_tangent


def test_weak_at_preferred_is_zero(small_grid):
    nD = boundary_data("homeotropic", small_grid.shape, small_grid.angular)
    F = weak_anchoring(small_grid, 0.7, nD)
    assert surface_energy_eval(F, nD) == 0.0
    assert np.max(np.abs(surface_energy_gradient(F, nD))) == 0.0


def test_homeotropic_sphere_against_uniform_state():
    g = build_grid(sphere(), 8, (32, 64), 16.0)
    F = weak_anchoring(g, 1.0, boundary_data("homeotropic", g.shape, g.angular))
    val = surface_energy_eval(F, np.tile(E3, (g.n_ang, 1)))
    assert abs(val / (8 * np.pi) - 1) <= 1e-3


def test_dirichlet_violation_is_infinite(small_grid):
    nD = np.tile(E3, (small_grid.n_ang, 1))
    F = dirichlet_anchoring(small_grid, nD)
    assert surface_energy_eval(F, nD) == 0.0
    nb = nD.copy()
    nb[3] = E1
    assert is_infinite(surface_energy_eval(F, nb))
    assert surface_energy_eval(F, nb) is INFINITE


def test_weak_gradient_finite_differences(small_grid):
    nD = boundary_data("homeotropic", small_grid.shape, small_grid.angular)
    F = weak_anchoring(small_grid, 0.4, nD)
    rng = np.random.default_rng(3)
    nb = np.tile(np.array([0.6, 0.0, 0.8]), (small_grid.n_ang, 1))
    g = surface_energy_gradient(F, nb)
    h = 1e-6
    for _ in range(20):
        d = random_tangent(rng, nb)
        p = nb + h * d
        m = nb - h * d
        p /= np.linalg.norm(p, axis=1)[:, None]
        m /= np.linalg.norm(m, axis=1)[:, None]
        fd = (surface_energy_eval(F, p) - surface_energy_eval(F, m)) / (2 * h)
        an = float(np.sum(g * d))
        assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-3)


def test_gradient_linear_in_W(small_grid):
    nD = boundary_data("homeotropic", small_grid.shape, small_grid.angular)
    nb = np.tile(E3, (small_grid.n_ang, 1))
    g1 = surface_energy_gradient(weak_anchoring(small_grid, 1.0, nD), nb)
    g2 = surface_energy_gradient(weak_anchoring(small_grid, 2.0, nD), nb)
    assert np.array_equal(g2, 2.0 * g1)


def test_boundary_patterns(small_grid):
    ang = small_grid.angular
    nD = boundary_data("homeotropic", sphere(), ang)
    assert np.allclose(nD, ang.unit_vectors, atol=1e-14)
    assert np.array_equal(boundary_data("uniform", sphere(), ang, m=E1), np.tile(E1, (ang.size, 1)))
    tilted = boundary_data("tilted", sphere(), ang, alpha=0.3, axis=E3)
    cosang = np.einsum("ij,ij->i", tilted, nD)
    off_axis = np.linalg.norm(np.cross(E3, nD), axis=1) > 1e-10
    assert np.allclose(cosang[off_axis], np.cos(0.3))


def test_negative_strength_rejected(small_grid):
    with pytest.raises(ConfigurationError):
        weak_anchoring(small_grid, -1.0, np.tile(E3, (small_grid.n_ang, 1)))


def test_non_unit_boundary_rejected(small_grid):
    F = weak_anchoring(small_grid, 1.0, np.tile(E3, (small_grid.n_ang, 1)))
    with pytest.raises(ValidationError):
        surface_energy_eval(F, np.tile(2 * E3, (small_grid.n_ang, 1)))


def test_spheroid_normals_unit():
    g = build_grid(spheroid(1.0, 1.5), 8, (8, 16), 12.0)
    nu = boundary_data("homeotropic", g.shape, g.angular)
    assert np.allclose(np.linalg.norm(nu, axis=1), 1.0, atol=1e-14)
