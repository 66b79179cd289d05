import numpy as np
import pytest

from colloidfield import (
    ConfigurationError,
    DirectorField,
    DirectorMinimizer,
    SolveConfig,
    boundary_data,
    build_grid,
    descent_step,
    dirichlet_anchoring,
    energy_gradient,
    project_to_sphere,
    solve_director,
    sphere,
    total_energy,
    weak_anchoring,
)
from conftest import E3, random_tangent


@pytest.fixture(scope="module")
def grid16():
    return build_grid(sphere(), 16, (16, 32), 16.0)


@pytest.fixture(scope="module")
def weak_solution():
    g = build_grid(sphere(), 24, (16, 32), 16.0)
    F = weak_anchoring(g, 0.05, boundary_data("homeotropic", g.shape, g.angular))
    n, rep = solve_director(g.shape, F, E3, g, SolveConfig())
    return g, F, n, rep


def test_step_at_stationary_point(grid16):
    F = weak_anchoring(grid16, 0.0, boundary_data("homeotropic", grid16.shape, grid16.angular))
    n = DirectorField.constant(grid16, E3)
    out, e, step = descent_step(n, F, SolveConfig())
    assert step == 0.0 and e == 0.0
    assert np.array_equal(out.values, n.values)


def test_step_decreases_energy_and_keeps_unit_norm(grid16):
    F = weak_anchoring(grid16, 0.1, boundary_data("homeotropic", grid16.shape, grid16.angular))
    rng = np.random.default_rng(0)
    v = project_to_sphere(E3 + 0.2 * rng.standard_normal((grid16.size, 3)))
    v[grid16.outer] = E3
    n = DirectorField(grid16, v, E3)
    e0 = total_energy(n, F)
    out, e1, step = descent_step(n, F, SolveConfig())
    assert e1 < e0 and step > 0
    assert np.max(np.abs(np.linalg.norm(out.values, axis=1) - 1)) <= 1e-12


def test_trivial_dirichlet_problem(grid16):
    F = dirichlet_anchoring(grid16, np.tile(E3, (grid16.n_ang, 1)))
    n, rep = solve_director(grid16.shape, F, E3, grid16, SolveConfig())
    assert np.array_equal(n.values, np.tile(E3, (grid16.size, 1)))
    assert rep.energy == 0.0 and rep.iterations <= 1 and rep.converged


def test_weak_homeotropic_energy(weak_solution):
    g, F, n, rep = weak_solution
    W = 0.05
    assert rep.converged
    assert abs(rep.energy - 8 * np.pi * W) / (8 * np.pi * W) <= 0.15
    # linear response: the l=1 tangential forcing relaxes by W^2 b^2 / (l + 1 + W)
    linear = 8 * np.pi * W - 2 * W**2 * (4 * np.pi / 3) / (2 + W)
    assert abs(rep.energy / linear - 1) <= 0.02


def test_solver_contract(weak_solution):
    g, F, n, rep = weak_solution
    assert np.max(np.abs(np.linalg.norm(n.values, axis=1) - 1)) <= 1e-12
    assert np.all(np.diff(rep.energy_trace) <= 0)
    assert np.linalg.norm(energy_gradient(n, F)) <= SolveConfig().resolved_grad_tol(g)


def test_local_minimality_under_compact_perturbations(weak_solution):
    g, F, n, rep = weak_solution
    rng = np.random.default_rng(11)
    free = np.ones(g.size, bool)
    free[g.outer] = False
    for _ in range(50):
        c = g.points[rng.integers(g.size)]
        rad = rng.uniform(0.5, 3.0)
        bump = np.clip(1 - np.linalg.norm(g.points - c, axis=1) ** 2 / rad**2, 0, None) ** 2
        d = random_tangent(rng, n.values) * (bump * free)[:, None]
        d /= np.linalg.norm(d) + 1e-300
        for eps in (1e-3, 1e-2):
            trial = DirectorField(g, project_to_sphere(n.values + eps * d), E3)
            assert total_energy(trial, F) >= rep.energy - 1e-12 * rep.energy


def test_seed_independence(grid16):
    F = weak_anchoring(grid16, 0.1, boundary_data("homeotropic", grid16.shape, grid16.angular))
    _, r1 = solve_director(grid16.shape, F, E3, grid16, SolveConfig(seed=1, max_iters=30))
    _, r2 = solve_director(grid16.shape, F, E3, grid16, SolveConfig(seed=2, max_iters=30))
    assert r1.energy_trace == r2.energy_trace


@pytest.mark.parametrize("outer_bc", ["monopole_robin", "dtn"])
def test_alternative_outer_conditions_converge(grid16, outer_bc):
    F = weak_anchoring(grid16, 0.1, boundary_data("homeotropic", grid16.shape, grid16.angular))
    n, rep = solve_director(grid16.shape, F, E3, grid16, SolveConfig(outer_bc=outer_bc))
    assert np.all(np.diff(rep.energy_trace) <= 0)
    assert abs(rep.energy / (8 * np.pi * 0.1) - 1) <= 0.15


def test_gradient_method_also_decreases(grid16):
    F = weak_anchoring(grid16, 0.1, boundary_data("homeotropic", grid16.shape, grid16.angular))
    _, rep = solve_director(grid16.shape, F, E3, grid16, SolveConfig(method="gradient", max_iters=20))
    assert np.all(np.diff(rep.energy_trace) <= 0)


def test_invalid_settings():
    with pytest.raises(ConfigurationError):
        SolveConfig(outer_bc="neumann")
    with pytest.raises(ConfigurationError):
        SolveConfig(max_iters=0)
    with pytest.raises(ConfigurationError):
        SolveConfig(init="warm_start").__class__(init="bogus")


def test_estimator_wrapper(grid16):
    F = weak_anchoring(grid16, 0.1, boundary_data("homeotropic", grid16.shape, grid16.angular))
    est = DirectorMinimizer(grid=grid16, anchoring=F, max_iters=500)
    assert est.get_params()["max_iters"] == 500
    est.fit(E3)
    assert est.score() == -est.energy_
    assert est.field_.values.shape == (grid16.size, 3)
