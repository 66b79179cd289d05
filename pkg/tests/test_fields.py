import numpy as np
import pytest

from colloidfield import (
    DegenerateProjectionError,
    DirectorField,
    admissibility_norm,
    boundary_data,
    build_grid,
    dirichlet_energy,
    energy_gradient,
    harmonic_map_residual,
    project_to_sphere,
    real_sph_harm,
    robin_outer_values,
    rotation_matrix,
    sh_index,
    sphere,
    total_energy,
    weak_anchoring,
)
from conftest import E1, E3, hedgehog, random_tangent


def test_projection_examples():
    assert np.allclose(project_to_sphere(np.array([[0.0, 0.0, 2.0]])), [[0, 0, 1]])
    u = np.array([[0.6, 0.0, 0.8]])
    assert np.array_equal(project_to_sphere(u), u)
    with pytest.raises(DegenerateProjectionError):
        project_to_sphere(np.zeros((1, 3)))


def test_constant_field_has_zero_energy(sphere_grid):
    assert dirichlet_energy(DirectorField.constant(sphere_grid, E3)) == 0.0


def test_hedgehog_energy():
    g = build_grid(sphere(), 32, (32, 64), 16.0)
    n = DirectorField.from_function(g, hedgehog, E3)
    assert abs(dirichlet_energy(n) / (8 * np.pi * 15) - 1) <= 1e-2


def test_energy_frame_invariance(sphere_grid):
    rng = np.random.default_rng(1)
    base = DirectorField.from_function(
        sphere_grid, lambda x: E3 + 0.3 * np.sin(x) / np.linalg.norm(x, axis=1)[:, None], E3
    )
    R = rotation_matrix(rng.standard_normal(3), 0.7)
    rot = DirectorField(sphere_grid, base.values @ R.T, R @ E3)
    e0, e1 = dirichlet_energy(base), dirichlet_energy(rot)
    assert abs(e0 - e1) <= 1e-12 * max(1.0, e0)


def _smooth_field(grid, n0, eps=0.2):
    def f(x):
        r = np.linalg.norm(x, axis=1)[:, None]
        return n0 + eps * np.stack([np.cos(x[:, 2]), np.sin(x[:, 0]), x[:, 1] / r[:, 0]], 1) / r

    return DirectorField.from_function(grid, f, n0)


@pytest.mark.parametrize("outer_bc", ["dirichlet_n0", "monopole_robin", "dtn"])
def test_gradient_matches_finite_differences(small_grid, outer_bc):
    g = small_grid
    n0 = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    F = weak_anchoring(g, 0.3, boundary_data("homeotropic", g.shape, g.angular))
    n = _smooth_field(g, n0)
    if outer_bc == "dirichlet_n0":
        n.values[g.outer] = n0
    elif outer_bc == "monopole_robin":
        n.values[g.outer] = robin_outer_values(g, n.values, n0)[1]
    grad = energy_gradient(n, F, outer_bc)
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(20):
        d = random_tangent(rng, n.values)
        if outer_bc != "dtn":
            d[g.outer] = 0.0
        plus = DirectorField(g, project_to_sphere(n.values + h * d), n0)
        minus = DirectorField(g, project_to_sphere(n.values - h * d), n0)
        if outer_bc == "monopole_robin":
            plus.values[g.outer] = robin_outer_values(g, plus.values, n0)[1]
            minus.values[g.outer] = robin_outer_values(g, minus.values, n0)[1]
        fd = (total_energy(plus, F, outer_bc) - total_energy(minus, F, outer_bc)) / (2 * h)
        an = float(np.sum(grad * d))
        assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-3)


def test_gradient_vanishes_at_constant(small_grid):
    F = weak_anchoring(small_grid, 0.0, boundary_data("homeotropic", small_grid.shape, small_grid.angular))
    g = energy_gradient(DirectorField.constant(small_grid, E3), F)
    assert np.max(np.abs(g)) == 0.0


def test_gradient_is_tangent(small_grid):
    F = weak_anchoring(small_grid, 1.0, boundary_data("homeotropic", small_grid.shape, small_grid.angular))
    n = _smooth_field(small_grid, E3)
    g = energy_gradient(n, F)
    assert np.max(np.abs(np.einsum("ij,ij->i", g, n.values))) <= 1e-12


def test_residual_of_constant_is_zero(small_grid):
    _, norm = harmonic_map_residual(DirectorField.constant(small_grid, E1))
    assert norm == 0.0


def test_hedgehog_residual_converges():
    norms = []
    for size in (16, 32):
        g = build_grid(sphere(), size, (size, size), 16.0)
        norms.append(harmonic_map_residual(DirectorField.from_function(g, hedgehog, E3))[1])
    assert np.log2(norms[0] / norms[1]) >= 1.8


# --- dense oracle -----------------------------------------------------------


def _lagrange_slope(xs, x0):
    """Weights of the derivative at ``x0`` of the interpolant through ``xs``."""
    w = []
    for j, xj in enumerate(xs):
        others = [xm for m, xm in enumerate(xs) if m != j]
        den = np.prod([xj - xm for xm in others])
        num = sum(
            np.prod([x0 - xm for m, xm in enumerate(others) if m != k]) for k in range(len(others))
        )
        w.append(num / den)
    return np.array(w)


def _first(f, x, axis):
    """Five-point d/dx along ``axis`` on uniform ``x``, shifted inward at the ends."""
    f = np.moveaxis(f, axis, 0)
    n = len(x)
    out = np.empty_like(f)
    for i in range(n):
        lo = min(max(i - 2, 0), n - 5)
        idx = list(range(lo, lo + 5))
        w = _lagrange_slope([x[j] for j in idx], x[i])
        out[i] = sum(wk * f[j] for wk, j in zip(w, idx))
    return np.moveaxis(out, 0, axis)


def _dense_partials(f, theta, n_s, n_t, n_p):
    """d/ds, d/dtheta (continued through the poles), d/dphi of nodal values."""
    F = f.reshape(n_s, n_t, n_p, -1)
    ds = _first(F, np.linspace(0.0, 1.0, n_s), 0)
    # pad theta by two layers on each side using the pole continuation
    opp = np.roll(F, n_p // 2, axis=2)
    Fx = np.concatenate([opp[:, 1::-1], F, opp[:, :-3:-1]], axis=1)
    tx = np.concatenate([-theta[1::-1], theta, 2 * np.pi - theta[:-3:-1]])
    dt = np.empty_like(F)
    for i in range(n_t):
        w = _lagrange_slope(list(tx[i : i + 5]), theta[i])
        dt[:, i] = sum(wk * Fx[:, i + k] for k, wk in enumerate(w))
    hp = 2 * np.pi / n_p
    dp = sum(
        c * (np.roll(F, -k, axis=2) - np.roll(F, k, axis=2)) for k, c in ((1, 2 / 3), (2, -1 / 12))
    ) / hp
    return [d.reshape(f.shape[0], -1) for d in (ds, dt, dp)]


def _dense_residual(grid, values):
    n_s, n_t, n_p = grid.n_s, grid.angular.n_theta, grid.angular.n_phi
    th = grid.angular.theta
    parts = _dense_partials(grid.points, th, n_s, n_t, n_p)
    jac = np.stack(parts, axis=-1)  # (N, i, a)
    inv = np.linalg.inv(jac)  # (N, a, i)

    def grad(f):
        p = _dense_partials(f, th, n_s, n_t, n_p)
        return np.stack([sum(inv[:, a, c][:, None] * p[a] for a in range(3)) for c in range(3)], -1)

    gv = grad(values)  # (N, 3 comps, 3 dirs)
    lap = sum(grad(gv[:, :, c])[:, :, c] for c in range(3))
    res = lap + np.einsum("qic,qic->q", gv, gv)[:, None] * values
    res[~grid.interior_mask(2)] = 0.0
    return np.sqrt(grid.volume_weights @ np.einsum("ij,ij->i", res, res))


def test_residual_matches_dense_oracle():
    g = build_grid(sphere(), 16, (8, 8), 16.0)
    th, ph = g.angular.nodes[:, 0], g.angular.nodes[:, 1]

    def f(x):
        r = np.linalg.norm(x, axis=1)
        t = np.arccos(np.clip(x[:, 2] / r, -1, 1))
        p = np.arctan2(x[:, 1], x[:, 0])
        y20 = real_sph_harm(2, t, p)[:, sh_index(2, 0)]
        return E3 + (0.1 * y20 / r)[:, None] * E1

    n = DirectorField.from_function(g, f, E3)
    _, norm = harmonic_map_residual(n)
    oracle = _dense_residual(g, n.values)
    assert abs(norm / oracle - 1) <= 0.05


def test_admissibility_examples(sphere_grid):
    assert admissibility_norm(DirectorField.constant(sphere_grid, E3)) == 0.0
    vals = []
    for R in (8.0, 16.0, 32.0):
        g = build_grid(sphere(), 32, (8, 16), R)
        v, diag = admissibility_norm(DirectorField.from_function(g, hedgehog, E3), diagnostics=True)
        assert np.isfinite(v) and v > 0 and diag["slow_decay"]
        vals.append(v)
    # roughly linear growth in R_out
    assert 1.6 < (vals[2] - vals[1]) / (vals[1] - vals[0]) < 2.4


def test_admissibility_rotation_invariance(sphere_grid):
    n = _smooth_field(sphere_grid, E3)
    R = rotation_matrix([1.0, 2.0, 0.5], 1.1)
    rot = DirectorField(sphere_grid, n.values @ R.T, R @ E3)
    assert abs(admissibility_norm(n) - admissibility_norm(rot)) <= 1e-12


def test_decaying_field_not_flagged(sphere_grid):
    n = DirectorField.from_function(
        sphere_grid, lambda x: E3 + 0.2 * E1 / np.linalg.norm(x, axis=1)[:, None], E3
    )
    assert not admissibility_norm(n, diagnostics=True)[1]["slow_decay"]
