"""Director fields on the exterior grid and the discrete Dirichlet energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._errors import DegenerateProjectionError, ValidationError
from .anchoring import INFINITE, surface_energy_eval, surface_energy_gradient
from .exterior_grid import ExteriorGrid, gradient_weights

__all__ = [
    "DirectorField",
    "project_to_sphere",
    "stiffness_matrix",
    "dirichlet_energy",
    "total_energy",
    "energy_difference",
    "exterior_tail_energy",
    "dtn_matrix",
    "energy_gradient",
    "harmonic_map_residual",
    "admissibility_norm",
    "robin_outer_values",
]

_MIN_NORM = 1e-8


def project_to_sphere(v):
    """Nearest-point projection of each row of ``v`` onto S^2."""
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1)
    bad = np.flatnonzero(norms < _MIN_NORM)
    if bad.size:
        raise DegenerateProjectionError(bad[0], norms[bad[0]])
    return v / norms[..., None]


@dataclass(eq=False)
class DirectorField:
    """Unit vector per grid node together with the far-field direction."""

    grid: ExteriorGrid
    values: np.ndarray
    far_value: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.far_value = np.asarray(self.far_value, dtype=float)
        if self.values.shape != (self.grid.size, 3):
            raise ValidationError(
                f"values must have shape {(self.grid.size, 3)}, got {self.values.shape}"
            )
        if abs(np.linalg.norm(self.far_value) - 1.0) > 1e-15 * 4:
            raise ValidationError("far_value must be a unit vector")
        dev = np.abs(np.linalg.norm(self.values, axis=1) - 1.0)
        if dev.max() > 1e-12:
            raise ValidationError(
                f"director not unit at node {int(dev.argmax())} (dev {dev.max():.2e})"
            )

    @classmethod
    def constant(cls, grid, n0):
        n0 = np.asarray(n0, float)
        n0 = n0 / np.linalg.norm(n0)
        return cls(grid, np.tile(n0, (grid.size, 1)), n0)

    @classmethod
    def from_function(cls, grid, func, n0):
        """Project ``func(points)`` onto the sphere."""
        n0 = np.asarray(n0, float)
        return cls(grid, project_to_sphere(func(grid.points)), n0 / np.linalg.norm(n0))

    def copy(self):
        return DirectorField(self.grid, self.values.copy(), self.far_value.copy())

    @property
    def boundary_values(self):
        return self.values[self.grid.inner]


def stiffness_matrix(grid):
    """``K`` with ``E_bulk(n) = sum_i n_i^T K n_i`` (cached on the grid).

    The average of the energies built from forward- and backward-biased
    stencils; it has no odd-even null modes.
    """
    if "stiffness" not in grid._cache:
        st = gradient_weights(grid)
        w = sp.diags(0.5 * grid.volume_weights)
        K = sum(d.T @ w @ d for d in st.D_forward + st.D_backward)
        grid._cache["stiffness"] = sp.csr_matrix(K)
    return grid._cache["stiffness"]


def dirichlet_energy(n):
    """Quadrature of ``|grad n|^2`` over the truncated exterior."""
    return _bulk_energy(n.grid, n.values, n.far_value)


def _bulk_energy(grid, values, n0):
    # stencils annihilate constants only up to rounding; differencing
    # n - n0 makes n == n0 exact and avoids the cancellation
    d = values - n0
    K = stiffness_matrix(grid)
    return float(np.einsum("ij,ij->", d, K @ d))


def dtn_matrix(grid):
    """Quadratic form of the exterior harmonic extension energy on ``r = R_out``.

    For outer data ``u = sum a_lm Y_lm`` the extension
    ``sum a_lm (R/r)^(l+1) Y_lm`` has Dirichlet energy
    ``R sum (l+1) a_lm^2``; the returned ``(n_ang, n_ang)`` matrix ``M``
    gives that energy as ``u^T M u`` per component.
    """
    if "dtn" not in grid._cache:
        ang = grid.angular
        Y = ang.harmonics(ang.l_max)
        l = np.floor(np.sqrt(np.arange(Y.shape[1]))).astype(int)
        A = (Y * ang.weights[:, None]).T
        grid._cache["dtn"] = grid.R_out * (A.T * (l + 1.0)) @ A
    return grid._cache["dtn"]


def exterior_tail_energy(n, outer_bc="monopole_robin"):
    """Energy of the harmonic continuation of ``n - n0`` beyond ``R_out``.

    ``monopole_robin`` keeps the monopole part only,
    ``R_out * sum_q w_q |n(R_out, omega_q) - n0|^2``; ``dtn`` uses every
    degree resolved by the angular grid.
    """
    grid = n.grid
    d = n.values[grid.outer] - n.far_value
    if outer_bc == "dtn":
        return float(np.einsum("ij,ij->", d, dtn_matrix(grid) @ d))
    return float(grid.R_out * np.dot(grid.angular.weights, np.einsum("ij,ij->i", d, d)))


def total_energy(n, F_s, outer_bc="dirichlet_n0"):
    """Dirichlet energy plus surface energy (may be ``INFINITE``).

    With ``outer_bc="monopole_robin"`` the energy of the exterior monopole
    continuation is added, so that the outer closure is the natural
    boundary condition of the energy rather than a free constraint.
    ``outer_bc="dtn"`` adds the full exterior extension energy and leaves
    the outer level free.
    """
    surf = surface_energy_eval(F_s, n.values[n.grid.inner])
    if surf is INFINITE:
        return INFINITE
    e = _bulk_energy(n.grid, n.values, n.far_value) + surf
    if outer_bc in ("monopole_robin", "dtn"):
        e += exterior_tail_energy(n, outer_bc)
    return e


def energy_difference(new, old, F_s, outer_bc="dirichlet_n0"):
    """``total_energy(new) - total_energy(old)`` evaluated in difference form.

    Quadratic terms are written as ``(a - b)^T M (a + b)`` so the rounding
    error scales with the difference instead of with the energies, which
    keeps line-search decisions meaningful near a minimizer.
    """
    grid = new.grid
    n0 = new.far_value
    inner = grid.inner
    if F_s.kind == "weak":
        a, b = new.values[inner], old.values[inner]
        surf = F_s.W * float(
            np.dot(F_s.weights, np.einsum("ij,ij->i", a - b, a + b - 2.0 * F_s.n_D))
        )
    else:
        s_new = surface_energy_eval(F_s, new.values[inner])
        s_old = surface_energy_eval(F_s, old.values[inner])
        if s_new is INFINITE or s_old is INFINITE:
            return INFINITE
        surf = s_new - s_old
    a, b = new.values - n0, old.values - n0
    K = stiffness_matrix(grid)
    delta = float(np.einsum("ij,ij->", a - b, K @ (a + b))) + surf
    if outer_bc in ("monopole_robin", "dtn"):
        ao, bo = a[grid.outer], b[grid.outer]
        if outer_bc == "dtn":
            delta += float(np.einsum("ij,ij->", ao - bo, dtn_matrix(grid) @ (ao + bo)))
        else:
            delta += float(
                grid.R_out * np.dot(grid.angular.weights, np.einsum("ij,ij->i", ao - bo, ao + bo))
            )
    return delta


def _robin_coefficients(grid):
    """Weights expressing outer values through the two preceding levels.

    Second-order one-sided ``d/ds [r (n - n0)] = 0`` at ``s = 1`` gives
    ``R (n_N - n0) = (4 r_{N-1} (n_{N-1} - n0) - r_{N-2} (n_{N-2} - n0)) / 3``.
    """
    r = grid.r.reshape(grid.n_s, -1)
    R = r[-1]
    return 4.0 * r[-2] / (3.0 * R), -r[-3] / (3.0 * R)


def robin_outer_values(grid, values, n0):
    """Unnormalized and projected outer-level values for the Robin closure."""
    n_ang = grid.n_ang
    v = values.reshape(grid.n_s, n_ang, 3)
    a, b = _robin_coefficients(grid)
    m = n0 + a[:, None] * (v[-2] - n0) + b[:, None] * (v[-3] - n0)
    return m, project_to_sphere(m)


def energy_gradient(n, F_s, outer_bc="dirichlet_n0"):
    """Tangent-projected gradient of the discrete total energy.

    Nodes that are constrained (hard anchoring on the particle, Dirichlet
    outer boundary) carry zero gradient.  With ``outer_bc="monopole_robin"``
    the outer level is a function of the two preceding levels and its
    contribution is chained back onto them.
    """
    grid = n.grid
    v = n.values
    g = 2.0 * (stiffness_matrix(grid) @ (v - n.far_value))
    inner = grid.inner
    if F_s.is_hard:
        g[inner] = 0.0
    else:
        g[inner] += _raw_surface_gradient(F_s, v[inner])
    outer = grid.outer
    if outer_bc == "dirichlet_n0":
        g[outer] = 0.0
    elif outer_bc == "monopole_robin":
        m, n_out = robin_outer_values(grid, v, n.far_value)
        g_out = g[outer] + 2.0 * grid.R_out * grid.angular.weights[:, None] * (
            v[outer] - n.far_value
        )
        jt = (g_out - np.einsum("ij,ij->i", g_out, n_out)[:, None] * n_out) / np.linalg.norm(
            m, axis=1
        )[:, None]
        a, b = _robin_coefficients(grid)
        g[grid.level(-2)] += a[:, None] * jt
        g[grid.level(-3)] += b[:, None] * jt
        g[outer] = 0.0
    elif outer_bc == "dtn":
        g[outer] += 2.0 * (dtn_matrix(grid) @ (v[outer] - n.far_value))
    elif outer_bc != "free":
        raise ValidationError(f"unknown outer_bc {outer_bc!r}")
    return g - np.einsum("ij,ij->i", g, v)[:, None] * v


def _raw_surface_gradient(F_s, n_b):
    if F_s.kind == "weak":
        return 2.0 * F_s.W * F_s.weights[:, None] * (n_b - F_s.n_D)
    return surface_energy_gradient(F_s, n_b)


def harmonic_map_residual(n, margin=2):
    """``Lap n + |grad n|^2 n`` on nodes away from the radial boundaries.

    Returns
    -------
    residual : ndarray, shape (N, 3)
        Zero outside the evaluation region.
    norm : float
        Volume-weighted L2 norm over the evaluation region.
    """
    grid = n.grid
    st = gradient_weights(grid)
    v = n.values
    grad = st.apply(v - n.far_value)  # (N, 3 comps, 3 dirs)
    lap = sum(st.D[c] @ grad[:, :, c] for c in range(3))
    dens = np.einsum("qic,qic->q", grad, grad)
    res = lap + dens[:, None] * v
    mask = grid.interior_mask(margin)
    res[~mask] = 0.0
    norm = float(np.sqrt(np.dot(grid.volume_weights, np.einsum("ij,ij->i", res, res))))
    return res, norm


def admissibility_norm(n, diagnostics=False):
    """Quadrature of ``|n - n0|^2 / (1 + r^2)``.

    With ``diagnostics`` also returns a dict whose ``slow_decay`` flag is set
    when the per-unit-radius density on the outermost shell is still above
    a tenth of its maximum, i.e. the value keeps growing with ``R_out``.
    """
    d = n.values - n.far_value
    grid = n.grid
    sq = np.einsum("ij,ij->i", d, d)
    value = float(np.dot(grid.volume_weights / (1.0 + grid.r**2), sq))
    if not diagnostics:
        return value
    r = grid.r.reshape(grid.n_s, grid.n_ang)
    dens = (sq.reshape(grid.n_s, grid.n_ang) * r**2 / (1.0 + r**2)) @ grid.angular.weights
    ratio = float(dens[-1] / dens.max()) if dens.max() > 0 else 0.0
    return value, {"outer_density_ratio": ratio, "slow_decay": ratio > 0.1}
