"""Energy minimization over unit director fields.

Riemannian projected gradient descent with Armijo backtracking.  The descent
direction is the energy gradient preconditioned by a compact-stencil scalar
Laplacian of the grid (an H^1-type metric), projected onto the tangent
planes; the update is retracted onto S^2 by normalization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import pyamg
from sklearn.base import BaseEstimator

from ._errors import ConfigurationError, ValidationError
from .anchoring import INFINITE, is_infinite
from .exterior_grid import gradient_weights
from .fields import (
    DirectorField,
    dtn_matrix,
    energy_difference,
    energy_gradient,
    project_to_sphere,
    robin_outer_values,
    total_energy,
)

__all__ = [
    "SolveConfig",
    "SolveReport",
    "descent_step",
    "solve_director",
    "DirectorMinimizer",
]

logger = logging.getLogger(__name__)

OUTER_BCS = ("dirichlet_n0", "monopole_robin", "dtn")
INITS = ("constant_n0", "warm_start", "custom")


@dataclass
class SolveConfig:
    """Settings for :func:`solve_director`.

    ``grad_tol=None`` resolves to ``1e-8 * sqrt(N)`` for a grid of ``N``
    nodes.
    """

    outer_bc: str = "dirichlet_n0"
    init: str = "constant_n0"
    warm_start: np.ndarray | None = None
    max_iters: int = 2000
    grad_tol: float | None = None
    step0: float = 1.0
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4
    min_step: float = 1e-14
    seed: int = 0
    method: str = "cg"

    def __post_init__(self):
        if self.method not in ("gradient", "cg"):
            raise ConfigurationError("method must be 'gradient' or 'cg'")
        if self.outer_bc not in OUTER_BCS:
            raise ConfigurationError(f"outer_bc must be one of {OUTER_BCS}")
        if self.init not in INITS:
            raise ConfigurationError(f"init must be one of {INITS}")
        if int(self.max_iters) < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ConfigurationError("grad_tol must be > 0")
        if not 0 < self.armijo_factor < 1:
            raise ConfigurationError("armijo_factor must lie in (0, 1)")

    def resolved_grad_tol(self, grid):
        if self.grad_tol is not None:
            return float(self.grad_tol)
        return 1e-8 * np.sqrt(grid.size)


@dataclass
class SolveReport:
    energy: float
    iterations: int
    grad_norm: float
    energy_trace: list = field(default_factory=list)
    converged: bool = False
    stagnated: bool = False

    def to_dict(self):
        return {
            "energy": self.energy,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "stagnated": self.stagnated,
            "energy_trace": list(self.energy_trace),
        }


# --- preconditioner ---------------------------------------------------------


def _edge_laplacian(grid, outer_bc="dirichlet_n0"):
    """Compact-stencil weighted graph Laplacian approximating the stiffness."""
    st = gradient_weights(grid)
    inv = np.linalg.inv(st.jacobian)  # (N, a, i)
    g_aa = np.einsum("qai,qai->qa", inv, inv)
    w = grid.volume_weights
    n_s, n_t, n_p = grid.n_s, grid.angular.n_theta, grid.angular.n_phi
    idx = np.arange(grid.size).reshape(n_s, n_t, n_p)
    theta = grid.angular.theta
    h_s = 1.0 / (n_s - 1)
    h_p = 2.0 * np.pi / n_p
    edges = []

    def add(p, q, h, a):
        h = np.broadcast_to(h, p.shape).ravel()
        p, q = p.ravel(), q.ravel()
        c = 0.5 * (w[p] * g_aa[p, a] + w[q] * g_aa[q, a]) / h**2
        edges.append((p, q, c))

    add(idx[:-1], idx[1:], h_s, 0)
    h_t = np.diff(theta)[None, :, None]
    add(idx[:, :-1], idx[:, 1:], h_t, 1)
    half = n_p // 2
    # pole-crossing edges, each pair counted once
    for it, dth in ((0, 2 * theta[0]), (n_t - 1, 2 * (np.pi - theta[-1]))):
        p = idx[:, it, :half]
        q = idx[:, it, half:]
        add(p, q, np.full(p.shape, dth), 1)
    add(idx, np.roll(idx, -1, axis=2), h_p, 2)
    p = np.concatenate([e[0] for e in edges])
    q = np.concatenate([e[1] for e in edges])
    c = np.concatenate([e[2] for e in edges])
    n = grid.size
    A = sp.coo_matrix((-c, (p, q)), shape=(n, n))
    A = A + A.T
    diag = -np.asarray(A.sum(axis=1)).ravel()
    # weak zeroth-order term keeps the operator definite without pinned nodes
    diag = diag + 1e-3 * w / (1.0 + grid.r**2)
    if outer_bc == "dtn":
        diag[grid.outer] += np.diag(dtn_matrix(grid))
    return (A + sp.diags(diag)).tocsc()


class _Preconditioner:
    def __init__(self, grid, fixed_mask, outer_bc="dirichlet_n0"):
        L = _edge_laplacian(grid, outer_bc)
        self.free = np.flatnonzero(~fixed_mask)
        self.n = grid.size
        L_ff = L[self.free][:, self.free].tocsr()
        self._amg = pyamg.ruge_stuben_solver(L_ff)
        self._cycle = self._amg.aspreconditioner(cycle="V")

    def solve(self, g):
        out = np.zeros_like(g)
        rhs = g[self.free]
        for c in range(g.shape[1]):
            out[self.free, c] = self._cycle @ rhs[:, c]
        return out


def _fixed_mask(grid, F_s, outer_bc):
    mask = np.zeros(grid.size, dtype=bool)
    if outer_bc != "dtn":
        mask[grid.outer] = True  # outer level is prescribed or slaved
    if F_s.is_hard:
        mask[grid.inner] = True
    return mask


def _preconditioner(grid, F_s, outer_bc):
    key = ("precond", bool(F_s.is_hard), outer_bc)
    if key not in grid._cache:
        grid._cache[key] = _Preconditioner(
            grid, _fixed_mask(grid, F_s, outer_bc), outer_bc
        )
    return grid._cache[key]


def _apply_outer_bc(grid, values, n0, outer_bc):
    if outer_bc == "dirichlet_n0":
        values[grid.outer] = n0
    elif outer_bc == "monopole_robin":
        _, values[grid.outer] = robin_outer_values(grid, values, n0)
    return values


def _tangent(v, n):
    return v - np.einsum("ij,ij->i", v, n)[:, None] * n


# --- iteration --------------------------------------------------------------


def descent_step(n, F_s, cfg, energy=None, step=None, grad=None, direction=None):
    """One projected descent step with Armijo backtracking.

    The default direction is the preconditioned tangent gradient; a caller
    may pass another ``direction`` (used only if it is a descent direction).

    Returns
    -------
    field : DirectorField
        Updated field (the input is returned unchanged when no decrease was
        found).
    energy : float
    step : float
        Accepted step length, ``0.0`` when the field is stationary and
        ``None`` on stagnation (no decrease above ``cfg.min_step``).
    """
    grid = n.grid
    if energy is None:
        energy = total_energy(n, F_s, cfg.outer_bc)
    if grad is None:
        grad = energy_gradient(n, F_s, cfg.outer_bc)
    if not np.any(grad):
        return n, energy, 0.0
    slope = 0.0
    if direction is not None:
        slope = float(np.einsum("ij,ij->", grad, direction))
    if direction is None or slope >= 0:
        pre = _preconditioner(grid, F_s, cfg.outer_bc)
        direction = -_tangent(pre.solve(grad), n.values)
        slope = float(np.einsum("ij,ij->", grad, direction))
    if slope >= 0:
        direction, slope = -grad, -float(np.einsum("ij,ij->", grad, grad))
    tau = cfg.step0 if step is None else step
    while tau >= cfg.min_step:
        trial = project_to_sphere(n.values + tau * direction)
        trial = _apply_outer_bc(grid, trial, n.far_value, cfg.outer_bc)
        cand = DirectorField.__new__(DirectorField)
        cand.grid, cand.values, cand.far_value = grid, trial, n.far_value
        delta = energy_difference(cand, n, F_s, cfg.outer_bc)
        if not is_infinite(delta) and delta <= cfg.armijo_slope * tau * slope and delta < 0:
            return cand, energy + delta, tau
        tau *= cfg.armijo_factor
    return n, energy, None


def _initial_field(grid, F_s, n0, cfg):
    if cfg.init == "constant_n0":
        values = np.tile(n0, (grid.size, 1))
    else:
        if cfg.warm_start is None:
            raise ConfigurationError(f"init={cfg.init!r} requires warm_start values")
        ws = cfg.warm_start
        values = np.array(ws.values if isinstance(ws, DirectorField) else ws, dtype=float)
        if values.shape != (grid.size, 3):
            raise ConfigurationError("warm start does not match the grid")
        values = project_to_sphere(values)
    if F_s.is_hard:
        values[grid.inner] = F_s.n_D
    return _apply_outer_bc(grid, values, n0, cfg.outer_bc)


def solve_director(shape, F_s, n0, grid, cfg=None):
    """Minimize the discrete total energy for far-field direction ``n0``.

    Returns
    -------
    field : DirectorField
    report : SolveReport
    """
    cfg = SolveConfig() if cfg is None else cfg
    if shape is not None and shape is not grid.shape:
        raise ConfigurationError("shape does not match the grid's particle")
    n0 = np.asarray(n0, dtype=float)
    if abs(np.linalg.norm(n0) - 1.0) > 1e-12:
        raise ValidationError("n0 must be a unit vector")
    tol = cfg.resolved_grad_tol(grid)
    values = _initial_field(grid, F_s, n0, cfg)
    n = DirectorField(grid, values, n0)
    energy = total_energy(n, F_s, cfg.outer_bc)
    if is_infinite(energy):
        raise ValidationError("initial field has infinite surface energy")
    trace = [energy]
    step = cfg.step0
    grad = energy_gradient(n, F_s, cfg.outer_bc)
    gnorm = float(np.linalg.norm(grad))
    iters = 0
    stagnated = False
    pre = _preconditioner(grid, F_s, cfg.outer_bc)
    pg = _tangent(pre.solve(grad), n.values)
    direction = -pg
    while gnorm > tol and iters < cfg.max_iters:
        n, energy, used = descent_step(
            n, F_s, cfg, energy, min(2.0 * step, 4.0 * cfg.step0), grad, direction
        )
        iters += 1
        if used is None:
            stagnated = True
            logger.info("stagnation after %d iterations (|g|=%.3e)", iters, gnorm)
            break
        if used == 0.0:
            gnorm = 0.0
            break
        step = used
        trace.append(energy)
        grad_old, pg_old = grad, pg
        grad = energy_gradient(n, F_s, cfg.outer_bc)
        gnorm = float(np.linalg.norm(grad))
        pg = _tangent(pre.solve(grad), n.values)
        if cfg.method == "cg":
            # Polak-Ribiere+ with transport by tangent projection
            denom = float(np.einsum("ij,ij->", grad_old, pg_old))
            beta = float(np.einsum("ij,ij->", grad, pg - _tangent(pg_old, n.values))) / denom
            direction = -pg + max(beta, 0.0) * _tangent(direction, n.values)
        else:
            direction = -pg
    report = SolveReport(
        energy=float(energy),
        iterations=iters,
        grad_norm=gnorm,
        energy_trace=trace,
        converged=gnorm <= tol,
        stagnated=stagnated,
    )
    return n, report


class DirectorMinimizer(BaseEstimator):
    """Estimator wrapper around :func:`solve_director`.

    ``fit(n0)`` solves for the far-field direction ``n0`` and stores
    ``field_``, ``energy_`` and ``report_``.
    """

    def __init__(
        self,
        grid=None,
        anchoring=None,
        outer_bc="dirichlet_n0",
        max_iters=2000,
        grad_tol=None,
        step0=1.0,
        init="constant_n0",
        warm_start=None,
        seed=0,
        method="cg",
    ):
        self.grid = grid
        self.anchoring = anchoring
        self.outer_bc = outer_bc
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.step0 = step0
        self.init = init
        self.warm_start = warm_start
        self.seed = seed
        self.method = method

    def _config(self):
        return SolveConfig(
            outer_bc=self.outer_bc,
            init=self.init,
            warm_start=self.warm_start,
            max_iters=self.max_iters,
            grad_tol=self.grad_tol,
            step0=self.step0,
            seed=self.seed,
            method=self.method,
        )

    def fit(self, X, y=None):
        if self.grid is None or self.anchoring is None:
            raise ConfigurationError("grid and anchoring must be set")
        n0 = np.asarray(X, dtype=float).reshape(3)
        self.field_, self.report_ = solve_director(
            None, self.anchoring, n0, self.grid, self._config()
        )
        self.energy_ = self.report_.energy
        self.n0_ = n0
        return self

    def score(self, X=None, y=None):
        """Negative minimal energy (higher is better)."""
        return -self.energy_
