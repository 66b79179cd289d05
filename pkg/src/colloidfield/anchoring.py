"""Surface (anchoring) energies on the particle boundary."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._errors import ConfigurationError, UnsupportedModelError, ValidationError
from .exterior_grid import rotation_matrix

__all__ = [
    "INFINITE",
    "SurfaceEnergy",
    "boundary_data",
    "dirichlet_anchoring",
    "weak_anchoring",
    "custom_anchoring",
    "surface_energy_eval",
    "surface_energy_gradient",
    "is_infinite",
]

_UNIT_TOL = 1e-12
_DIRICHLET_TOL = 1e-10


class _Infinite:
    """Marker for an infinite surface energy (violated hard anchoring)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def is_infinite(value):
    return value is INFINITE


@dataclass(frozen=True, eq=False)
class SurfaceEnergy:
    """Anchoring model evaluated at the inner-boundary nodes.

    Attributes
    ----------
    kind : {"dirichlet", "weak", "custom"}
    n_D : ndarray, shape (M, 3) or None
        Preferred directors at the boundary nodes.
    W : float
        Anchoring strength for ``kind="weak"``.
    weights : ndarray, shape (M,)
        Surface quadrature weights (area element included).
    points : ndarray, shape (M, 3)
        Boundary node positions, passed to custom integrands.
    g, dg : callable or None
        Custom integrand ``g(n, x) -> (M,)`` and its derivative in ``n``
        ``dg(n, x) -> (M, 3)``.
    """

    kind: str
    n_D: np.ndarray | None
    W: float
    weights: np.ndarray
    points: np.ndarray
    g: object = None
    dg: object = None

    @property
    def is_hard(self):
        return self.kind == "dirichlet"

    def scaled(self, factor):
        """Same model with ``W`` multiplied by ``factor`` (weak only)."""
        return SurfaceEnergy(
            self.kind, self.n_D, self.W * factor, self.weights, self.points, self.g, self.dg
        )

    def rotated(self, R):
        """Model with boundary map ``R n_D`` on the same nodes."""
        n_D = None if self.n_D is None else self.n_D @ np.asarray(R).T
        return SurfaceEnergy(
            self.kind, n_D, self.W, self.weights, self.points, self.g, self.dg
        )


def _check_unit(n, name):
    n = np.asarray(n, dtype=float)
    dev = np.abs(np.linalg.norm(n, axis=-1) - 1.0)
    if dev.size and dev.max() > _UNIT_TOL:
        q = int(np.argmax(dev))
        raise ValidationError(f"{name} is not unit at node {q} (|n|-1={dev[q]:.2e})")
    return n


def boundary_data(kind, shape, angular, *, m=None, alpha=0.0, axis=None):
    """Preferred boundary directors at the particle surface nodes.

    Parameters
    ----------
    kind : {"homeotropic", "uniform", "tilted"}
    shape : ParticleShape
    angular : AngularGrid
    m : array-like, for ``uniform``
    alpha : float, tilt angle in radians for ``tilted``
    axis : array-like, tilt axis for ``tilted``; the normal is rotated about
        ``axis x nu``.
    """
    nodes = angular.nodes
    if kind == "homeotropic":
        return shape.outward_normal(nodes[:, 0], nodes[:, 1])
    if kind == "uniform":
        if m is None:
            raise ConfigurationError("uniform anchoring needs a direction m")
        m = np.asarray(m, float)
        m = m / np.linalg.norm(m)
        return np.tile(m, (angular.size, 1))
    if kind == "tilted":
        if axis is None:
            raise ConfigurationError("tilted anchoring needs an axis")
        nu = shape.outward_normal(nodes[:, 0], nodes[:, 1])
        axis = np.asarray(axis, float)
        out = np.empty_like(nu)
        for q, v in enumerate(nu):
            k = np.cross(axis, v)
            if np.linalg.norm(k) < 1e-14:
                out[q] = v
            else:
                out[q] = rotation_matrix(k, alpha) @ v
        return out
    raise ConfigurationError(f"unknown boundary pattern {kind!r}")


def _surface_nodes(grid):
    return grid.points[grid.inner], grid.surface_weights


def dirichlet_anchoring(grid, n_D):
    pts, w = _surface_nodes(grid)
    return SurfaceEnergy("dirichlet", _check_unit(n_D, "n_D"), 0.0, w, pts)


def weak_anchoring(grid, W, n_D):
    if W < 0:
        raise ConfigurationError(f"anchoring strength W must be >= 0, got {W}")
    pts, w = _surface_nodes(grid)
    return SurfaceEnergy("weak", _check_unit(n_D, "n_D"), float(W), w, pts)


def custom_anchoring(grid, g, dg=None):
    pts, w = _surface_nodes(grid)
    return SurfaceEnergy("custom", None, 0.0, w, pts, g, dg)


def surface_energy_eval(F_s, n_b):
    """Surface energy of boundary values ``n_b`` (shape (M, 3)).

    Returns a float, or :data:`INFINITE` when hard anchoring is violated.
    """
    n_b = _check_unit(n_b, "boundary values")
    if F_s.kind == "dirichlet":
        if np.max(np.abs(n_b - F_s.n_D)) <= _DIRICHLET_TOL:
            return 0.0
        return INFINITE
    if F_s.kind == "weak":
        d = n_b - F_s.n_D
        return float(F_s.W * np.dot(F_s.weights, np.einsum("ij,ij->i", d, d)))
    vals = np.asarray(F_s.g(n_b, F_s.points), dtype=float)
    if np.any(vals < 0):
        raise ValidationError("custom surface integrand must be non-negative")
    return float(np.dot(F_s.weights, vals))


def surface_energy_gradient(F_s, n_b):
    """Tangent-projected gradient of the discrete surface energy."""
    n_b = np.asarray(n_b, dtype=float)
    if F_s.kind == "dirichlet":
        return np.zeros_like(n_b)
    if F_s.kind == "weak":
        g = 2.0 * F_s.W * F_s.weights[:, None] * (n_b - F_s.n_D)
    else:
        if F_s.dg is None:
            raise UnsupportedModelError("custom surface energy has no derivative")
        g = F_s.weights[:, None] * np.asarray(F_s.dg(n_b, F_s.points), float)
    return g - np.einsum("ij,ij->i", g, n_b)[:, None] * n_b
