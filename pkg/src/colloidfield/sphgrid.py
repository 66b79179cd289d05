"""Gauss-Legendre x uniform-phi quadrature on the unit sphere and real
spherical harmonic transforms.

Nodes are ordered with phi fastest, then theta (ascending, i.e. from the
north pole towards the south pole).  Coefficients are stored flat with index
``l*l + l + m`` (degree outer, order inner ascending).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import sph_harm_y

from ._errors import ConfigurationError

__all__ = [
    "AngularGrid",
    "ShellCoefficients",
    "build_angular_grid",
    "real_sph_harm",
    "sh_index",
    "sh_analyze",
    "sh_synthesize",
]


def sh_index(l, m):
    return l * l + l + m


def real_sph_harm(l_max, theta, phi):
    """Orthonormal real spherical harmonics up to degree ``l_max``.

    Returns an array of shape ``theta.shape + ((l_max+1)**2,)``.  The
    convention has no Condon-Shortley phase, so that ``Y_{1,-1}, Y_{1,0},
    Y_{1,1}`` are proportional to ``y, z, x`` with positive constants.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = np.empty(theta.shape + ((l_max + 1) ** 2,))
    sqrt2 = np.sqrt(2.0)
    for l in range(l_max + 1):
        for m in range(0, l + 1):
            y = sph_harm_y(l, m, theta, phi)
            if m == 0:
                out[..., sh_index(l, 0)] = y.real
            else:
                sign = -1.0 if m % 2 else 1.0
                out[..., sh_index(l, m)] = sqrt2 * sign * y.real
                out[..., sh_index(l, -m)] = sqrt2 * sign * y.imag
    return out


@dataclass(frozen=True, eq=False)
class AngularGrid:
    """Product quadrature on S^2 exact for degree ``<= 2*l_max``.

    Attributes
    ----------
    n_theta, n_phi : int
        Number of Gauss-Legendre nodes in ``cos(theta)`` and of equispaced
        ``phi`` nodes.
    theta, phi : ndarray, shape (n_theta,), (n_phi,)
        One-dimensional node coordinates.
    weights : ndarray, shape (n_theta * n_phi,)
        Quadrature weights per node; they sum to ``4*pi``.
    l_max : int
        Largest degree whose products are integrated exactly.
    """

    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    l_max: int
    _ylm: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self):
        return self.n_theta * self.n_phi

    @property
    def nodes(self):
        """(theta, phi) pairs in node order, shape (size, 2)."""
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.column_stack([th.ravel(), ph.ravel()])

    @property
    def unit_vectors(self):
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        st = np.sin(th)
        return np.stack(
            [st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1
        ).reshape(-1, 3)

    def harmonics(self, l_max):
        """Cached table of ``Y_lm`` at the nodes, shape (size, (l_max+1)**2)."""
        if l_max not in self._ylm:
            nodes = self.nodes
            self._ylm[l_max] = real_sph_harm(l_max, nodes[:, 0], nodes[:, 1])
        return self._ylm[l_max]

    def integrate(self, values):
        """Quadrature over the sphere along the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def build_angular_grid(n_theta, n_phi):
    """Build the Gauss-Legendre x uniform-phi grid.

    Raises
    ------
    ConfigurationError
        If ``n_theta < 2`` or ``n_phi < 4``.
    """
    if int(n_theta) != n_theta or int(n_phi) != n_phi:
        raise ConfigurationError("grid sizes must be integers")
    n_theta, n_phi = int(n_theta), int(n_phi)
    if n_theta < 2:
        raise ConfigurationError(f"n_theta must be >= 2, got {n_theta}")
    if n_phi < 4:
        raise ConfigurationError(f"n_phi must be >= 4, got {n_phi}")
    mu, w_mu = np.polynomial.legendre.leggauss(n_theta)
    # leggauss returns ascending mu; reverse for ascending theta
    mu, w_mu = mu[::-1], w_mu[::-1]
    theta = np.arccos(mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    weights = np.repeat(w_mu * (2.0 * np.pi / n_phi), n_phi)
    l_max = min(n_theta - 1, (n_phi - 1) // 2)
    return AngularGrid(n_theta, n_phi, theta, phi, weights, l_max)


@dataclass(frozen=True)
class ShellCoefficients:
    """Real spherical harmonic coefficients up to ``l_max``.

    ``a`` has shape ``((l_max+1)**2,) + extra`` where ``extra`` is any trailing
    shape carried over from the analyzed field (e.g. Cartesian components).
    """

    l_max: int
    a: np.ndarray

    def __getitem__(self, lm):
        l, m = lm
        if not (0 <= l <= self.l_max and -l <= m <= l):
            raise KeyError(lm)
        return self.a[sh_index(l, m)]

    def degree(self, l):
        return self.a[l * l : (l + 1) * (l + 1)]

    def power(self):
        """Sum of squared coefficients (Parseval)."""
        return np.sum(self.a**2, axis=0)


def sh_analyze(f, grid, l_max=None):
    """Project a sampled field on the real harmonics up to ``l_max``.

    ``f`` has shape ``(grid.size,) + extra``.
    """
    l_max = grid.l_max if l_max is None else int(l_max)
    if l_max > grid.l_max or l_max < 0:
        raise ConfigurationError(
            f"l_max={l_max} exceeds grid capability {grid.l_max}"
        )
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.size:
        raise ConfigurationError("field does not match grid size")
    ylm = grid.harmonics(l_max)
    wf = f * grid.weights.reshape((-1,) + (1,) * (f.ndim - 1))
    a = np.tensordot(ylm.T, wf, axes=(1, 0))
    return ShellCoefficients(l_max, a)


def sh_synthesize(c, grid):
    """Evaluate coefficients at the nodes of ``grid``."""
    if c.l_max > grid.l_max:
        raise ConfigurationError(
            f"coefficients of degree {c.l_max} exceed grid capability {grid.l_max}"
        )
    ylm = grid.harmonics(c.l_max)
    return np.tensordot(ylm, c.a, axes=(1, 0))
