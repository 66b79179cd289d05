"""Structured discretization of the exterior of a star-shaped particle.

The domain between the particle surface ``r = rho(omega)`` and the sphere
``r = R_out`` is mapped from ``(s, theta, phi)`` with
``r(s, omega) = rho(omega)**(1 - s) * R_out**s`` on uniform ``s`` nodes, which
gives geometric spacing in ``r``.  Node order is phi fastest, then theta,
then s.

Differentiation uses second-order finite differences in computational
coordinates combined with a *discrete* metric: the Jacobian is obtained by
applying the same stencils to the node coordinates, so that linear functions
are differentiated exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._errors import ConfigurationError
from .sphgrid import AngularGrid, build_angular_grid

__all__ = [
    "ParticleShape",
    "sphere",
    "spheroid",
    "star",
    "ExteriorGrid",
    "build_grid",
    "gradient_weights",
    "rotation_matrix",
]


def rotation_matrix(axis, angle):
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _frame(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sf, cf = np.sin(phi), np.cos(phi)
    omega = np.stack([st * cf, st * sf, ct], axis=-1)
    e_theta = np.stack([ct * cf, ct * sf, -st], axis=-1)
    e_phi = np.stack([-sf, cf, np.zeros_like(sf)], axis=-1)
    return omega, e_theta, e_phi


@dataclass(frozen=True, eq=False)
class ParticleShape:
    """Star-shaped particle ``{r < rho(omega)}``.

    ``radius`` maps ``(theta, phi)`` arrays to ``(rho, d rho/d theta,
    d rho/d phi)``.  ``symmetry`` is one of ``"none"``, ``"axis"``, ``"full"``.
    """

    kind: str
    radius: object
    axis: np.ndarray | None = None
    symmetry: str = "none"
    semi_axes: tuple = (1.0, 1.0, 1.0)

    def rho(self, theta, phi):
        return self.radius(np.asarray(theta, float), np.asarray(phi, float))[0]

    def rho_and_derivatives(self, theta, phi):
        return self.radius(np.asarray(theta, float), np.asarray(phi, float))

    def surface_points(self, theta, phi):
        rho = self.rho(theta, phi)
        omega, _, _ = _frame(np.asarray(theta, float), np.asarray(phi, float))
        return rho[..., None] * omega

    def outward_normal(self, theta, phi):
        """Unit outward normal of the surface at direction ``(theta, phi)``."""
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float)
        rho, rt, rp = self.rho_and_derivatives(theta, phi)
        omega, e_t, e_p = _frame(theta, phi)
        nu = (
            rho[..., None] * omega
            - rt[..., None] * e_t
            - (rp / np.sin(theta))[..., None] * e_p
        )
        return nu / np.linalg.norm(nu, axis=-1, keepdims=True)

    def area_factor(self, theta, phi):
        """``rho * sqrt(rho**2 + |grad_omega rho|**2)`` (area per solid angle)."""
        theta = np.asarray(theta, float)
        rho, rt, rp = self.rho_and_derivatives(theta, phi)
        return rho * np.sqrt(rho**2 + rt**2 + (rp / np.sin(theta)) ** 2)

    def to_dict(self):
        return {
            "kind": self.kind,
            "semi_axes": [float(v) for v in self.semi_axes],
            "axis": None if self.axis is None else [float(v) for v in self.axis],
            "symmetry": self.symmetry,
        }


def sphere(radius=1.0):
    radius = float(radius)
    if radius <= 0:
        raise ConfigurationError("sphere radius must be positive")

    def _rho(theta, phi):
        shape = np.broadcast(theta, phi).shape
        z = np.zeros(shape)
        return np.full(shape, radius), z, z.copy()

    return ParticleShape(
        "sphere", _rho, None, "full", (radius, radius, radius)
    )


def spheroid(a, b, axis=(0.0, 0.0, 1.0)):
    """Spheroid with equatorial semi-axis ``a`` and polar semi-axis ``b``."""
    a, b = float(a), float(b)
    if a <= 0 or b <= 0:
        raise ConfigurationError("semi-axes must be positive")
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    k = 1.0 / b**2 - 1.0 / a**2

    def _rho(theta, phi):
        omega, e_t, e_p = _frame(theta, phi)
        c = omega @ u
        rho = 1.0 / np.sqrt((1.0 - c**2) / a**2 + c**2 / b**2)
        drho_dc = -(rho**3) * c * k
        ct = e_t @ u
        cp = np.sin(theta) * (e_p @ u)
        return rho, drho_dc * ct, drho_dc * cp

    sym = "full" if a == b else "axis"
    return ParticleShape("spheroid", _rho, u, sym, (a, a, b))


def star(rho_func, axis=None, symmetry="none", step=1e-6):
    """Generic star-shaped particle; derivatives by central differences."""

    def _rho(theta, phi):
        rho = np.asarray(rho_func(theta, phi), dtype=float)
        rt = (rho_func(theta + step, phi) - rho_func(theta - step, phi)) / (2 * step)
        rp = (rho_func(theta, phi + step) - rho_func(theta, phi - step)) / (2 * step)
        return rho, np.asarray(rt, float), np.asarray(rp, float)

    ax = None if axis is None else np.asarray(axis, float) / np.linalg.norm(axis)
    return ParticleShape("star", _rho, ax, symmetry)


# --- finite difference operators in computational coordinates -------------


def _periodic_first(n, h):
    """Fourth-order central first derivative on a periodic uniform grid."""
    i = np.arange(n)
    offsets = (-2, -1, 1, 2)
    weights = (1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0)
    rows = np.concatenate([i] * 4)
    cols = np.concatenate([(i + o) % n for o in offsets])
    vals = np.concatenate([np.full(n, w / h) for w in weights])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    return m


_FORWARD = (-1, 0, 1, 2, 3)
_BACKWARD = (-3, -2, -1, 0, 1)
_CENTRAL = (-2, -1, 0, 1, 2)


def _biased_first(n, h, offsets, periodic=False):
    """Fourth-order first derivative on a uniform grid with a biased stencil.

    Without ``periodic`` the stencil is shifted inward near the ends.
    """
    rows, cols, vals = [], [], []
    offsets = np.asarray(offsets)
    for i in range(n):
        if periodic:
            idx = offsets
        else:
            shift = max(0, -(i + offsets.min())) - max(0, i + offsets.max() - (n - 1))
            idx = offsets + shift
        w = _derivative_weights(idx * h, 0.0)
        rows += [i] * len(idx)
        cols += list((i + idx) % n)
        vals += list(w)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    return m


def _derivative_weights(x, x0):
    """First-derivative weights at ``x0`` exact for polynomials of degree ``len(x) - 1``."""
    d = (np.asarray(x, float) - x0) / np.ptp(x)
    V = np.vander(d, increasing=True).T
    rhs = np.zeros(len(x))
    rhs[1] = 1.0 / np.ptp(x)
    return np.linalg.solve(V, rhs)


def _theta_operator(theta, n_phi, offsets=(-2, -1, 0, 1, 2)):
    """d/dtheta on the (theta, phi) block, continued through both poles.

    Past the pole the neighbour of ``(theta_j, phi)`` is ``(theta_j, phi+pi)``
    at coordinate ``-theta_j`` (and likewise at the south pole).  Five-point
    stencils give fourth order on the nonuniform Gauss-Legendre nodes;
    ``offsets`` selects the central or a biased stencil.
    """
    n_t = theta.size
    half = n_phi // 2
    rows, cols, vals = [], [], []
    for it in range(n_t):
        coords, links = [], []
        for j in (it + o for o in offsets):
            if j < 0:
                coords.append(-theta[-j - 1])
                links.append((-j - 1, True))
            elif j >= n_t:
                coords.append(2 * np.pi - theta[2 * n_t - 1 - j])
                links.append((2 * n_t - 1 - j, True))
            else:
                coords.append(theta[j])
                links.append((j, False))
        w = _derivative_weights(coords, theta[it])
        for ip in range(n_phi):
            q = it * n_phi + ip
            opp = (ip + half) % n_phi
            for (jt, flip), wk in zip(links, w):
                rows.append(q)
                cols.append(jt * n_phi + (opp if flip else ip))
                vals.append(wk)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n_t * n_phi, n_t * n_phi))
    m.sum_duplicates()
    return m


def _gregory_weights(x):
    """Fourth-order Gregory weights on uniform nodes ``x`` (at least 6).

    Unlike Simpson the interior weights are uniform, so the quadrature does
    not modulate the discrete energy from node to node.
    """
    n = x.size
    w = np.ones(n)
    ends = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
    w[:3] = ends
    w[-3:] = ends[::-1]
    return w * (x[1] - x[0])


@dataclass(frozen=True, eq=False)
class ExteriorGrid:
    """Mapped exterior grid.

    Attributes
    ----------
    shape : ParticleShape
    angular : AngularGrid
    n_s : int
        Number of radial (``s``) levels.
    R_out : float
    s : ndarray, shape (n_s,)
    points : ndarray, shape (N, 3)
        Cartesian node coordinates.
    r : ndarray, shape (N,)
    volume_weights : ndarray, shape (N,)
    """

    shape: ParticleShape
    angular: AngularGrid
    n_s: int
    R_out: float
    s: np.ndarray
    points: np.ndarray
    r: np.ndarray
    volume_weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def n_ang(self):
        return self.angular.size

    def level(self, k):
        """Node indices of radial level ``k``."""
        k = k % self.n_s
        return np.arange(k * self.n_ang, (k + 1) * self.n_ang)

    @property
    def inner(self):
        return self.level(0)

    @property
    def outer(self):
        return self.level(self.n_s - 1)

    @property
    def rho_max(self):
        return float(self.r[self.inner].max())

    def interior_mask(self, margin=2):
        """Nodes at least ``margin`` levels away from both radial boundaries."""
        k = np.repeat(np.arange(self.n_s), self.n_ang)
        return (k >= margin) & (k <= self.n_s - 1 - margin)

    def metadata(self):
        return {
            "kind": self.shape.kind,
            "semi_axes": [float(v) for v in self.shape.semi_axes],
            "n_s": int(self.n_s),
            "n_theta": int(self.angular.n_theta),
            "n_phi": int(self.angular.n_phi),
            "R_out": float(self.R_out),
            "ordering": "phi,theta,s",
        }

    def metadata_json(self):
        return json.dumps(self.metadata(), sort_keys=True, indent=2)

    @property
    def surface_weights(self):
        """Quadrature weights for ``dA`` on the particle boundary."""
        if "surface_weights" not in self._cache:
            nodes = self.angular.nodes
            af = self.shape.area_factor(nodes[:, 0], nodes[:, 1])
            self._cache["surface_weights"] = self.angular.weights * af
        return self._cache["surface_weights"]


def build_grid(shape, n_s, angular, R_out=None):
    """Build the mapped exterior grid.

    ``R_out`` defaults to ``16 * rho_max``.  ``angular`` may be an
    :class:`AngularGrid` or a ``(n_theta, n_phi)`` pair.
    """
    if not isinstance(angular, AngularGrid):
        angular = build_angular_grid(*angular)
    n_s = int(n_s)
    if n_s < 8:
        raise ConfigurationError(f"n_s must be >= 8, got {n_s}")
    if angular.n_phi % 2:
        raise ConfigurationError("n_phi must be even (pole-crossing stencils)")
    nodes = angular.nodes
    rho = shape.rho(nodes[:, 0], nodes[:, 1])
    if np.any(rho <= 0):
        raise ConfigurationError("particle radius must be positive")
    rho_max = float(rho.max())
    if R_out is None:
        R_out = 16.0 * rho_max
    R_out = float(R_out)
    if R_out <= 2.0 * rho_max:
        raise ConfigurationError(
            f"R_out={R_out} must exceed 2*rho_max={2.0 * rho_max}"
        )
    s = np.linspace(0.0, 1.0, n_s)
    log_ratio = np.log(R_out / rho)
    r = rho[None, :] * np.exp(s[:, None] * log_ratio[None, :])
    r[0, :] = rho
    r[-1, :] = R_out
    omega = angular.unit_vectors
    points = (r[:, :, None] * omega[None, :, :]).reshape(-1, 3)
    w_s = _gregory_weights(s)
    # dV = r^2 (dr/ds) ds dOmega with dr/ds = r log(R_out/rho)
    vol = (
        w_s[:, None]
        * angular.weights[None, :]
        * r**3
        * log_ratio[None, :]
    ).reshape(-1)
    return ExteriorGrid(
        shape, angular, n_s, R_out, s, points, r.reshape(-1), vol
    )


@dataclass(frozen=True, eq=False)
class GradientStencils:
    """Sparse operators ``D[c]`` mapping nodal values to ``d/dx_c`` at nodes.

    ``D_forward`` and ``D_backward`` use forward- and backward-biased
    fourth-order stencils in all three coordinates.  The energy is assembled
    from their average, which penalizes the odd-even modes that central
    stencils leave in the null space.
    """

    D: tuple
    jacobian: np.ndarray
    D_forward: tuple = ()
    D_backward: tuple = ()

    def apply(self, f):
        """Gradient of nodal values ``f`` (shape (N,) or (N, k)).

        Returns shape ``(N, 3)`` or ``(N, k, 3)`` with the derivative index last.
        """
        f = np.asarray(f, dtype=float)
        return np.stack([d @ f for d in self.D], axis=-1)


def gradient_weights(grid):
    """Differentiation stencils composed with the discrete inverse Jacobian."""
    if "stencils" in grid._cache:
        return grid._cache["stencils"]
    n_s, n_t, n_p = grid.n_s, grid.angular.n_theta, grid.angular.n_phi
    n_ang = n_t * n_p
    h_s = 1.0 / (n_s - 1)
    d_s = sp.kron(_biased_first(n_s, h_s, _CENTRAL), sp.identity(n_ang), format="csr")
    d_t = sp.kron(
        sp.identity(n_s), _theta_operator(grid.angular.theta, n_p), format="csr"
    )
    d_p = sp.kron(
        sp.identity(n_s * n_t),
        _periodic_first(n_p, 2.0 * np.pi / n_p),
        format="csr",
    )
    ops = (d_s, d_t, d_p)
    # jac[q, i, a] = d x_i / d xi_a
    jac = np.stack([np.stack([op @ grid.points[:, i] for op in ops], -1) for i in range(3)], 1)
    inv = np.linalg.inv(jac)  # inv[q, a, i] = d xi_a / d x_i

    def compose(parts):
        out = []
        for i in range(3):
            acc = sp.diags(inv[:, 0, i]) @ parts[0]
            for a in (1, 2):
                acc = acc + sp.diags(inv[:, a, i]) @ parts[a]
            out.append(acc.tocsr())
        return tuple(out)

    def biased(offsets):
        return (
            sp.kron(_biased_first(n_s, h_s, offsets), sp.identity(n_ang), format="csr"),
            sp.kron(sp.identity(n_s), _theta_operator(grid.angular.theta, n_p, offsets), format="csr"),
            sp.kron(
                sp.identity(n_s * n_t),
                _biased_first(n_p, 2.0 * np.pi / n_p, offsets, periodic=True),
                format="csr",
            ),
        )

    stencils = GradientStencils(
        compose(ops), jac, compose(biased(_FORWARD)), compose(biased(_BACKWARD))
    )
    grid._cache["stencils"] = stencils
    return stencils
