"""Energy landscape over far-field directions and the torque identity.

The minimal energy ``E(n0)`` is sampled on the unit sphere, its spherical
gradient is taken by geodesic central differences, and the gradient is
compared with ``-8 pi v0`` where ``v0`` is the extracted monopole
coefficient of the minimizer.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from ._errors import ConfigurationError
from .anchoring import is_infinite
from .expansion import extract_expansion, image_degree, remainder_slope
from .exterior_grid import rotation_matrix
from .fields import DirectorField, stiffness_matrix
from .minimizer import SolveConfig, _preconditioner, solve_director

__all__ = [
    "Sampling",
    "fibonacci",
    "great_circle",
    "local_star",
    "LandscapeSample",
    "EnergyLandscape",
    "sweep_energy_landscape",
    "spherical_gradient",
    "torque_identity_check",
    "semiconcavity_constant",
    "corollary_report",
    "tangent_basis",
    "LandscapeSweep",
]

logger = logging.getLogger(__name__)

_TIE = 1e-10


# --- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class Sampling:
    """Directions to sample plus the recipe that produced them."""

    kind: str
    directions: np.ndarray
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.directions)


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def tangent_basis(n0):
    """Deterministic orthonormal pair ``(e_a, e_b)`` spanning ``T_{n0} S^2``."""
    n0 = _unit(n0)
    k = np.zeros(3)
    k[int(np.argmin(np.abs(n0)))] = 1.0
    e_a = _unit(np.cross(n0, k))
    e_b = np.cross(n0, e_a)
    return e_a, e_b


def geodesic_step(n0, direction, h):
    """``exp_{n0}(h e)`` for a unit tangent ``e``, via rotation about ``n0 x e``."""
    return rotation_matrix(np.cross(n0, direction), h) @ n0


def fibonacci(N):
    """Fibonacci lattice of ``N`` nearly uniform directions."""
    if N < 1:
        raise ConfigurationError("fibonacci sampling needs N >= 1")
    k = np.arange(N) + 0.5
    z = 1.0 - 2.0 * k / N
    phi = np.pi * (1.0 + np.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z**2)
    dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    return Sampling("fibonacci", dirs, {"N": int(N)})


def great_circle(axis, N, start=None):
    """``N`` equally spaced directions on the great circle normal to ``axis``.

    The circle starts at ``start`` (default: the projection of ``e3``, or of
    ``e1`` when ``axis`` is parallel to ``e3``) and runs towards
    ``axis x start``.
    """
    if N < 2:
        raise ConfigurationError("great_circle sampling needs N >= 2")
    axis = _unit(axis)
    if start is None:
        start = np.array([0.0, 0.0, 1.0])
        if abs(axis @ start) > 1.0 - 1e-12:
            start = np.array([1.0, 0.0, 0.0])
    a = _unit(np.asarray(start, float) - (axis @ start) * axis)
    b = np.cross(axis, a)
    t = 2.0 * np.pi * np.arange(N) / N
    dirs = np.cos(t)[:, None] * a + np.sin(t)[:, None] * b
    return Sampling("great_circle", dirs, {"axis": axis.tolist(), "N": int(N), "start": a.tolist()})


def local_star(n0, h, richardson=False):
    """``n0`` and geodesic neighbours at ``+-h`` along two tangent directions.

    With ``richardson`` the steps ``2h`` and ``4h`` are added for a
    three-step Richardson extrapolation.
    """
    if not 1e-3 <= h <= 1e-1:
        raise ConfigurationError(f"local_star step h={h} outside [1e-3, 1e-1]")
    n0 = _unit(n0)
    e_a, e_b = tangent_basis(n0)
    steps = [h, 2 * h, 4 * h] if richardson else [h]
    dirs = [n0]
    labels = [("center", 0, 0.0)]
    for which, e in ((0, e_a), (1, e_b)):
        for t in steps:
            for sgn in (1.0, -1.0):
                dirs.append(geodesic_step(n0, e, sgn * t))
                labels.append(("star", which, sgn * t))
    params = {
        "n0": n0.tolist(),
        "h": float(h),
        "steps": steps,
        "e_a": e_a.tolist(),
        "e_b": e_b.tolist(),
        "labels": labels,
    }
    return Sampling("local_star", np.array(dirs), params)


# --- landscape --------------------------------------------------------------


@dataclass
class LandscapeSample:
    index: int
    n0: np.ndarray
    energy: float
    v0: np.ndarray
    report: object
    diagnostics: dict
    start: str
    field: np.ndarray | None = None

    @property
    def converged(self):
        return bool(self.report.converged)


@dataclass
class EnergyLandscape:
    """Sampled minimal energies with monopole coefficients."""

    sampling: Sampling
    samples: list
    fit_window: tuple
    outer_bc: str
    grid: object = None

    @property
    def directions(self):
        return np.array([s.n0 for s in self.samples])

    @property
    def energies(self):
        return np.array([s.energy for s in self.samples])

    @property
    def v0(self):
        return np.array([s.v0 for s in self.samples])

    @property
    def converged(self):
        return np.array([s.converged for s in self.samples])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n0x", "n0y", "n0z", "E", "v0x", "v0y", "v0z", "converged"])
        for s in self.samples:
            w.writerow(
                [*(_fmt(x) for x in s.n0), _fmt(s.energy), *(_fmt(x) for x in s.v0), int(s.converged)]
            )
        return buf.getvalue()

    def symmetry_spread(self, rotations, tol=1e-9):
        """Largest relative energy mismatch between samples related by a rotation."""
        dirs = self.directions
        E = self.energies
        tree = cKDTree(dirs)
        worst = 0.0
        for R in rotations:
            dist, j = tree.query(dirs @ np.asarray(R).T)
            for i in np.flatnonzero(dist < tol):
                scale = max(abs(E[i]), abs(E[j[i]]), 1e-300)
                worst = max(worst, abs(E[i] - E[j[i]]) / scale)
        return worst


def _fmt(x):
    return format(float(x), ".17g")


def _default_window(grid):
    return (2.0 * grid.rho_max, grid.R_out / 2.0)


def _monopole(field, window, outer_bc):
    """Monopole coefficient and diagnostics of a minimizer.

    The growing images left by the outer boundary are fitted alongside; with
    a Dirichlet outer boundary that includes the constant in
    ``v0 (1/r - 1/R)``.
    """
    e = extract_expansion(field, window, truncation_terms=image_degree(outer_bc))
    return e.v0, e.diagnostics


def _warm_caches(grid, F_s, cfg):
    stiffness_matrix(grid)
    _preconditioner(grid, F_s, cfg.outer_bc)


def _solve(grid, F_s, n0, cfg, warm=None):
    if warm is None:
        c = SolveConfig(**{**cfg.__dict__, "init": "constant_n0", "warm_start": None})
    else:
        c = SolveConfig(**{**cfg.__dict__, "init": "warm_start", "warm_start": warm})
    return solve_director(grid.shape, F_s, n0, grid, c)


def _neighbors(dirs):
    """Nearest other sample per sample (ties to the lowest index)."""
    if len(dirs) < 2:
        return np.full(len(dirs), -1)
    d = np.linalg.norm(dirs[:, None, :] - dirs[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    return np.argmin(d, axis=1)


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def sweep_energy_landscape(
    shape, F_s, sampling, grid, cfg=None, *, fit_window=None, workers=1, keep_fields=True
):
    """Minimal energy and monopole coefficient per sampled direction.

    Every direction is solved from the constant field ``n0`` and, in a
    second pass, warm-started from the constant-start minimizer of its
    nearest sampled neighbour (director values rotated by the geodesic
    rotation between the two directions).  The lower energy wins; ties
    below ``1e-10`` go to the constant start.  Both passes depend only on the
    sample set, so results do not depend on ``workers``.
    """
    cfg = SolveConfig() if cfg is None else cfg
    if shape is not None and shape is not grid.shape:
        raise ConfigurationError("shape does not match the grid's particle")
    dirs = np.array([_unit(d) for d in sampling.directions])
    window = _default_window(grid) if fit_window is None else tuple(fit_window)
    _warm_caches(grid, F_s, cfg)

    cold = _map(lambda n0: _solve(grid, F_s, n0, cfg), list(dirs), workers)
    nbr = _neighbors(dirs)

    def warm(i):
        j = nbr[i]
        if j < 0:
            return None
        axis = np.cross(dirs[j], dirs[i])
        s = np.linalg.norm(axis)
        if s < 1e-14:
            R = np.eye(3) if dirs[j] @ dirs[i] > 0 else -np.eye(3)
        else:
            R = rotation_matrix(axis, np.arctan2(s, dirs[j] @ dirs[i]))
        return _solve(grid, F_s, dirs[i], cfg, cold[j][0].values @ R.T)

    hot = _map(warm, range(len(dirs)), workers)

    samples = []
    for i, n0 in enumerate(dirs):
        (fc, rc), best = cold[i], "constant_n0"
        field_, rep = fc, rc
        if hot[i] is not None:
            fh, rh = hot[i]
            if rh.energy < rc.energy - _TIE:
                field_, rep, best = fh, rh, "warm_start"
        if is_infinite(rep.energy):
            raise ConfigurationError(f"sample {i} ended with infinite energy")
        if not rep.converged:
            logger.warning("landscape sample %d did not converge", i)
        v0, diag = _monopole(field_, window, cfg.outer_bc)
        samples.append(
            LandscapeSample(
                i, n0, float(rep.energy), v0, rep, diag, best,
                field_.values if keep_fields else None,
            )
        )
    return EnergyLandscape(sampling, samples, window, cfg.outer_bc, grid)


# --- gradient ---------------------------------------------------------------


def _central(E, labels, which, t):
    plus = minus = None
    for k, (kind, w, step) in enumerate(labels):
        if kind == "star" and w == which:
            if np.isclose(step, t):
                plus = E[k]
            elif np.isclose(step, -t):
                minus = E[k]
    if plus is None or minus is None:
        raise ConfigurationError(f"local star lacks the +-{t} samples along e_{'ab'[which]}")
    return (plus - minus) / (2.0 * t)


def spherical_gradient(landscape, richardson=None):
    """Geodesic central-difference gradient of the landscape at the star centre.

    Returns the tangent vector ``g_a e_a + g_b e_b``.  With three steps
    available (``h, 2h, 4h``) Richardson extrapolation is applied unless
    ``richardson=False``.
    """
    smp = landscape.sampling if isinstance(landscape, EnergyLandscape) else None
    if smp is None or smp.kind != "local_star":
        raise ConfigurationError("spherical_gradient needs a local_star landscape")
    E = landscape.energies
    labels = smp.params["labels"]
    steps = smp.params["steps"]
    h = smp.params["h"]
    use_r = len(steps) == 3 if richardson is None else richardson
    if use_r and len(steps) < 3:
        raise ConfigurationError("Richardson extrapolation needs the 2h and 4h samples")
    g = []
    for which in (0, 1):
        if use_r:
            d1, d2, d4 = (_central(E, labels, which, t) for t in (h, 2 * h, 4 * h))
            r1 = (4.0 * d1 - d2) / 3.0
            r2 = (4.0 * d2 - d4) / 3.0
            g.append((16.0 * r1 - r2) / 15.0)
        else:
            g.append(_central(E, labels, which, h))
    e_a = np.asarray(smp.params["e_a"])
    e_b = np.asarray(smp.params["e_b"])
    n0 = np.asarray(smp.params["n0"])
    out = g[0] * e_a + g[1] * e_b
    return out - (out @ n0) * n0


@dataclass
class TorqueReport:
    grad: np.ndarray
    v0: np.ndarray
    rel_error: float
    converged: bool
    reliable: bool
    energy: float
    v0_raw: np.ndarray
    landscape: EnergyLandscape = None

    def to_dict(self):
        return {
            "grad": self.grad.tolist(),
            "v0": self.v0.tolist(),
            "v0_raw": self.v0_raw.tolist(),
            "minus_8pi_v0": (-8.0 * np.pi * self.v0).tolist(),
            "rel_error": self.rel_error,
            "converged": self.converged,
            "reliable": self.reliable,
            "energy": self.energy,
        }


def torque_identity_check(
    n0, shape, F_s, grid, cfg=None, h=0.02, *, richardson=False, fit_window=None, workers=1,
    keep_fields=False,
):
    """Compare the spherical gradient of the landscape with ``-8 pi v0``.

    ``rel_error = |grad + 8 pi v0| / (|grad| + 8 pi |v0| + 1e-12)`` with
    ``v0`` projected onto the tangent plane at ``n0``.  ``reliable`` is
    false when any inner solve did not converge.  ``keep_fields`` retains
    the minimizers on ``report.landscape``.
    """
    n0 = _unit(n0)
    land = sweep_energy_landscape(
        shape, F_s, local_star(n0, h, richardson), grid, cfg,
        fit_window=fit_window, workers=workers, keep_fields=keep_fields,
    )
    grad = spherical_gradient(land, richardson)
    v_raw = land.samples[0].v0
    v = v_raw - (v_raw @ n0) * n0
    rel = float(
        np.linalg.norm(grad + 8.0 * np.pi * v)
        / (np.linalg.norm(grad) + 8.0 * np.pi * np.linalg.norm(v) + 1e-12)
    )
    conv = bool(land.converged.all())
    if not conv:
        logger.warning("torque check: some inner solves did not converge")
    return TorqueReport(grad, v, rel, conv, conv, land.samples[0].energy, v_raw, land)


# --- corollaries ------------------------------------------------------------


def semiconcavity_constant(dirs, E, v0, C_max=None, tol=1e-12):
    """Smallest ``C >= 0`` with ``E(m) <= E(n) - 8 pi v0(n).(m - n) + C |m - n|^2``.

    Returns ``(C, violations)`` where ``violations`` counts ordered pairs
    breaking the inequality at ``C_max`` (``None`` when not requested).
    """
    dirs = np.asarray(dirs, float)
    E = np.asarray(E, float)
    v0 = np.asarray(v0, float)
    d = dirs[None, :, :] - dirs[:, None, :]  # d[i, j] = m_j - n_i
    d2 = np.einsum("ijk,ijk->ij", d, d)
    lin = E[None, :] - E[:, None] + 8.0 * np.pi * np.einsum("ik,ijk->ij", v0, d)
    mask = d2 > 1e-24
    ratio = np.where(mask, lin / np.where(mask, d2, 1.0), -np.inf)
    C = max(0.0, float(ratio.max())) if mask.any() else 0.0
    viol = None
    if C_max is not None:
        viol = int(np.sum(mask & (lin > C_max * d2 + tol)))
    return C, viol


def _graph(dirs, k):
    k = min(k, len(dirs) - 1)
    if k < 1:
        return [[] for _ in dirs]
    _, idx = cKDTree(dirs).query(dirs, k + 1)
    return [list(row[1:]) for row in idx]


def corollary_report(landscape, *, axis=None, sphere=False, k_neighbors=6):
    """Symmetry, local-minimum and semiconcavity metrics of a landscape.

    Parameters
    ----------
    landscape : EnergyLandscape
    axis : array-like, optional
        Declared symmetry axis ``u``; enables the axis metric and the cone
        probe at ``u`` when ``u`` is a sample.
    sphere : bool
        Declared full rotational symmetry; enables ``max |v0|``.
    k_neighbors : int
        Neighbours per sample in the local-minimum graph (great circles use 2).
    """
    dirs = landscape.directions
    E = landscape.energies
    v0 = landscape.v0
    vn = np.linalg.norm(v0, axis=1)
    out = {"n_samples": len(dirs), "all_converged": bool(landscape.converged.all())}

    if axis is not None:
        u = _unit(axis)
        tors = np.abs(np.einsum("ij,ij->i", v0, np.cross(u, dirs)))
        out["axis_metric"] = float(np.max(tors / np.maximum(vn, 1e-6)))
    if sphere:
        out["sphere_max_v0"] = float(vn.max())

    kk = 2 if landscape.sampling.kind == "great_circle" else k_neighbors
    nbrs = _graph(dirs, kk)
    minima = []
    for i, nb in enumerate(nbrs):
        if nb and all(E[i] <= E[j] for j in nb):
            slopes = [abs(E[j] - E[i]) / np.linalg.norm(dirs[j] - dirs[i]) for j in nb]
            bound = float(max(slopes))
            entry = {
                "index": i,
                "n0": dirs[i].tolist(),
                "v0_norm": float(vn[i]),
                "torque_norm": float(8.0 * np.pi * vn[i]),
                "fd_noise_bound": bound,
                "within_bound": bool(8.0 * np.pi * vn[i] <= bound),
            }
            s = landscape.samples[i]
            if s.field is not None and landscape.grid is not None:
                f = DirectorField(landscape.grid, s.field, dirs[i])
                e = extract_expansion(
                    f,
                    landscape.fit_window,
                    harmonic_only=True,
                    truncation_terms=image_degree(landscape.outer_bc),
                )
                slope, _, _ = remainder_slope(f, e, include_corr=False)
                entry["remainder_slope_harmonic"] = slope
            minima.append(entry)
    out["local_minima"] = minima

    e_range = float(E.max() - E.min())
    C_max = 10.0 * e_range
    C, viol = semiconcavity_constant(dirs, E, v0, C_max, tol=1e-6 * e_range)
    out["semiconcavity"] = {"C": C, "C_max": C_max, "violations": viol, "energy_range": e_range}

    if axis is not None:
        u = _unit(axis)
        hit = np.flatnonzero(np.linalg.norm(dirs - u, axis=1) < 1e-9)
        if hit.size:
            i = int(hit[0])
            others = np.delete(np.arange(len(dirs)), i)
            j = int(others[np.argmin(np.linalg.norm(dirs[others] - u, axis=1))])
            dist = float(np.arccos(np.clip(dirs[j] @ u, -1.0, 1.0)))
            out["cone_probe"] = {
                "v0_norm_at_axis": float(vn[i]),
                "one_sided_slope": float((E[j] - E[i]) / dist),
                "geodesic_step": dist,
            }
    return out


class LandscapeSweep(BaseEstimator):
    """Estimator form of :func:`sweep_energy_landscape`.

    ``fit(X)`` takes a :class:`Sampling` or an array of directions
    (n_dirs, 3) and stores ``landscape_``.  ``predict(X)`` solves for new
    directions and returns their minimal energies.
    """

    def __init__(
        self,
        grid=None,
        anchoring=None,
        outer_bc="monopole_robin",
        max_iters=2000,
        grad_tol=None,
        fit_window=None,
        workers=1,
    ):
        self.grid = grid
        self.anchoring = anchoring
        self.outer_bc = outer_bc
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.fit_window = fit_window
        self.workers = workers

    def _sweep(self, X):
        if self.grid is None or self.anchoring is None:
            raise ConfigurationError("grid and anchoring must be set")
        if not isinstance(X, Sampling):
            X = Sampling("custom", np.atleast_2d(np.asarray(X, float)))
        cfg = SolveConfig(outer_bc=self.outer_bc, max_iters=self.max_iters, grad_tol=self.grad_tol)
        return sweep_energy_landscape(
            None, self.anchoring, X, self.grid, cfg,
            fit_window=self.fit_window, workers=self.workers, keep_fields=False,
        )

    def fit(self, X, y=None):
        self.landscape_ = self._sweep(X)
        self.gradient_ = spherical_gradient(self.landscape_) if _is_star(X) else None
        return self

    def predict(self, X):
        return self._sweep(X).energies


def _is_star(X):
    return isinstance(X, Sampling) and X.kind == "local_star"
