"""Exterior Poisson problems with power-law decay certificates.

A source ``f`` on ``|x| >= 1`` with ``|f| <= r^(-gamma-2)`` is split into
spherical-harmonic modes ``f_l(r)``.  Each mode is inverted for the radial
operator ``L_l u = u'' + (d-1)/r u' - lambda_l/r^2 u`` through the
factorization

    L_l u = r^(1-d+g) d/dr [ r^(d-1-2g) d/dr (r^g u) ],   g = gamma_l^-,

which gives the explicit double integrals

    OUTWARD (g < gamma):  u = r^-g  int_r^inf t^(2g+1-d) int_t^inf s^(d-1-g) f ds dt
    INWARD  (g > gamma):  u = -r^-g int_1^r t^(2g+1-d) int_t^inf s^(d-1-g) f ds dt.

Integrals over ``[1, R_max]`` use composite Simpson on a log-spaced grid;
beyond ``R_max`` the source is continued by its certified power law and
integrated in closed form.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator

from ._errors import CertificateError, ConfigurationError, DomainError
from .sphgrid import ShellCoefficients, build_angular_grid, real_sph_harm, sh_analyze, sh_synthesize

__all__ = [
    "OUTWARD",
    "INWARD",
    "DecayExponents",
    "decay_exponents",
    "mode_classification",
    "log_grid",
    "PoissonMode",
    "solve_mode",
    "radial_operator",
    "homogeneous_share",
    "PoissonSolution",
    "solve_exterior_poisson",
    "DecayReport",
    "verify_decay",
    "closed_form_amplitude",
    "ExteriorPoissonSolver",
]

OUTWARD = "OUTWARD"
INWARD = "INWARD"

_INT_TOL = 1e-6


@dataclass(frozen=True)
class DecayExponents:
    """Homogeneous exponents of degree ``l``: solutions ``r^gamma_plus`` and ``r^-gamma_minus``."""

    l: int
    d: int
    lambda_: float
    gamma_plus: float
    gamma_minus: float


def decay_exponents(l, d=3):
    if int(l) != l or l < 0:
        raise ConfigurationError(f"degree must be a non-negative integer, got {l}")
    if int(d) != d or d < 3:
        raise ConfigurationError(f"dimension must be an integer >= 3, got {d}")
    l, d = int(l), int(d)
    return DecayExponents(l, d, float(l * l + l * (d - 2)), float(l), float(l + d - 2))


def _check_gamma(gamma, d):
    gamma = float(gamma)
    if gamma <= d - 2:
        raise DomainError(f"gamma={gamma} must exceed d-2={d - 2}")
    if abs(gamma - round(gamma)) < _INT_TOL:
        raise DomainError(f"gamma={gamma} is (within 1e-6 of) an integer")
    return gamma


def mode_classification(gamma, d=3, l_max=4):
    """Branch per degree: OUTWARD iff ``l + d - 2 < gamma``."""
    gamma = _check_gamma(gamma, d)
    return {l: OUTWARD if l + d - 2 < gamma else INWARD for l in range(int(l_max) + 1)}


def closed_form_amplitude(l, gamma, d=3):
    """``A`` with ``L_l (A r^-gamma) = r^(-gamma-2)``, i.e. ``1/(gamma^2 - (d-2) gamma - lambda_l)``."""
    ex = decay_exponents(l, d)
    return 1.0 / (gamma * gamma - (d - 2) * gamma - ex.lambda_)


def log_grid(R_max, n=2001):
    """``n`` log-spaced radii on ``[1, R_max]`` (``n`` odd, for Simpson)."""
    if R_max <= 1:
        raise ConfigurationError("R_max must exceed 1")
    if n < 5 or n % 2 == 0:
        raise ConfigurationError("radial node count must be odd and >= 5")
    return np.exp(np.linspace(0.0, np.log(R_max), n))


@dataclass(frozen=True)
class PoissonMode:
    """One radial source mode with its decay certificate.

    Attributes
    ----------
    exponents : DecayExponents
    gamma : float
        Decay parameter, ``gamma > d - 2`` and not an integer.
    r : ndarray
        Log-spaced radii starting at 1.
    f : ndarray
        ``f_l`` at ``r``.
    tail_exponent : float
        ``f_l(r) = f_l(R_max) (r/R_max)^-tail_exponent`` for ``r > R_max``;
        must be at least ``gamma + 2``.
    inner_exponent : float or None
        Optional continuation ``f_l(r) = f_l(1) r^-inner_exponent`` on
        ``(0, 1)``.  When given, the INWARD branch integrates from 0 in
        closed form below 1; otherwise it starts at 1.
    """

    exponents: DecayExponents
    gamma: float
    r: np.ndarray
    f: np.ndarray
    tail_exponent: float
    inner_exponent: float | None = None

    def __post_init__(self):
        _check_gamma(self.gamma, self.exponents.d)
        r = np.asarray(self.r, float)
        if abs(r[0] - 1.0) > 1e-12:
            raise ConfigurationError("radial grid must start at r=1")
        x = np.log(r)
        if r.size < 5 or r.size % 2 == 0 or not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9):
            raise ConfigurationError("radial grid must be log-uniform with an odd node count")
        if np.shape(self.f) != r.shape:
            raise ConfigurationError("f samples do not match the radial grid")
        if self.tail_exponent < self.gamma + 2 - 1e-12:
            raise CertificateError(
                f"tail_exponent {self.tail_exponent} < gamma + 2 = {self.gamma + 2}"
            )

    @property
    def branch(self):
        return OUTWARD if self.exponents.gamma_minus < self.gamma else INWARD


def _cumulative_from_end(g, h):
    """``int_{x_i}^{x_end} g dx`` at every node (Simpson, integrated backwards)."""
    rev = cumulative_simpson(g[::-1], dx=h, initial=0.0)
    return rev[::-1]


def _power_integral_0_1(a, b, p, F1, f1):
    """``int_0^1 t^a F(t) dt`` with ``F(t) = F1 + f1 int_t^1 s^(b-p) ds``."""
    e = b - p + 1.0
    if abs(e) < 1e-12:
        # F(t) = F1 - f1 ln t
        return F1 / (a + 1.0) + f1 / (a + 1.0) ** 2
    return (F1 + f1 / e) / (a + 1.0) - f1 / (e * (a + e + 1.0))


def solve_mode(mode):
    """Radial solution ``u_l`` of ``L_l u = f_l`` on the mode's grid."""
    ex = mode.exponents
    d, g = ex.d, ex.gamma_minus
    r = np.asarray(mode.r, float)
    f = np.asarray(mode.f, float)
    if not np.any(f):
        return np.zeros_like(r)
    x = np.log(r)
    h = x[1] - x[0]
    R = r[-1]
    a = 2.0 * g + 1.0 - d
    b = d - 1.0 - g
    q = float(mode.tail_exponent)
    if q <= b + 1.0:
        raise CertificateError("tail exponent too small for the inner integral to converge")
    # F(t) = int_t^inf s^b f ds; ds = s dx on the log grid
    tail_F = f[-1] * R ** (b + 1.0) / (q - b - 1.0)
    F = _cumulative_from_end(r ** (b + 1.0) * f, h) + tail_F
    integrand = r ** (a + 1.0) * F
    if mode.branch == OUTWARD:
        if q <= a + b + 2.0:
            raise CertificateError("tail exponent too small for the outer integral to converge")
        # beyond R: F(t) = tail_F (t/R)^(b+1-q)
        tail_G = tail_F * R ** (a + 1.0) / (q - a - b - 2.0)
        G = _cumulative_from_end(integrand, h) + tail_G
        return r ** (-g) * G
    G = cumulative_simpson(integrand, dx=h, initial=0.0)
    if mode.inner_exponent is not None:
        p = float(mode.inner_exponent)
        if p >= g + 2.0:
            raise CertificateError(
                f"inner_exponent {p} >= gamma_minus + 2; the integral from 0 diverges"
            )
        G = G + _power_integral_0_1(a, b, p, F[0], f[0])
    return -(r ** (-g)) * G


def radial_operator(u, r, l, d=3):
    """Second-order finite-difference ``L_l u`` on a log-uniform grid (interior nodes)."""
    ex = decay_exponents(l, d)
    x = np.log(r)
    h = x[1] - x[0]
    ux = (u[2:] - u[:-2]) / (2.0 * h)
    uxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    rr = r[1:-1]
    return (uxx + (d - 2) * ux - ex.lambda_ * u[1:-1]) / rr**2


def homogeneous_share(r, u, gamma, gamma_minus):
    """Relative weight of ``r^-gamma_minus`` in a least-squares fit by ``{r^-gamma, r^-gamma_minus}``.

    Rows are scaled by ``r^gamma`` so every radius counts equally.
    """
    A = np.stack([r ** (-gamma), r ** (-gamma_minus)], axis=1) * r[:, None] ** gamma
    c, *_ = np.linalg.lstsq(A, u * r**gamma, rcond=None)
    return float(abs(c[1]) / max(abs(c[0]) + abs(c[1]), 1e-300))


# --- vector fields ----------------------------------------------------------


@dataclass
class PoissonSolution:
    """Solution of ``Lap u = f`` on shells ``|x| = r_k``.

    ``u`` and ``f`` have shape ``(n_r, n_ang, 3)``; ``u_modes`` and
    ``f_modes`` hold per-shell harmonic coefficients ``(n_r, n_coef, 3)``.
    """

    r: np.ndarray
    angular: object
    u: np.ndarray
    f: np.ndarray
    u_modes: np.ndarray
    f_modes: np.ndarray
    gamma: float
    d: int
    l_max: int
    residual_norm: float


def solve_exterior_poisson(
    f, gamma, *, l_max=4, angular=None, R_max=100.0, n_r=2001, tail_exponent=None,
    inner_exponent=None, workers=1,
):
    """Solve ``Lap u = f`` outside the unit ball (d=3) mode by mode.

    Parameters
    ----------
    f : callable
        ``f(x)`` for points of shape ``(M, 3)`` returning ``(M, 3)``.
    gamma : float
        Decay certificate: ``|f| <= r^(-gamma-2)``.
    tail_exponent : float, optional
        Certified power of every mode beyond ``R_max`` (default ``gamma + 2``).
    inner_exponent : float, optional
        Passed to every INWARD mode (see :class:`PoissonMode`).

    The residual norm is the relative discrete ``L2`` mismatch of
    ``L_l u_l`` against ``f_l`` over interior radii and all modes.
    """
    d = 3
    gamma = _check_gamma(gamma, d)
    angular = build_angular_grid(l_max + 2, 2 * l_max + 6) if angular is None else angular
    r = log_grid(R_max, n_r)
    om = angular.unit_vectors
    pts = r[:, None, None] * om[None, :, :]
    fv = np.asarray(f(pts.reshape(-1, 3)), float).reshape(len(r), angular.size, 3)
    f_modes = np.stack([sh_analyze(s, angular, l_max).a for s in fv])  # (n_r, n_coef, 3)
    q = gamma + 2.0 if tail_exponent is None else float(tail_exponent)
    u_modes = np.zeros_like(f_modes)
    res_num = res_den = 0.0
    jobs = [(l, k, c) for l in range(l_max + 1) for k in range(l * l, (l + 1) ** 2) for c in range(3)]

    def run(job):
        l, k, c = job
        mode = PoissonMode(
            decay_exponents(l, d), gamma, r, f_modes[:, k, c], q, inner_exponent
        )
        return solve_mode(mode)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for (l, k, c), uk in zip(jobs, results):
        u_modes[:, k, c] = uk
        lu = radial_operator(uk, r, l, d)
        res_num += float(np.sum((lu - f_modes[1:-1, k, c]) ** 2))
        res_den += float(np.sum(f_modes[1:-1, k, c] ** 2))
    u = np.stack([sh_synthesize(ShellCoefficients(l_max, um), angular) for um in u_modes])
    resid = np.sqrt(res_num / res_den) if res_den > 0 else 0.0
    return PoissonSolution(r, angular, u, fv, u_modes, f_modes, gamma, d, l_max, resid)


# --- decay ------------------------------------------------------------------


@dataclass(frozen=True)
class DecayReport:
    slope: float | None
    gamma: float
    passed: bool | None
    applicable: bool

    def to_dict(self):
        return {
            "slope": self.slope,
            "gamma": self.gamma,
            "passed": self.passed,
            "applicable": self.applicable,
        }


def verify_decay(u, r, gamma, angular=None, floor=1e-14):
    """Log-log slope of the shell ``L2`` norm of ``u``; pass iff ``slope <= -gamma + 0.1``.

    ``u`` has shape ``(n_r,)`` (radial profile) or ``(n_r, n_ang[, k])``
    with ``angular`` given.  At roundoff level (max norm below ``floor``)
    the check is not applicable.
    """
    u = np.asarray(u, float)
    r = np.asarray(r, float)
    if len(r) < 6:
        raise ConfigurationError("verify_decay needs at least 6 shells")
    if u.ndim == 1:
        norms = np.abs(u)
    else:
        if angular is None:
            raise ConfigurationError("angular grid required for shell norms")
        sq = u**2 if u.ndim == 2 else np.sum(u**2, axis=-1)
        norms = np.sqrt(sq @ angular.weights)
    if norms.max() < floor:
        return DecayReport(None, float(gamma), None, False)
    slope = float(np.polyfit(np.log(r), np.log(np.maximum(norms, 1e-300)), 1)[0])
    return DecayReport(slope, float(gamma), slope <= -gamma + 0.1, True)


class ExteriorPoissonSolver(BaseEstimator):
    """Estimator form of :func:`solve_exterior_poisson`.

    ``fit(f)`` takes the source callable and stores ``solution_``;
    ``predict(X)`` evaluates ``u`` at points with ``1 <= |x| <= R_max`` by
    cubic interpolation of the mode amplitudes in ``log r``.
    """

    def __init__(
        self, gamma=2.5, l_max=4, R_max=100.0, n_r=2001, tail_exponent=None,
        inner_exponent=None, workers=1,
    ):
        self.gamma = gamma
        self.l_max = l_max
        self.R_max = R_max
        self.n_r = n_r
        self.tail_exponent = tail_exponent
        self.inner_exponent = inner_exponent
        self.workers = workers

    def fit(self, X, y=None):
        self.solution_ = solve_exterior_poisson(
            X, self.gamma, l_max=self.l_max, R_max=self.R_max, n_r=self.n_r,
            tail_exponent=self.tail_exponent, inner_exponent=self.inner_exponent,
            workers=self.workers,
        )
        sol = self.solution_
        self._spline = CubicSpline(np.log(sol.r), sol.u_modes, axis=0)
        return self

    def predict(self, X):
        x = np.atleast_2d(np.asarray(X, float))
        r = np.linalg.norm(x, axis=1)
        if np.any(r < 1.0 - 1e-12) or np.any(r > self.R_max * (1 + 1e-12)):
            raise DomainError("points must satisfy 1 <= |x| <= R_max")
        theta = np.arccos(np.clip(x[:, 2] / r, -1.0, 1.0))
        phi = np.arctan2(x[:, 1], x[:, 0])
        Y = real_sph_harm(self.solution_.l_max, theta, phi)  # (M, n_coef)
        modes = self._spline(np.log(r))  # (M, n_coef, 3)
        return np.einsum("mk,mkc->mc", Y, modes)

    def decay_report(self):
        sol = self.solution_
        return verify_decay(sol.u, sol.r, sol.gamma, sol.angular)
