"""Far-field multipole expansion of director fields.

The expansion is

    n ~ n0 + v0/r + sum_j p_j d_j(1/r) + sum_kl c_kl d_k d_l(1/r) + n_corr

with the non-harmonic correction

    n_corr = -a |v0|^2/r^2 n0 - |v0|^2/(6 r^3) v0
             - 1/(3r) sum_j (v0 . p_j) d_j(1/r) n0,

where ``a = 1/2`` (the value forced by ``|n| = 1`` at order ``1/r^2``).
``corr_variant="printed"`` switches to ``a = 1`` for comparison.

On a truncated domain the field also carries growing harmonics
``r^l Y_lm`` (l <= 2) induced by the outer boundary; these are fitted and
stored separately as ``growing`` when requested.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._errors import ConfigurationError
from .sphgrid import build_angular_grid, real_sph_harm, sh_analyze, sh_index

__all__ = [
    "FarFieldExpansion",
    "FieldSamples",
    "evaluate_expansion",
    "extract_expansion",
    "image_degree",
    "remainder_slope",
    "shell_radii",
    "shell_samples",
    "FarFieldFit",
]

_SQ4PI = np.sqrt(4.0 * np.pi)
_SQ4PI3 = np.sqrt(4.0 * np.pi / 3.0)
# real-harmonic order carrying omega_x, omega_y, omega_z
_M_OF_AXIS = (1, -1, 0)
_COND_WARN = 1e8
_NOISE_FLOOR = 1e-13


def _traceless_basis():
    b = np.zeros((5, 3, 3))
    b[0] = np.diag([1.0, -1.0, 0.0])
    b[1] = np.diag([1.0, 1.0, -2.0])
    for k, (i, j) in enumerate([(0, 1), (0, 2), (1, 2)], start=2):
        b[k, i, j] = b[k, j, i] = 1.0
    return b


def _quadrupole_map():
    """Matrix from traceless-basis weights to degree-2 coefficients of
    ``3 omega^T C omega``."""
    grid = build_angular_grid(6, 12)
    om = grid.unit_vectors
    basis = _traceless_basis()
    vals = 3.0 * np.einsum("qk,bkl,ql->qb", om, basis, om)
    a = sh_analyze(vals, grid, 2).a  # (9, 5)
    return a[4:9]


_QMAP = _quadrupole_map()
_QMAP_INV = np.linalg.inv(_QMAP)


@dataclass(frozen=True)
class FieldSamples:
    """Nodal vector values on a grid without the unit-norm invariant."""

    grid: object
    values: np.ndarray
    far_value: np.ndarray


@dataclass
class FarFieldExpansion:
    """Fitted far-field coefficients.

    Attributes
    ----------
    n0 : ndarray (3,)
    v0 : ndarray (3,)
        Monopole (``1/r``) coefficient.
    p : ndarray (3, 3)
        ``p[j]`` is the vector multiplying ``d_j(1/r)``.
    c : ndarray (3, 3, 3)
        ``c[i, k, l]``: component ``i`` of the coefficient of
        ``d_k d_l (1/r)``; symmetric and traceless in ``(k, l)``.
    growing : ndarray (9, 3) or None
        Coefficients of ``r^l Y_lm`` (flat ``(l, m)`` index) per component.
    """

    n0: np.ndarray
    v0: np.ndarray
    p: np.ndarray
    c: np.ndarray
    fit_window: tuple = (4.0, 8.0)
    growing: np.ndarray | None = None
    corr_variant: str = "proof"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n0 = np.asarray(self.n0, float)
        self.v0 = np.asarray(self.v0, float)
        self.p = np.asarray(self.p, float).reshape(3, 3)
        self.c = canonical_quadrupole(np.asarray(self.c, float).reshape(3, 3, 3))
        if self.corr_variant not in ("proof", "printed"):
            raise ConfigurationError("corr_variant must be 'proof' or 'printed'")

    @classmethod
    def zero(cls, n0):
        return cls(n0, np.zeros(3), np.zeros((3, 3)), np.zeros((3, 3, 3)))

    def to_dict(self):
        return {
            "n0": self.n0.tolist(),
            "v0": self.v0.tolist(),
            "p": self.p.tolist(),
            "c": self.c.tolist(),
            "growing": None if self.growing is None else np.asarray(self.growing).tolist(),
            "fit_window": [float(v) for v in self.fit_window],
            "corr_variant": self.corr_variant,
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=float)

    @classmethod
    def from_dict(cls, d):
        g = d.get("growing")
        return cls(
            d["n0"],
            d["v0"],
            d["p"],
            d["c"],
            tuple(d.get("fit_window", (4.0, 8.0))),
            None if g is None else np.asarray(g, float),
            d.get("corr_variant", "proof"),
            d.get("diagnostics", {}),
        )

    def rotated(self, R):
        """Expansion of ``R n(R^T x)``."""
        R = np.asarray(R, float)
        return FarFieldExpansion(
            R @ self.n0,
            R @ self.v0,
            np.einsum("jk,kl,il->ji", R, self.p, R),
            np.einsum("ia,kb,lc,abc->ikl", R, R, R, self.c),
            self.fit_window,
            None,
            self.corr_variant,
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def canonical_quadrupole(c):
    """Symmetric-traceless representative of ``c[i, k, l]`` in ``(k, l)``."""
    c = 0.5 * (c + np.swapaxes(c, 1, 2))
    tr = np.trace(c, axis1=1, axis2=2)
    c = c - tr[:, None, None] * np.eye(3)[None] / 3.0
    # re-express in the traceless basis so that the trace is zero exactly
    basis = _traceless_basis()
    coords = np.stack(
        [
            0.5 * (c[:, 0, 0] - c[:, 1, 1]),
            -0.5 * c[:, 2, 2],
            c[:, 0, 1],
            c[:, 0, 2],
            c[:, 1, 2],
        ],
        axis=-1,
    )
    return np.einsum("ib,bkl->ikl", coords, basis)


def evaluate_expansion(e, x, include_corr=True, corr_variant=None):
    """Evaluate the expansion at points ``x`` (shape (..., 3))."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 0):
        raise ConfigurationError("expansion is undefined at the origin")
    r_ = r[..., None]
    d1 = -x / r_**3  # d_j (1/r)
    out = e.n0 + e.v0 / r_
    out = out + np.einsum("...j,ji->...i", d1, e.p)
    # sum_kl c_ikl (3 x_k x_l / r^2 - delta_kl) / r^3; the trace drops out
    quad = 3.0 * np.einsum("ikl,...k,...l->...i", e.c, x, x) / r_**5
    quad = quad - np.trace(e.c, axis1=1, axis2=2) / r_**3
    out = out + quad
    if include_corr:
        variant = corr_variant or e.corr_variant
        a = 0.5 if variant == "proof" else 1.0
        v2 = float(e.v0 @ e.v0)
        vp = e.p @ e.v0  # (v0 . p_j)
        out = out - a * v2 / r_**2 * e.n0 - v2 / (6.0 * r_**3) * e.v0
        out = out - (np.einsum("...j,j->...", d1, vp) / (3.0 * r))[..., None] * e.n0
    if e.growing is not None:
        om = x / r_
        th = np.arccos(np.clip(om[..., 2], -1.0, 1.0))
        ph = np.arctan2(om[..., 1], om[..., 0])
        y = real_sph_harm(2, th, ph)
        powers = np.array([0, 1, 1, 1, 2, 2, 2, 2, 2])
        out = out + np.einsum("...k,ki->...i", y * r_**powers, e.growing)
    return out


# --- shell sampling ----------------------------------------------------------


def shell_radii(grid, window):
    """Fit shells: the radial levels of the outermost ray inside ``window``."""
    r_min, r_max = window
    rho_max = grid.rho_max
    radii = rho_max ** (1.0 - grid.s) * grid.R_out**grid.s
    sel = radii[(radii >= r_min * (1 - 1e-12)) & (radii <= r_max * (1 + 1e-12))]
    return sel


def _dealias_s(vals):
    """Remove the odd-even (Nyquist) mode along ``s``.

    Central differences leave the alternating mode nearly unpenalized and
    boundary forcing excites it.  The seven-point filter
    ``1 + delta^6/64`` annihilates it exactly and is exact on quintics, so
    smooth data is changed at ``O(h^6)`` only.  The first and
    last three levels are left untouched.
    """
    out = vals.copy()
    if vals.shape[0] >= 7:
        taps = np.array([1.0, -6.0, 15.0, 44.0, 15.0, -6.0, 1.0]) / 64.0
        m = vals.shape[0] - 6
        out[3:-3] = sum(t * vals[j : j + m] for j, t in enumerate(taps))
    return out


def shell_samples(n, radii, dealias=True):
    """Values on spheres ``|x| = r_k`` by cubic interpolation in ``s``.

    With ``dealias`` the odd-even mode along ``s`` is filtered out first
    (see :func:`_dealias_s`).  Returns shape ``(len(radii), n_ang, 3)``.
    """
    grid = n.grid
    vals = np.asarray(n.values).reshape(grid.n_s, grid.n_ang, -1)
    if dealias:
        vals = _dealias_s(vals)
    rho = grid.r.reshape(grid.n_s, grid.n_ang)[0]
    log_ratio = np.log(grid.R_out / rho)
    h = 1.0 / (grid.n_s - 1)
    out = np.empty((len(radii), grid.n_ang, vals.shape[-1]))
    cols = np.arange(grid.n_ang)
    for k, rk in enumerate(radii):
        s = np.log(rk / rho) / log_ratio
        t = s / h
        j = np.clip(np.floor(t).astype(int) - 1, 0, grid.n_s - 4)
        u = t - j
        # four-point Lagrange weights at nodes j..j+3 (local coords 0..3)
        w0 = -(u - 1) * (u - 2) * (u - 3) / 6.0
        w1 = u * (u - 2) * (u - 3) / 2.0
        w2 = -u * (u - 1) * (u - 3) / 2.0
        w3 = u * (u - 1) * (u - 2) / 6.0
        acc = 0.0
        for off, w in enumerate((w0, w1, w2, w3)):
            acc = acc + w[:, None] * vals[j + off, cols]
        out[k] = acc
    return out


def image_degree(outer_bc):
    """Lowest degree whose growing ``r^l`` image the outer condition leaves.

    ``dirichlet_n0`` reflects every degree.  ``monopole_robin`` and ``dtn``
    continue the monopole exactly, so only ``l >= 1`` can carry an image.
    """
    return 0 if outer_bc == "dirichlet_n0" else 1


def _columns(l, radii, harmonic_only, truncation_terms, remainder_terms=False):
    if harmonic_only:
        powers = {0: [-1], 1: [-2], 2: [-3]}[l]
    else:
        powers = {0: [-1, -2, -3], 1: [-2, -3], 2: [-3]}[l]
    if remainder_terms:
        powers = powers + [-4]
    if truncation_terms is not False and l >= int(truncation_terms):
        powers = powers + [l]
    return powers, np.stack([radii**p for p in powers], axis=1)


def extract_expansion(
    n,
    fit_window=(4.0, 8.0),
    *,
    truncation_terms=False,
    harmonic_only=False,
    corr_variant="proof",
    remainder_terms=None,
):
    """Fit far-field coefficients of ``n`` on shells inside ``fit_window``.

    Each Cartesian component of ``n - n0`` is analyzed to degree 2 on every
    shell and fitted per ``(l, m)`` by weighted least squares (weights
    ``r_k^2``) against ``{1/r, 1/r^2, 1/r^3}`` (l=0), ``{1/r^2, 1/r^3}``
    (l=1) and ``{1/r^3}`` (l=2); ``harmonic_only`` keeps only the harmonic
    column per degree, ``truncation_terms`` adds the growing ``r^l`` (an
    integer value adds it from that degree up: outer conditions that continue
    the monopole exactly leave no ``l = 0`` image).

    ``remainder_terms`` (default: on unless ``harmonic_only``) adds an
    ``r^-4`` column per degree that is fitted and then discarded.  Without it
    the ``r^-4`` content of a minimizer, e.g. the ``-|u|^2/2`` part along
    ``n0`` forced by ``|n| = 1``, aliases into ``v0``, ``p`` and the
    correction coefficients.
    """
    if remainder_terms is None:
        remainder_terms = not harmonic_only
    grid = n.grid
    r_min, r_max = map(float, fit_window)
    if r_max > grid.R_out / 2 * (1 + 1e-12) or r_min <= 0 or r_min >= r_max:
        raise ConfigurationError(
            f"fit window {fit_window} must satisfy 0 < r_min < r_max <= R_out/2"
        )
    radii = shell_radii(grid, (r_min, r_max))
    if radii.size < 6:
        raise ConfigurationError(
            f"fit window {fit_window} contains {radii.size} shells, need >= 6"
        )
    n0 = np.asarray(n.far_value, float)
    samples = shell_samples(n, radii) - n0
    coeffs = np.stack([sh_analyze(s, grid.angular, 2).a for s in samples])  # (K, 9, 3)
    w = radii  # sqrt of the r^2 weights
    fitted = {}
    conds = {}
    resid = {}
    for l in range(3):
        powers, A = _columns(l, radii, harmonic_only, truncation_terms, remainder_terms)
        Aw = A * w[:, None]
        conds[l] = float(np.linalg.cond(Aw))
        block = coeffs[:, l * l : (l + 1) ** 2, :].reshape(len(radii), -1)
        beta, *_ = np.linalg.lstsq(Aw, block * w[:, None], rcond=None)
        res = block * w[:, None] - Aw @ beta
        resid[l] = float(np.sqrt(np.mean(res**2)))
        fitted[l] = (powers, beta.reshape(len(powers), 2 * l + 1, 3))

    def coef(l, power):
        powers, beta = fitted[l]
        return beta[powers.index(power)]

    v0 = coef(0, -1)[0] / _SQ4PI
    a1 = coef(1, -2)  # (3 m, 3 comps)
    p = np.empty((3, 3))
    for j, m in enumerate(_M_OF_AXIS):
        p[j] = -a1[m + 1] / _SQ4PI3
    a2 = coef(2, -3)  # (5, 3)
    weights = _QMAP_INV @ a2  # (5 basis, 3 comps)
    c = np.einsum("bi,bkl->ikl", weights, _traceless_basis())
    growing = None
    if truncation_terms is not False:
        growing = np.zeros((9, 3))
        for l in range(int(truncation_terms), 3):
            growing[l * l : (l + 1) ** 2] = coef(l, l)

    diagnostics = {
        "shells": radii.tolist(),
        "condition": conds,
        "residual": resid,
        "v0_dot_n0": float(v0 @ n0),
    }
    for l, cnd in conds.items():
        if cnd > _COND_WARN:
            diagnostics.setdefault("warnings", []).append(
                f"ill-conditioned fit for l={l} (cond={cnd:.2e})"
            )
    if not harmonic_only:
        a = 0.5 if corr_variant == "proof" else 1.0
        v2 = float(v0 @ v0)
        mono = coef(0, -2)[0] / _SQ4PI
        pred_mono = -a * v2 * n0
        diagnostics["monopole_corr_fit"] = mono.tolist()
        diagnostics["monopole_corr_rel_mismatch"] = _rel(mono, pred_mono)
        dip = coef(1, -3)  # (3 m, 3 comps)
        vp = p @ v0
        pred_dip = np.zeros((3, 3))
        for j, m in enumerate(_M_OF_AXIS):
            pred_dip[m + 1] = _SQ4PI3 * vp[j] / 3.0 * n0
        diagnostics["dipole_corr_rel_mismatch"] = _rel(dip, pred_dip)
    return FarFieldExpansion(
        n0, v0, p, c, (r_min, r_max), growing, corr_variant, diagnostics
    )


def _rel(a, b):
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return None
    return float(np.linalg.norm(np.asarray(a) - b) / nb)


def remainder_slope(n, e, fit_window=None, include_corr=True):
    """Log-log slope of the shell L2 norm of ``n - expansion`` against ``r``.

    Returns ``(slope, norms, radii)``; ``slope`` is ``None`` when the
    remainder is at roundoff level.
    """
    grid = n.grid
    window = e.fit_window if fit_window is None else fit_window
    radii = shell_radii(grid, window)
    # interpolate the nodal remainder so an exact expansion leaves roundoff only
    nodal = np.asarray(n.values) - evaluate_expansion(e, grid.points, include_corr)
    samples = shell_samples(FieldSamples(grid, nodal, e.n0), radii)
    norms = np.empty(len(radii))
    for k in range(len(radii)):
        diff = samples[k]
        norms[k] = np.sqrt(grid.angular.integrate(np.einsum("ij,ij->i", diff, diff)))
    if norms.max() < _NOISE_FLOOR:
        return None, norms, radii
    slope = np.polyfit(np.log(radii), np.log(np.maximum(norms, 1e-300)), 1)[0]
    return float(slope), norms, radii


class FarFieldFit(BaseEstimator):
    """Estimator form of :func:`extract_expansion`.

    ``fit(field)`` stores ``expansion_``; ``predict(X)`` evaluates it at
    points ``X`` of shape (n_points, 3).
    """

    def __init__(
        self,
        fit_window=(4.0, 8.0),
        truncation_terms=False,
        harmonic_only=False,
        corr_variant="proof",
        include_corr=True,
    ):
        self.fit_window = fit_window
        self.truncation_terms = truncation_terms
        self.harmonic_only = harmonic_only
        self.corr_variant = corr_variant
        self.include_corr = include_corr

    def fit(self, X, y=None):
        self.expansion_ = extract_expansion(
            X,
            self.fit_window,
            truncation_terms=self.truncation_terms,
            harmonic_only=self.harmonic_only,
            corr_variant=self.corr_variant,
        )
        return self

    def predict(self, X):
        include = self.include_corr and not self.harmonic_only
        return evaluate_expansion(self.expansion_, X, include)

    def remainder_slope(self, X):
        return remainder_slope(
            X, self.expansion_, include_corr=self.include_corr and not self.harmonic_only
        )[0]
