"""Run configuration: ``key = value`` lines grouped in ``[section]`` blocks.

Every key is declared in :data:`SCHEMA`; unknown keys, type mismatches and
range violations raise :class:`ConfigurationError` naming ``section.key``.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._errors import ConfigurationError

__all__ = ["SCHEMA", "EXPERIMENTS", "RunConfig", "parse_config", "load_config"]

EXPERIMENTS = (
    "solve",
    "extract",
    "eval-expansion",
    "sweep",
    "torque-check",
    "poisson-check",
    "report",
)


def _vec3(text):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    v = np.array([float(p) for p in parts])
    if not np.linalg.norm(v) > 0:
        raise ValueError("vector must be non-zero")
    return tuple(v.tolist())


def _pair(text):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return tuple(float(p) for p in parts)


def _points(text):
    rows = [r for r in text.split(";") if r.strip()]
    if not rows:
        raise ValueError("expected at least one point 'x,y,z'")
    out = []
    for r in rows:
        p = [float(v) for v in r.split(",") if v.strip()]
        if len(p) != 3:
            raise ValueError("points are 'x,y,z' separated by ';'")
        out.append(tuple(p))
    return tuple(out)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _enum(*choices):
    def parse(text):
        t = text.strip()
        if t not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return t

    return parse


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# section -> key -> (parser, default, range check or None)
SCHEMA = {
    "experiment": {
        "name": (_enum(*EXPERIMENTS), "solve", None),
    },
    "particle": {
        "kind": (_enum("sphere", "spheroid"), "sphere", None),
        "radius": (float, 1.0, _positive),
        "a": (float, 1.0, _positive),
        "b": (float, 1.5, _positive),
        "axis": (_vec3, (0.0, 0.0, 1.0), None),
    },
    "anchoring": {
        "kind": (_enum("weak", "dirichlet"), "weak", None),
        "W": (float, 0.1, _nonneg),
        "pattern": (_enum("homeotropic", "uniform", "tilted"), "homeotropic", None),
        "m": (_vec3, (0.0, 0.0, 1.0), None),
        "alpha": (float, 0.0, None),
        "tilt_axis": (_vec3, (0.0, 0.0, 1.0), None),
    },
    "grid": {
        "n_s": (int, 32, lambda v: v >= 8),
        "n_theta": (int, 32, lambda v: v >= 2),
        "n_phi": (int, 64, lambda v: v >= 4 and v % 2 == 0),
        "R_out": (float, None, _positive),
    },
    "solve": {
        "outer_bc": (_enum("dirichlet_n0", "monopole_robin", "dtn"), "dirichlet_n0", None),
        "init": (_enum("constant_n0"), "constant_n0", None),
        "max_iters": (int, 2000, lambda v: v >= 1),
        "grad_tol": (float, None, _positive),
        "step0": (float, 1.0, _positive),
        "method": (_enum("cg", "gradient"), "cg", None),
        "seed": (int, 0, None),
        "n0": (_vec3, (0.0, 0.0, 1.0), None),
    },
    "expansion": {
        "fit_window": (_pair, None, lambda v: 0 < v[0] < v[1]),
        "truncation_terms": (_bool, True, None),
        "harmonic_only": (_bool, False, None),
        "corr_variant": (_enum("proof", "printed"), "proof", None),
        "input": (str, None, None),
        "points": (_points, None, None),
    },
    "sweep": {
        "sampling": (_enum("fibonacci", "great_circle", "local_star"), "fibonacci", None),
        "N": (int, 12, lambda v: v >= 1),
        "axis": (_vec3, (1.0, 0.0, 0.0), None),
        "n0": (_vec3, (0.0, 0.0, 1.0), None),
        "h": (float, 0.02, lambda v: 1e-3 <= v <= 1e-1),
        "richardson": (_bool, False, None),
    },
    "torque": {
        "n0": (_vec3, (0.7071067811865476, 0.0, 0.7071067811865476), None),
        "h": (float, 0.02, lambda v: 1e-3 <= v <= 1e-1),
        "richardson": (_bool, False, None),
        "threshold": (float, 0.10, _positive),
    },
    "poisson": {
        "gamma": (float, 2.5, None),
        "l": (int, 0, _nonneg),
        "d": (int, 3, lambda v: v >= 3),
        "R_max": (float, 100.0, lambda v: v > 1),
        "n_r": (int, 2001, lambda v: v >= 5 and v % 2 == 1),
        "tail_exponent": (float, None, None),
        "inner_exponent": (float, None, None),
        "tolerance": (float, 1e-8, _positive),
    },
    "output": {
        "dir": (str, "output", None),
        "strict": (_bool, False, None),
        "workers": (int, 1, lambda v: v >= 1),
    },
}


@dataclass
class RunConfig:
    """Validated configuration with every default filled in."""

    values: dict
    text: str = ""
    sources: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def experiment(self):
        return self.values["experiment"]["name"]

    @property
    def output_dir(self):
        return self.values["output"]["dir"]

    @property
    def strict(self):
        return self.values["output"]["strict"]

    def canonical(self):
        """Stable text form of the resolved values (output settings excluded)."""
        lines = []
        for sec in sorted(self.values):
            if sec == "output":
                continue
            for key in sorted(self.values[sec]):
                lines.append(f"{sec}.{key}={_canon(self.values[sec][key])}")
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def to_dict(self):
        return {s: dict(v) for s, v in self.values.items()}


def _canon(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (tuple, list)):
        return "(" + ",".join(_canon(x) for x in v) + ")"
    return str(v)


def parse_config(text):
    """Parse and validate a configuration document."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keys are case sensitive (``W``, ``R_out``)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from exc
    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigurationError(f"unknown section '{sec}'")
        for key, raw in cp.items(sec):
            path = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                raise ConfigurationError(f"unknown key '{path}'")
            parser, _, check = SCHEMA[sec][key]
            try:
                val = parser(raw.strip())
            except ValueError as exc:
                raise ConfigurationError(f"type mismatch for '{path}': {exc}") from exc
            if check is not None and not check(val):
                raise ConfigurationError(f"value out of range for '{path}': {raw.strip()}")
            values[sec][key] = val
    _cross_checks(values)
    return RunConfig(values, text)


def _cross_checks(values):
    p = values["poisson"]
    if values["experiment"]["name"] == "poisson-check":
        if p["gamma"] <= p["d"] - 2 or abs(p["gamma"] - round(p["gamma"])) < 1e-6:
            raise ConfigurationError(
                "value out of range for 'poisson.gamma': must exceed d-2 and not be an integer"
            )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
