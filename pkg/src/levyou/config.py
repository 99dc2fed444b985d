"""Model configuration documents: parsing, validation and bundled examples.

A configuration is a JSON object with a ``schema_version`` field, the
dimension, the drift matrix, the Levy triplet and an optional ``defaults``
block for experiment settings.  Errors name the offending field path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .levy import Atoms, GaussianDensity, LevyTriplet, Stable, SumMeasure, UniformDensity, ZeroMeasure
from .ou import OUModel

__all__ = ["DEFAULTS", "ModelConfig", "load_config", "parse_config", "bundled", "load_schema"]

SCHEMA_VERSION = 1

# every experiment default in one place; the README documents the same table
DEFAULTS = {
    "epsilon": None,  # None: sweep (0.5, 1, 2) for infinite nu, 1 otherwise
    "rho": 0.5,
    "alpha": None,  # None: min(1, stable index / 2) for stable parts, else 1
    "x": 1.0,
    "t_grid": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    "t_grid_algebraic": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
    "n": 10_000,
    "seed": 0,
    "workers": 1,
    "tail_tol": 1e-6,
    "oracle_tail_tol": 1e-4,
    "xi_max": 1e6,
    "small_jump_epsilon": 0.01,
}


def load_schema(name="config"):
    text = resources.files("levyou").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


@dataclass
class ModelConfig:
    model: OUModel
    defaults: dict
    name: str = ""
    raw: dict = field(default_factory=dict)

    def point(self, value):
        """Broadcast a scalar or list to a point of the model's dimension."""
        v = np.asarray(value, dtype=float)
        if v.size == 1:
            return np.full(self.model.dim, float(v.ravel()[0]))
        if v.size != self.model.dim:
            raise ConfigurationError(f"expected {self.model.dim} components", "x")
        return v.reshape(self.model.dim)


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def _point(value, d, where):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1 and d > 1:
        v = np.full(d, float(v[0]))
    if v.shape != (d,):
        raise ConfigurationError(f"expected {d} components", where)
    return v


def _matrix(value, d, where):
    m = np.asarray(value, dtype=float)
    if m.shape != (d, d):
        raise ConfigurationError(f"expected a {d}x{d} matrix", where)
    return m


def _measure(block, d, where):
    kind = block["type"]
    try:
        if kind == "zero":
            return ZeroMeasure(d)
        if kind == "atoms":
            locs = np.array([_point(p, d, f"{where}.locations.{i}") for i, p in enumerate(block["locations"])])
            if len(locs) != len(block["masses"]):
                raise ConfigurationError("locations and masses differ in length", f"{where}.masses")
            if np.any(np.linalg.norm(locs, axis=1) == 0):
                raise ConfigurationError("an atom at the origin is not a jump", f"{where}.locations")
            return Atoms(locs, np.asarray(block["masses"], dtype=float))
        if kind == "stable":
            if "kappa" in block:
                return Stable.from_symbol_scale(block["alpha"], block["kappa"], d)
            return Stable(alpha=block["alpha"], scale=block["scale"], dim=d)
        if kind == "gaussian":
            cov = block.get("cov", 1.0)
            cov = float(cov) * np.eye(d) if np.isscalar(cov) else _matrix(cov, d, f"{where}.cov")
            mean = _point(block.get("mean", 0.0), d, f"{where}.mean")
            return GaussianDensity(block.get("mass", 1.0), mean, cov)
        if kind == "uniform":
            return UniformDensity(_point(block["low"], d, f"{where}.low"),
                                  _point(block["high"], d, f"{where}.high"), block.get("mass", 1.0))
        if kind == "sum":
            return SumMeasure(tuple(_measure(p, d, f"{where}.parts.{i}")
                                    for i, p in enumerate(block["parts"])))
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc), where) from exc
    raise ConfigurationError(f"unknown measure type {kind!r}", f"{where}.type")


def parse_config(doc):
    """Validate a decoded document and build the model."""
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a JSON object", "<root>")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema version (expected {SCHEMA_VERSION})",
                                 "schema_version")
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigurationError(e.message, _path(e))
    d = int(doc["dimension"])
    A = _matrix(doc["A"], d, "A")
    Q = _matrix(doc["Q"], d, "Q") if "Q" in doc else np.zeros((d, d))
    b = _point(doc["b"], d, "b") if "b" in doc else np.zeros(d)
    nu = _measure(doc["levy_measure"], d, "levy_measure")
    try:
        triplet = LevyTriplet(Q, b, nu)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc), "Q") from exc
    try:
        model = OUModel(A, triplet)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc), "A") from exc
    defaults = dict(DEFAULTS)
    defaults.update(doc.get("defaults", {}))
    return ModelConfig(model, defaults, doc.get("name", ""), doc)


def load_config(path):
    """Read and parse a configuration file; JSON syntax errors carry line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
    return loads(text)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                                 "<document>") from exc
    return parse_config(doc)


def bundled(name):
    """A bundled example configuration by stem (e.g. ``stable_cauchy``)."""
    res = resources.files("levyou").joinpath(f"data/{name}.json")
    if not res.is_file():
        raise ConfigurationError(f"no bundled configuration named {name!r}", "name")
    return loads(res.read_text())


def bundled_names():
    return sorted(p.name[:-5] for p in resources.files("levyou").joinpath("data").iterdir()
                  if p.name.endswith(".json"))
