"""YAML run configuration.

Top-level keys::

    dimension: 2              # 2 or 3
    epsilon: 0.25             # wedge half-width of the data
    p_exponent: 2.0           # 3D amplitude law exponent p
    amplitude: null           # explicit amplitude, overrides the amplitude law
    transition_order: 1       # smoothstep order used by the data profiles
    nu: 1.0
    lambda: 1.0
    grid: {L: null, N: null}  # null -> default_grid(dimension, epsilon)
    perturbation: {h3_norm: 0.0, seed: 0, kmax: 2.0}
    simulate: {mode: perturbation, cfl: 0.4, t_end: 20.0, stride: 5,
               dt: null, dt_max: 0.05, guards: {blowup_factor: 1.0e6},
               snapshot_times: []}
    condition: {C: 1.0, delta: 1.0, c_abs: 0.5, C_grid: [1, 2, 4, 8]}
    quadrature: {mode: quadrature, tol: 1.0e-10, t_max: null}
    verify: {identity_t: 1.0, identity_dts: [0.004, 0.002, 0.001],
             commutator_pairs: 100, commutator_kmax: 4.0}
    sweep: {epsilon: [...], nu: [...], lambda: [...], simulate: false, workers: 1}

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .fields import GridSpec
from .initial_data import DataParams2D, DataParams3D, default_grid


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, e.g. 1e-3."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."),
)


def parse_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


DEFAULTS: dict[str, Any] = {
    "dimension": 2,
    "epsilon": 0.25,
    "p_exponent": 2.0,
    "amplitude": None,
    "transition_order": 1,
    "nu": 1.0,
    "lambda": 1.0,
    "grid": {"L": None, "N": None},
    "perturbation": {"h3_norm": 0.0, "seed": 0, "kmax": 2.0},
    "simulate": {
        "mode": "perturbation",
        "cfl": 0.4,
        "t_end": 20.0,
        "stride": 5,
        "dt": None,
        "dt_max": 0.05,
        "guards": {"blowup_factor": 1.0e6},
        "snapshot_times": [],
    },
    "condition": {"C": 1.0, "delta": 1.0, "c_abs": 0.5, "C_grid": [1.0, 2.0, 4.0, 8.0]},
    "quadrature": {"mode": "quadrature", "tol": 1.0e-10, "t_max": None},
    "verify": {
        "identity_t": 1.0,
        "identity_dts": [0.004, 0.002, 0.001],
        "commutator_pairs": 100,
        "commutator_kmax": 4.0,
    },
    "sweep": {"epsilon": None, "nu": None, "lambda": None, "simulate": False, "workers": 1},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


@dataclass
class Config:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def d(self) -> int:
        return int(self.raw["dimension"])

    @property
    def epsilon(self) -> float:
        return float(self.raw["epsilon"])

    @property
    def nu(self) -> float:
        return float(self.raw["nu"])

    @property
    def lam(self) -> float:
        return float(self.raw["lambda"])

    def data_params(self):
        amp = self.raw["amplitude"]
        order = int(self.raw["transition_order"])
        if self.d == 2:
            return DataParams2D(self.epsilon, amp, order)
        return DataParams3D(self.epsilon, float(self.raw["p_exponent"]), amp, order)

    def grid(self) -> GridSpec:
        g = self.raw["grid"]
        if g["L"] is None and g["N"] is None:
            return default_grid(self.d, self.epsilon)
        if g["L"] is None or g["N"] is None:
            raise ConfigError("grid.L and grid.N must be given together")
        return GridSpec(self.d, g["L"], g["N"])

    def with_overrides(self, **top) -> "Config":
        raw = copy.deepcopy(self.raw)
        raw.update(top)
        return Config(raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)


def _number(raw: dict, dotted: str, allow_none: bool = False):
    node = raw
    for part in dotted.split("."):
        node = node[part]
    if node is None and allow_none:
        return None
    if isinstance(node, bool) or not isinstance(node, (int, float)) or node != node:
        raise ConfigError(f"{dotted} must be a number, got {node!r}")
    return node


_NUMERIC_KEYS = (
    "p_exponent", "transition_order", "simulate.cfl", "simulate.t_end", "simulate.stride",
    "simulate.dt_max", "simulate.guards.blowup_factor", "condition.C", "condition.delta",
    "condition.c_abs", "quadrature.tol", "perturbation.h3_norm", "perturbation.seed",
    "perturbation.kmax", "verify.identity_t", "verify.commutator_pairs", "verify.commutator_kmax",
    "sweep.workers",
)
_OPTIONAL_NUMERIC_KEYS = ("amplitude", "simulate.dt", "quadrature.t_max")


def _validate(raw: dict) -> None:
    for key in _NUMERIC_KEYS:
        _number(raw, key)
    for key in _OPTIONAL_NUMERIC_KEYS:
        _number(raw, key, allow_none=True)
    if raw["dimension"] not in (2, 3):
        raise ConfigError("dimension must be 2 or 3")
    for key in ("epsilon", "nu", "lambda"):
        value = raw[key]
        if not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"{key} must be a positive number")
    sim = raw["simulate"]
    if sim["mode"] not in ("full", "perturbation"):
        raise ConfigError("simulate.mode must be 'full' or 'perturbation'")
    if not 0 < sim["cfl"] < 1:
        raise ConfigError("simulate.cfl must lie in (0, 1)")
    if not sim["t_end"] > 0:
        raise ConfigError("simulate.t_end must be positive")
    if int(sim["stride"]) < 1:
        raise ConfigError("simulate.stride must be >= 1")
    cond = raw["condition"]
    if not (cond["C"] > 0 and cond["delta"] > 0 and cond["c_abs"] > 0):
        raise ConfigError("condition.C, condition.delta and condition.c_abs must be positive")
    if raw["quadrature"]["mode"] not in ("quadrature", "bound"):
        raise ConfigError("quadrature.mode must be 'quadrature' or 'bound'")
    if raw["perturbation"]["h3_norm"] < 0:
        raise ConfigError("perturbation.h3_norm must be non-negative")
    for key in ("epsilon", "nu", "lambda"):
        values = raw["sweep"][key]
        if values is not None and (not isinstance(values, list) or not values):
            raise ConfigError(f"sweep.{key} must be a non-empty list")
    if int(raw["sweep"]["workers"]) < 1:
        raise ConfigError("sweep.workers must be >= 1")


def make_config(overrides: dict | None = None) -> Config:
    raw = _merge(DEFAULTS, overrides or {})
    _validate(raw)
    cfg = Config(raw)
    try:
        cfg.data_params()
        cfg.grid()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return make_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = parse_yaml(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    return make_config(data)
