from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .utils import is_number, load_yaml


# Allowed keys per section and their value kinds. Numeric keys carry their unit.
SCHEMA: dict[str, dict[str, str]] = {
    "tune": {"n": "int", "omega_cl_rad_s": "float", "k_eso": "float", "b0": "float"},
    "equiv_check": {
        "n": "int",
        "omega_cl_rad_s": "float",
        "k_eso": "float",
        "b0": "float",
        "tf_s": "float",
        "perturb_kp_frac": "float",
        "omega_min_rad_s": "float",
        "omega_max_rad_s": "float",
        "n_points": "int",
        "tolerance": "float",
    },
    "ms": {
        "order": "int",
        "structure": "str",
        "kp": "float",
        "ki": "float",
        "kd": "float",
        "tf_s": "float",
        "omega_cl_rad_s": "float",
        "k_eso": "float",
        "b0": "float",
        "omega_min_rad_s": "float",
        "omega_max_rad_s": "float",
        "n_points": "int",
        "csv": "bool",
    },
    "bode": {
        "order": "int",
        "betas": "floats",
        "omega_min_rad_s": "float",
        "omega_max_rad_s": "float",
        "n_points": "int",
    },
    "simulate": {
        "scenario": "str",
        "variant": "str",
        "tf_s": "float",
        "tr_s": "float",
        "t_end_s": "float",
        "noise": "bool",
        "fixed_point_bits": "int",
        "substeps": "int",
        "order": "int",
        "structure": "str",
        "dof": "int",
        "beta": "float",
        "amplitude": "float",
    },
    "crib": {
        "n": "int",
        "omega_cl_rad_s": "float",
        "k_eso": "float",
        "b0": "float",
        "beta": "float",
        "tf_s": "float",
        "tr_s": "float",
    },
}

_N1_GAINS = {"n": 1, "omega_cl_rad_s": 2.7, "k_eso": 15.0, "b0": 1.0}
_N2_GAINS = {"n": 2, "omega_cl_rad_s": 4.0, "k_eso": 7.0, "b0": 1.0}

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "paper-n1": {
        "tune": dict(_N1_GAINS),
        "equiv_check": dict(_N1_GAINS),
        "crib": {**_N1_GAINS, "beta": 0.7, "tr_s": 0.001},
        "ms": {"order": 1, "structure": "eadrc", **{k: v for k, v in _N1_GAINS.items() if k != "n"}},
        "bode": {"order": 1},
        "simulate": {"scenario": "transient", "order": 1, "structure": "eadrc", "dof": 1},
    },
    "paper-n2": {
        "tune": dict(_N2_GAINS),
        "equiv_check": {**_N2_GAINS, "tf_s": 0.05},
        "crib": {**_N2_GAINS, "beta": 0.75, "tf_s": 0.05, "tr_s": 0.001},
        "ms": {"order": 2, "structure": "eadrc", **{k: v for k, v in _N2_GAINS.items() if k != "n"}},
        "bode": {"order": 2},
        "simulate": {"scenario": "transient", "order": 2, "structure": "eadrc", "dof": 1},
    },
    "paper-n1-pi": {"ms": {"order": 1, "structure": "pi", "kp": 1.0, "ki": 2.5}},
    "paper-n1-eadrc": {"ms": {"order": 1, "structure": "eadrc", "omega_cl_rad_s": 2.7, "k_eso": 15.0, "b0": 1.0}},
    "paper-n2-pid": {"ms": {"order": 2, "structure": "pid", "kp": 30.0, "ki": 27.0, "kd": 5.0, "tf_s": 0.05}},
    "paper-n2-eadrc": {"ms": {"order": 2, "structure": "eadrc", "omega_cl_rad_s": 4.0, "k_eso": 7.0, "b0": 1.0}},
    "open-loop": {"ms": {"order": 1, "structure": "none"}},
    "transient-n1": {
        "simulate": {"scenario": "transient", "order": 1, "structure": "eadrc", "dof": 2, "beta": 0.7},
    },
    "transient-n2": {
        "simulate": {"scenario": "transient", "order": 2, "structure": "eadrc", "dof": 2, "beta": 0.75},
    },
    "scenario-1": {
        "tune": {"n": 2, "omega_cl_rad_s": 45.0, "k_eso": 45.0, "b0": 2.0e6},
        "crib": {"n": 2, "omega_cl_rad_s": 45.0, "k_eso": 45.0, "b0": 2.0e6, "tf_s": 0.005},
        "simulate": {"scenario": "scenario-1", "variant": "eadrc", "tf_s": 0.005, "t_end_s": 6.0},
    },
    "scenario-2": {
        "tune": {"n": 2, "omega_cl_rad_s": 50.0, "k_eso": 12.0, "b0": 0.105 / (8e-5 * 4.5e-3)},
        "crib": {"n": 2, "omega_cl_rad_s": 50.0, "k_eso": 12.0, "b0": 0.105 / (8e-5 * 4.5e-3), "beta": 0.6, "tr_s": 0.03},
        "simulate": {"scenario": "scenario-2", "variant": "eadrc-2dof", "tr_s": 0.03, "t_end_s": 4.0},
    },
}


@dataclass(frozen=True)
class RunConfig:
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    sources: tuple[str, ...] = ()

    def section(self, name: str) -> dict[str, Any]:
        if name not in SCHEMA:
            raise ConfigError(f"Unknown config section: {name!r}")
        return dict(self.sections.get(name, {}))


def _coerce(section: str, key: str, value: Any) -> Any:
    kind = SCHEMA[section][key]
    where = f"{section}.{key}"
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if not is_number(value):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if not isinstance(value, (list, tuple)) or not all(is_number(v) for v in value):
        raise ConfigError(f"{where} must be a list of numbers, got {value!r}")
    return [float(v) for v in value]


def validate_sections(data: Mapping[str, Any], source: str) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, body in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section {section!r} (allowed: {sorted(SCHEMA)})")
        if body is None:
            body = {}
        if not isinstance(body, Mapping):
            raise ConfigError(f"{source}: section {section!r} must be a mapping")
        unknown = sorted(set(body) - set(SCHEMA[section]))
        if unknown:
            raise ConfigError(f"{source}: unknown keys in {section!r}: {unknown}")
        out[section] = {key: _coerce(section, key, value) for key, value in body.items()}
    return out


def _merge(base: dict[str, dict[str, Any]], layer: Mapping[str, Mapping[str, Any]]) -> None:
    for section, body in layer.items():
        base.setdefault(section, {}).update(body)


def load_run_config(
    *,
    preset: str | None = None,
    config_path: Path | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
) -> RunConfig:
    """Preset < config file < overrides (command-line flags)."""
    merged: dict[str, dict[str, Any]] = {}
    sources: list[str] = []
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset {preset!r} (available: {sorted(PRESETS)})")
        _merge(merged, copy.deepcopy(PRESETS[preset]))
        sources.append(f"preset:{preset}")
    if config_path is not None:
        if not config_path.exists():
            raise ConfigError(f"Config file not found: {config_path}")
        try:
            data = load_yaml(config_path)
        except yaml.YAMLError as exc:
            raise ConfigError(str(exc)) from exc
        _merge(merged, validate_sections(data, str(config_path)))
        sources.append(f"file:{config_path}")
    if overrides:
        cleaned = {s: {k: v for k, v in body.items() if v is not None} for s, body in overrides.items()}
        _merge(merged, validate_sections({s: b for s, b in cleaned.items() if b}, "flags"))
        sources.append("flags")
    return RunConfig(sections=merged, sources=tuple(sources))


def require(section: Mapping[str, Any], key: str, name: str) -> Any:
    if key not in section:
        raise ConfigError(f"{name}: missing required value {key!r} (use --preset, --config or a flag)")
    return section[key]
