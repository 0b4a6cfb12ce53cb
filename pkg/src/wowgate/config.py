"""Scenario-file schema and expansion into ``ScenarioConfig`` objects.

A scenario file is JSON with three top-level keys::

    {
      "defaults":  {... ScenarioConfig fields shared by every scenario ...},
      "methods":   [{"name": "SAM", "policy": "sam", "params": {"delta": 0.15},
                     "gated": false}, ...],
      "scenarios": [{"id": "1.5", "theta": 0.3, "theta_t": 0.4, ...}, ...]
    }

A scenario may carry its own ``methods`` list, which replaces the top-level one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ConfigError, DomainError
from .policy import policy_from_name
from .sim import ScenarioConfig

__all__ = ["CONFIG_SCHEMA", "PlannedRun", "load_config", "expand_config"]

_SCENARIO_FIELDS = {
    "endpoint": {"enum": ["binary", "continuous"]},
    "theta": {"type": "number"},
    "theta_t": {"type": "number"},
    "theta_h": {"type": "number"},
    "n": {"type": "integer", "minimum": 1},
    "n_t": {"type": "integer", "minimum": 1},
    "n_h": {"type": "integer", "minimum": 1},
    "sigma": {"type": "number", "exclusiveMinimum": 0},
    "sigma0": {"type": "number", "exclusiveMinimum": 0},
    "theta0": {"type": "number"},
    "prior_a": {"type": "number", "exclusiveMinimum": 0},
    "prior_b": {"type": "number", "exclusiveMinimum": 0},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "reps": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "plug_in_sigma": {"type": "boolean"},
}

_METHOD = {
    "type": "object",
    "required": ["name", "policy"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "policy": {"enum": ["np", "fixed", "mix", "mix50", "rmap", "sam", "ebrmap"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w": {"type": "number", "minimum": 0, "maximum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tail": {"enum": ["lower", "upper", "two_sided"]},
                "grid_step": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "gated": {"type": "boolean"},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "wowgate scenario file",
    "type": "object",
    "required": ["scenarios"],
    "additionalProperties": False,
    "properties": {
        "defaults": {
            "type": "object",
            "additionalProperties": False,
            "properties": _SCENARIO_FIELDS,
        },
        "methods": {"type": "array", "minItems": 1, "items": _METHOD},
        "scenarios": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "methods": {"type": "array", "minItems": 1, "items": _METHOD},
                    **_SCENARIO_FIELDS,
                },
            },
        },
    },
}

_REQUIRED = ("endpoint", "theta", "theta_t", "theta_h", "n", "n_t", "n_h")


@dataclass(frozen=True)
class PlannedRun:
    scenario_id: str
    scenario_index: int
    config: ScenarioConfig


def _json_path(path) -> str:
    out = "$"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def load_config(path: str | Path) -> dict:
    """Read and schema-validate a scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          str(path)) from exc
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _json_path(err.absolute_path))


def expand_config(doc: dict, seed: int | None = None, reps: int | None = None) -> list[PlannedRun]:
    """One ``PlannedRun`` per (scenario, method).

    Every method on a scenario shares that scenario's seed so comparisons
    between methods are paired.  ``seed`` and ``reps`` override the file.
    """
    from .sim import derive_seed

    defaults = dict(doc.get("defaults", {}))
    top_methods = doc.get("methods")
    base_seed = seed if seed is not None else int(defaults.pop("seed", 0))
    defaults.pop("seed", None)
    runs = []
    for i, scen in enumerate(doc["scenarios"]):
        where = f"$.scenarios[{i}]"
        fields = {**defaults, **{k: v for k, v in scen.items() if k not in ("id", "methods")}}
        missing = [k for k in _REQUIRED if k not in fields]
        if missing:
            raise ConfigError(f"missing required field(s) {', '.join(missing)}", where)
        methods = scen.get("methods", top_methods)
        if not methods:
            raise ConfigError("no methods given (set top-level or per-scenario 'methods')", where)
        if "seed" in scen:
            scen_seed = int(fields.pop("seed"))
        else:
            scen_seed = derive_seed(base_seed, i)
        if reps is not None:
            fields["reps"] = reps
        sid = str(scen.get("id", i + 1))
        for j, m in enumerate(methods):
            try:
                policy = policy_from_name(m["policy"], **m.get("params", {}))
            except DomainError as exc:
                m_where = f"{where}.methods[{j}]" if "methods" in scen else f"$.methods[{j}]"
                raise ConfigError(str(exc), m_where) from exc
            try:
                cfg = ScenarioConfig(policy=policy, gated=bool(m.get("gated", False)),
                                     method=m["name"], seed=scen_seed, **fields)
            except DomainError as exc:
                raise ConfigError(str(exc), where) from exc
            runs.append(PlannedRun(sid, i, cfg))
    return runs
