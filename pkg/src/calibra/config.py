"""JSON run configuration: schema validation and scenario construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from calibra.expr import ExpressionError
from calibra.scenarios import Scenario, UnknownScenarioError, inline_scenario, load_scenario

_EXPR = {"type": "string", "maxLength": 65536}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": ["string", "number"]}}}

INLINE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["total_vars", "total_metric", "base_vars", "base_metric", "projection",
                 "fibre_vars", "fibre_param", "fibre_lower", "fibre_upper", "base_lower", "base_upper"],
    "properties": {
        "name": {"type": "string"},
        "total_vars": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "total_metric": _MATRIX,
        "total_lower": {"type": "array", "items": {"type": "number"}},
        "total_upper": {"type": "array", "items": {"type": "number"}},
        "base_vars": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "base_metric": _MATRIX,
        "projection": {"type": "array", "items": _EXPR},
        "fibre_vars": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "fibre_param": {"type": "array", "items": _EXPR},
        "fibre_lower": {"type": "array", "items": {"type": "number"}},
        "fibre_upper": {"type": "array", "items": {"type": "number"}},
        "base_lower": {"type": "array", "items": {"type": "number"}},
        "base_upper": {"type": "array", "items": {"type": "number"}},
        "base_point": {"type": "array", "items": {"type": "number"}},
        "fields": {"type": "object"},
        "checks": {"type": "array", "items": {"type": "string"}},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {"oneOf": [{"type": "string"}, INLINE_SCHEMA]},
        "params": {"type": "object"},
        "fields": {"type": "object"},
        "checks": {"type": "array", "items": {"oneOf": [
            {"type": "string"},
            {"type": "object", "additionalProperties": False, "required": ["name"],
             "properties": {"name": {"type": "string"}, "tolerance": {"type": "number", "minimum": 0}}},
        ]}},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "tolerance": {"type": "number", "minimum": 0},
        "grid": {"type": "integer", "minimum": 8},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: Scenario
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    tolerance: float | None = None
    grid: int | None = None
    seed: int = 0


def parse_config(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    try:
        if isinstance(doc["scenario"], str):
            sc = load_scenario(doc["scenario"], doc.get("params"), doc.get("fields"))
        else:
            sc = inline_scenario(doc["scenario"])
            sc.fields.update(doc.get("fields", {}))
    except UnknownScenarioError as exc:
        raise ConfigError(str(exc.args[0])) from None
    except (ExpressionError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build scenario: {exc}") from None
    checks, tolerances = [], dict(doc.get("tolerances", {}))
    for item in doc.get("checks", []):
        if isinstance(item, str):
            checks.append(item)
        else:
            checks.append(item["name"])
            if "tolerance" in item:
                tolerances[item["name"]] = item["tolerance"]
    return RunConfig(sc, checks, tolerances, doc.get("tolerance"), doc.get("grid"), doc.get("seed", 0))


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    return parse_config(doc)
