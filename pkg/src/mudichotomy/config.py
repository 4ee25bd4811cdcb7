"""Experiment configuration: schema, central defaults table, normalization.

A config names a ``command``, the ``inputs`` it needs (systems, rates, certificates as
JSON declarations) and optional ``numerics``/``output`` overrides. After
normalization every numeric setting in ``DEFAULTS`` is present explicitly.
"""
from __future__ import annotations

import copy
import json
import re
from pathlib import Path

import jsonschema

from .errors import ConfigError

COMMANDS = (
    "rates-compare", "rates-classify", "rates-limit-probe", "system-evolve",
    "dichotomy-verify", "dichotomy-fit", "dichotomy-propagate", "growth-verify",
    "spectrum-estimate", "hull-probe", "hull-classify", "paper-examples",
)

# Every tolerance, window and schedule used at run time; written back into reports.
DEFAULTS = {
    "comparison_window": {"base": 4.0, "stages": 34, "factor": 2.0},
    "weak_step": 0.01,                # log-grid step for weak comparisons
    "strong_step": 0.05,              # log-grid step for strong comparisons
    "strong_threshold": 0.05,         # ratio below which mu << sigma
    "plateau_tol": 1e-3,              # last-doubling change counted as a plateau
    "divergence_threshold": 50.0,     # log-scale level counted as divergence
    "pair_grid": {"T": 40.0, "n_anchor": 200, "n_sep": 200},
    "closed_form_tol": 1e-9,
    "numeric_tol": 1e-5,
    "evolution": {"method": "closed", "step": 1e-3},
    "spectrum_window": {"base": 4.0, "stages": 39, "factor": 2.0},
    "spectrum_step": 0.05,
    "subbundle_horizon": 50.0,
    "hull": {"compact_radius": 10.0, "cauchy_tol": 1e-6, "divergence_level": 1e3,
             "schedule_n_min": 3, "schedule_n_max": 24, "uli_window": 1.0,
             "bounded_horizon": 50.0},
    "seed": 0,
    "window_scale": 1.0,
}

_NUM = {"type": "number"}
_EXT = {"oneOf": [{"type": "number"}, {"enum": ["+inf", "-inf"]}]}
_RATE = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["exponential", "polynomial", "superexponential", "subexponential",
                          "translated", "power"]},
        "parameters": {"type": "object"},
    },
}
_SYSTEM = {
    "type": "object",
    "anyOf": [{"required": ["name"]}, {"required": ["kind", "base"]}],
    "properties": {"name": {"type": "string"}, "parameters": {"type": "object"},
                   "kind": {"enum": ["catalog", "translated", "shifted"]}},
}
_CERT = {
    "type": "object",
    "required": ["projector_kind"],
    "properties": {
        "projector_kind": {"enum": ["zero", "identity", "constant"]},
        "projector": {"type": "object"},
        "K": {"type": "number", "minimum": 1}, "log_K": {"type": "number", "minimum": 0},
        "alpha": {"type": ["number", "null"]}, "beta": {"type": ["number", "null"]},
        "theta": {"type": ["number", "null"]}, "nu": {"type": ["number", "null"]},
        "rate": _RATE,
    },
    "anyOf": [{"required": ["K"]}, {"required": ["log_K"]}],
}
_GROWTH = {
    "type": "object",
    "required": ["a"],
    "properties": {"L": {"type": "number", "minimum": 1}, "log_L": {"type": "number", "minimum": 0},
                   "a": {"type": "number", "exclusiveMinimum": 0},
                   "epsilon": {"type": "number", "minimum": 0}, "rate": _RATE},
    "anyOf": [{"required": ["L"]}, {"required": ["log_L"]}],
}

_REQUIRED = {
    "rates-compare": ["rate", "sigma"],
    "rates-classify": ["rate"],
    "rates-limit-probe": ["rate", "t"],
    "system-evolve": ["system", "t", "s"],
    "dichotomy-verify": ["system", "rate", "certificate"],
    "dichotomy-fit": ["system", "rate", "projector_kind"],
    "dichotomy-propagate": ["rate", "certificate", "taus"],
    "growth-verify": ["system", "rate", "growth_certificate"],
    "spectrum-estimate": ["system", "rate"],
    "hull-probe": ["system"],
    "hull-classify": ["system"],
    "paper-examples": [],
}

SCHEMA = {
    "type": "object",
    "required": ["command"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "inputs": {
            "type": "object",
            "properties": {
                "system": _SYSTEM, "rate": _RATE, "sigma": _RATE, "query_rate": _RATE,
                "certificate": _CERT, "growth_certificate": _GROWTH,
                "t": _NUM, "s": _NUM, "tau": _NUM, "gamma": _EXT,
                "taus": {"type": "array", "items": _NUM, "minItems": 1},
                "gammas": {"type": "array", "items": _EXT},
                "mode": {"enum": ["weak", "strong", "both"]},
                "method": {"enum": ["closed", "quadrature", "rk4"]},
                "projector_kind": {"enum": ["zero", "identity", "constant"]},
                "projector_matrix": {"type": "array"},
                "alpha": _NUM, "beta": _NUM, "theta": _NUM, "nu": _NUM,
                "directions": {"type": "array", "items": {"enum": ["+", "-"]}},
                "periodic": {"type": "boolean"},
                "mutation": {"enum": ["none", "halved-K", "flipped-alpha", "wrong-exponent"]},
            },
        },
        "numerics": {"type": "object"},
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "format": {"enum": ["json", "json+csv"]}},
        },
    },
    "allOf": [
        {"if": {"properties": {"command": {"const": cmd}}, "required": ["command"]},
         "then": {"required": ["inputs"] if req else [],
                  "properties": {"inputs": {"required": req}}}}
        for cmd, req in _REQUIRED.items()
    ],
}


def _path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        m = re.match(r"'([^']+)' is a required property", error.message)
        if m:
            parts.append(m.group(1))
    return ".".join(parts) or "<root>"


def validate(config: dict) -> None:
    """Raise ``ConfigError`` naming the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        # prefer the most specific error: required-field misses first
        err = next((e for e in errors if e.validator == "required"), errors[0])
        raise ConfigError(err.message, _path(err))


def _merge(base: dict, override: dict, path: str = "numerics") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown numeric setting {key!r}", f"{path}.{key}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError("expected an object", f"{path}.{key}")
            out[key] = _merge(base[key], val, f"{path}.{key}")
        else:
            out[key] = val
    return out


def normalize(config: dict, seed=None, window_scale=None, fmt=None, out_dir=None) -> dict:
    """Validate, apply command-line overrides and materialize every default."""
    validate(config)
    cfg = copy.deepcopy(config)
    cfg.setdefault("inputs", {})
    numerics = _merge(DEFAULTS, cfg.get("numerics", {}))
    if seed is not None:
        numerics["seed"] = int(seed)
    if window_scale is not None:
        if not window_scale > 0:
            raise ConfigError("window scale must be positive", "numerics.window_scale")
        numerics["window_scale"] = float(window_scale)
    cfg["numerics"] = numerics
    output = {"dir": ".", "format": "json"}
    output.update(cfg.get("output", {}))
    if fmt is not None:
        output["format"] = fmt
    if out_dir is not None:
        output["dir"] = str(out_dir)
    cfg["output"] = output
    return cfg


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "config") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "config") from exc
