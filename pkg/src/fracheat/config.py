"""JSON experiment configuration: a flat object whose keys all have defaults."""

from __future__ import annotations

import json
from dataclasses import fields

from .density import BOUND_IDS, ExperimentConfig
from .errors import ConfigParseError, ConfigValidationError, InvalidParameter
from .solver import SolverConfig

SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"solver"}

# keys of the diagnostics run by the CLI
EXTRA_DEFAULTS = {
    "epsilons": [2.0, 1.0, 0.5, 0.25, 0.1, 0.05],
    "ball_alpha": 1.0,
    "ball_beta": 0.5,
    "moments": [1.0, 2.0, 4.0],
    "refinements": 4,
    "export_mode": "coeffs",
    "equation": "regularized",
}

_TYPES = {
    "n_modes": int, "time_steps": int, "n_paths": int, "seed": int, "dim": int, "s_stride": int,
    "refinements": int, "horizon": float, "kappa": float, "gamma": float, "tolerance": float,
    "hurst": float, "xi": float, "amplitude": float, "lambda0": float, "phi_scale": float,
    "ball_alpha": float, "ball_beta": float, "scheme": str, "family": str, "kernel": str,
    "sampler": str, "export_mode": str, "equation": str,
}


def defaults() -> dict:
    """Every key with its default value, as a JSON-ready dict."""
    return to_dict(ExperimentConfig(), dict(EXTRA_DEFAULTS))


def to_dict(cfg: ExperimentConfig, extras: dict | None = None) -> dict:
    out = {k: getattr(cfg.solver, k) for k in sorted(SOLVER_KEYS)}
    for k in sorted(EXPERIMENT_KEYS):
        v = getattr(cfg, k)
        out[k] = list(v) if isinstance(v, tuple) else v
    out.update(extras if extras is not None else EXTRA_DEFAULTS)
    return out


def _coerce(key, value):
    want = _TYPES.get(key)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigValidationError(f"{key} must be an integer, got {value!r}")
        return value
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(f"{key} must be a number, got {value!r}")
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigValidationError(f"{key} must be a string, got {value!r}")
        return value
    return value


def from_dict(data: dict):
    """Return ``(ExperimentConfig, extras)``; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigParseError("configuration must be a JSON object")
    known = SOLVER_KEYS | EXPERIMENT_KEYS | set(EXTRA_DEFAULTS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigValidationError(f"unknown configuration key(s): {', '.join(unknown)}")
    vals = {k: _coerce(k, v) for k, v in data.items()}
    extras = dict(EXTRA_DEFAULTS)
    extras.update({k: vals.pop(k) for k in list(vals) if k in EXTRA_DEFAULTS})
    if "bounds" in vals:
        if not isinstance(vals["bounds"], list) or not all(isinstance(b, str)
                                                           for b in vals["bounds"]):
            raise ConfigValidationError("bounds must be a list of bound ids")
        vals["bounds"] = tuple(vals["bounds"])
    bw = vals.get("bandwidth")
    if bw is not None and not (bw == "rule-of-thumb" or (
            isinstance(bw, (int, float)) and not isinstance(bw, bool))):
        raise ConfigValidationError("bandwidth must be 'rule-of-thumb' or a positive number")
    for key in ("epsilons", "moments"):
        v = extras[key]
        if not isinstance(v, list) or not v or not all(
                isinstance(e, (int, float)) and not isinstance(e, bool) for e in v):
            raise ConfigValidationError(f"{key} must be a non-empty list of numbers")
    if any(e <= 0 for e in extras["epsilons"]):
        raise ConfigValidationError("epsilons must be positive")
    if any(p < 0 for p in extras["moments"]):
        raise ConfigValidationError("moments must be nonnegative")
    if extras["export_mode"] not in ("coeffs", "grid"):
        raise ConfigValidationError("export_mode must be 'coeffs' or 'grid'")
    if extras["equation"] not in ("regularized", "nemytskii"):
        raise ConfigValidationError("equation must be 'regularized' or 'nemytskii'")
    if extras["refinements"] < 1:
        raise ConfigValidationError("refinements must be positive")
    try:
        cfg = ExperimentConfig().with_(**vals)
        cfg.validate()
        cfg.solver.validate(nemytskii=True)
    except InvalidParameter as exc:
        raise ConfigValidationError(str(exc)) from exc
    except TypeError as exc:
        raise ConfigValidationError(str(exc)) from exc
    if extras["ball_beta"] <= cfg.hurst - 0.5:
        raise ConfigValidationError(f"ball_beta must exceed hurst - 1/2 = {cfg.hurst - 0.5}")
    return cfg, extras


def parse_config_text(text: str, source: str = "<string>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(data)


def parse_config(path):
    """Read a JSON config file; missing keys take their defaults."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def dump_config(cfg: ExperimentConfig, extras: dict | None = None) -> str:
    return json.dumps(to_dict(cfg, extras), indent=2, sort_keys=True)


__all__ = ["BOUND_IDS", "defaults", "dump_config", "from_dict", "parse_config",
           "parse_config_text", "to_dict"]
