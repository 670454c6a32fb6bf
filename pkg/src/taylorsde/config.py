"""Flat ``key = value`` experiment configs with per-subcommand schemas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ConfigError
from .fields import CATALOG
from .noise import MODES, NOISE_KINDS

REQUIRED = object()


@dataclass(frozen=True)
class Key:
    kind: type | tuple  # float, int, bool, str, or a tuple of allowed strings
    default: Any = REQUIRED
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _seed_ok(v):
    return 0 <= v < 2**64


SEED = Key(int, 0, _seed_ok, "an unsigned 64-bit integer")
FIELD = Key(tuple(sorted(CATALOG)))
GAMMA = Key(float, 2.0, _positive, "> 0")

SCHEMAS = {
    "expand": {
        "field": FIELD,
        "gamma": GAMMA,
        "a": Key(float),
        "b": Key(float),
        "t": Key(float),
        "xi": Key(float),
        "seed": SEED,
    },
    "remainder": {
        "field": FIELD,
        "gamma": GAMMA,
        "t": Key(float),
        "b": Key(float, 0.0),
        "noise": Key(NOISE_KINDS, "symmetric-bernoulli"),
        "nu": Key(float, None, lambda v: v > 2, "> 2"),
        "mean": Key(float),
        "sigma": Key(float, 1.0, _positive, "> 0"),
        "empirical_mean": Key(float, None),
        "method": Key(("enumeration", "monte-carlo"), None),
        "n_samples": Key(int, 100_000, lambda v: v >= 2, ">= 2"),
        "a_lo": Key(float, None),
        "a_hi": Key(float, None),
        "a_points": Key(int, 21, lambda v: v >= 2, ">= 2"),
        "seed": SEED,
    },
    "compare": {
        "field": FIELD,
        "gamma": GAMMA,
        "process": Key(("additive", "gbm"), "additive"),
        "noise": Key(NOISE_KINDS, "standard-normal"),
        "nu": Key(float, None, lambda v: v > 2, "> 2"),
        "mode": Key(MODES, "increment"),
        "mean": Key(float, 0.0),
        "drift": Key(float, 0.0),
        "sigma": Key(float, 1.0, _positive, "> 0"),
        "x0": Key(float, 1.0),
        "mu": Key(float, 0.05),
        "t0": Key(float, 0.0),
        "T": Key(float, 1.0),
        "steps": Key(int, 100, _positive, ">= 1"),
        "n_paths": Key(int, 1000, lambda v: v >= 2, ">= 2"),
        "a": Key(float, None),
        "b": Key(float, 0.0),
        "dump_paths": Key(bool, False),
        "seed": SEED,
    },
    "portfolio": {
        "mu": Key(float),
        "sigma": Key(float, REQUIRED, _positive, "> 0"),
        "gamma": GAMMA,
        "utility": Key(("exponential", "power", "log"), "exponential"),
        "x0": Key(float, 1.0),
        "T": Key(float, 1.0, _positive, "> 0"),
        "s": Key(float, 0.0, _nonneg, ">= 0"),
        "steps": Key(int, 50, _positive, ">= 1"),
        "n_paths": Key(int, 100_000, lambda v: v >= 2, ">= 2"),
        "pi_lo": Key(float, 0.0),
        "pi_hi": Key(float, 3.0),
        "pi_step": Key(float, 0.05, _positive, "> 0"),
        "pi_candidate": Key(float, None),
        "n_fit": Key(int, 20_000, lambda v: v >= 2, ">= 2"),
        "n_outer": Key(int, 256, lambda v: v >= 2, ">= 2"),
        "n_inner": Key(int, 2_000, lambda v: v >= 2, ">= 2"),
        "j_steps": Key(int, 20, _positive, ">= 1"),
        "seed": SEED,
    },
}


def _convert(raw: str, key: Key, name: str, line: int):
    kind = key.kind
    try:
        if isinstance(kind, tuple):
            if raw not in kind:
                raise ValueError(f"must be one of {', '.join(kind)}")
            return raw
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError("must be true or false")
            return low == "true"
        if kind is int:
            return int(raw, 10)
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("must be finite")
            return v
        return raw
    except ValueError as exc:
        msg = str(exc) if "must" in str(exc) else f"expected {kind.__name__}, got {raw!r}"
        raise ConfigError(f"{name}: {msg}", line) from None


def parse_config(text: str, subcommand: str, overrides: dict | None = None) -> dict:
    """Parse and validate a config; returns every schema key resolved (defaults filled)."""
    schema = SCHEMAS[subcommand]
    values, lines = {}, {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        name, raw = (part.strip() for part in line.split("=", 1))
        if name not in schema:
            raise ConfigError(f"unknown key {name!r} for {subcommand}", lineno)
        if name in values:
            raise ConfigError(f"duplicate key {name!r} (first on line {lines[name]})", lineno)
        values[name] = _convert(raw, schema[name], name, lineno)
        lines[name] = lineno
    for name, v in (overrides or {}).items():
        values[name] = v
        lines.setdefault(name, None)
    for name, key in schema.items():
        if name not in values:
            if key.default is REQUIRED:
                raise ConfigError(f"missing required key {name!r}")
            values[name] = key.default
        elif key.check is not None and values[name] is not None and not key.check(values[name]):
            raise ConfigError(f"{name} = {values[name]!r} violates {key.rule}", lines.get(name))
    _cross_check(subcommand, values)
    return {name: values[name] for name in schema}


def _cross_check(sub, v):
    if sub == "remainder":
        if v["noise"] == "student-t" and v["nu"] is None:
            raise ConfigError("student-t noise needs nu")
        if v["method"] == "enumeration" and v["noise"] != "symmetric-bernoulli":
            raise ConfigError("enumeration needs a finite-support noise (symmetric-bernoulli)")
        if v["a_lo"] is not None and v["a_hi"] is not None and not v["a_lo"] < v["a_hi"]:
            raise ConfigError("need a_lo < a_hi")
    if sub == "compare":
        if v["noise"] == "student-t" and v["nu"] is None:
            raise ConfigError("student-t noise needs nu")
        if not v["t0"] < v["T"]:
            raise ConfigError("need t0 < T")
        if v["process"] == "gbm" and (v["noise"] != "standard-normal" or v["mode"] != "increment"):
            raise ConfigError("gbm paths are Euler-Maruyama: use noise = standard-normal, mode = increment")
    if sub == "portfolio":
        if not v["s"] < v["T"]:
            raise ConfigError("need s < T")
        if not v["pi_lo"] < v["pi_hi"]:
            raise ConfigError("need pi_lo < pi_hi")
