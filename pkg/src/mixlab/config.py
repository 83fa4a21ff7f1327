"""Experiment configuration: TOML loading, schema defaults and validation.

A config is a flat TOML table.  ``kind`` and ``seed`` are common to every
experiment; the remaining keys depend on the kind and are listed in SCHEMA
with their defaults.  Unknown keys are violations, so typos do not silently
fall back to defaults.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import ConfigError

KINDS = ("simulate", "tails", "correlate", "cnb", "clt", "renewal", "chain", "couple", "accept-all")
SYSTEMS = ("linked_twist", "stadium", "semidispersing")
CHAIN_FAMILIES = ("stadium", "linked_twist", "cusps", "semidispersing", "point_mass")


@dataclass(frozen=True)
class Param:
    default: Any
    check: Callable[[Any], bool]
    rule: str


def _int(lo, hi=None):
    def ok(v):
        return isinstance(v, int) and not isinstance(v, bool) and v >= lo and (hi is None or v <= hi)
    return ok


def _real(lo, hi, lo_open=False, hi_open=False):
    def ok(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        above = v > lo if lo_open else v >= lo
        below = v < hi if hi_open else v <= hi
        return above and below
    return ok


def _choice(options):
    return lambda v: v in options


def _bool(v):
    return isinstance(v, bool)


def _str(v):
    return isinstance(v, str) and v != ""


def _int_list(lo, min_len=1):
    return lambda v: (isinstance(v, list) and len(v) >= min_len
                      and all(_int(lo)(x) for x in v))


def _band(v):
    return (isinstance(v, list) and len(v) == 2 and all(_real(-1e9, 1e9)(x) for x in v)
            and v[0] < v[1])


def _window(v):
    return isinstance(v, list) and len(v) == 2 and all(_int(1)(x) for x in v) and v[0] < v[1]


COMMON = {
    "kind": Param(None, _choice(KINDS), f"kind must be one of {', '.join(KINDS)}"),
    "seed": Param(None, _int(0, 2 ** 64 - 1), "seed must be an integer in [0, 2^64)"),
    "out": Param("mixlab-out", _str, "out must be a nonempty path string"),
    "workers": Param(1, _int(1, 256), "workers must be an integer in [1, 256]"),
}

SCHEMA: dict[str, dict[str, Param]] = {
    "simulate": {
        "system": Param("linked_twist", _choice(SYSTEMS), f"system must be one of {SYSTEMS}"),
        "steps": Param(100_000, _int(10, 10 ** 10), "steps must be an integer >= 10"),
        "orbits": Param(10, _int(2, 10 ** 6), "orbits must be an integer >= 2"),
        "burn_in": Param(1000, _int(0), "burn_in must be a nonnegative integer"),
        "z_max": Param(4.0, _real(0, 100, lo_open=True), "z_max must be in (0, 100]"),
    },
    "tails": {
        "system": Param("linked_twist", _choice(SYSTEMS), f"system must be one of {SYSTEMS}"),
        "returns": Param(100_000, _int(1000, 10 ** 9), "returns must be an integer >= 1000"),
        "orbits": Param(10, _int(1, 10 ** 6), "orbits must be a positive integer"),
        "grid_max": Param(1024, _int(1, 10 ** 7), "grid_max must be a positive integer"),
        "fit_window": Param([8, 128], _window, "fit_window must be [lo, hi] with 1 <= lo < hi"),
        "band": Param([-3.3, -2.7], _band, "band must be [lo, hi] with lo < hi"),
        "kac_band": Param([0.97, 1.03], _band, "kac_band must be [lo, hi] with lo < hi"),
    },
    "correlate": {
        "system": Param("linked_twist", _choice(("linked_twist",)),
                        "correlate supports system = linked_twist (observables live on the torus)"),
        "steps": Param(10 ** 7, _int(10 ** 4, 10 ** 11), "steps must be an integer >= 10^4"),
        "orbits": Param(10, _int(1, 10 ** 6), "orbits must be a positive integer"),
        "burn_in": Param(10_000, _int(0), "burn_in must be a nonnegative integer"),
        "window": Param([64, 512], _window, "window must be [lo, hi] with 1 <= lo < hi"),
        "fast_window": Param([8, 64], _window, "fast_window must be [lo, hi] with 1 <= lo < hi"),
        "ratio_band": Param([0.7, 1.3], _band, "ratio_band must be [lo, hi] with lo < hi"),
        "min_gap": Param(0.5, _real(-10, 10), "min_gap must be in [-10, 10]"),
    },
    "cnb": {
        "system": Param("linked_twist", _choice(SYSTEMS), f"system must be one of {SYSTEMS}"),
        "n_grid": Param([64, 128, 256], _int_list(3, 2), "n_grid must list at least two integers >= 3"),
        "b": Param(2.0, _real(0, 100, lo_open=True), "b must be in (0, 100]"),
        "budget": Param(100_000, _int(1000, 10 ** 9), "budget must be an integer >= 1000"),
        "band_M": Param([-2.4, -1.6], _band, "band_M must be [lo, hi] with lo < hi"),
        "band": Param([-1.4, -0.6], _band, "band must be [lo, hi] with lo < hi"),
    },
    "clt": {
        "system": Param("linked_twist", _choice(("linked_twist",)),
                        "clt supports system = linked_twist (observables live on the torus)"),
        "n": Param(10_000, _int(10, 10 ** 8), "n must be an integer >= 10"),
        "samples": Param(10_000, _int(100, 10 ** 8), "samples must be an integer >= 100"),
        "corr_budget": Param(10 ** 7, _int(10 ** 4, 10 ** 11), "corr_budget must be an integer >= 10^4"),
        "max_lag": Param(200, _int(10, 10 ** 6), "max_lag must be an integer >= 10"),
        "ks_max": Param(0.05, _real(0, 1, lo_open=True), "ks_max must be in (0, 1]"),
        "sigma_tol": Param(0.10, _real(0, 1, lo_open=True), "sigma_tol must be in (0, 1]"),
    },
    "renewal": {
        "family": Param("power_law", _choice(("power_law", "point_mass", "custom")),
                        "family must be power_law, point_mass or custom"),
        "alpha0": Param(2.0, _real(0, 50, lo_open=True), "alpha0 must be in (0, 50]"),
        "N": Param(10_000, _int(10, 10 ** 5), "N must be an integer in [10, 10^5]"),
        "alpha": Param(0.5, _real(0, 1, lo_open=True, hi_open=True), "alpha must be in (0, 1)"),
        "a0": Param(0.5, _real(0, 1), "a0 must be in [0, 1]"),
        "k": Param(1, _int(1), "k must be a positive integer"),
        "p_file": Param("", lambda v: isinstance(v, str), "p_file must be a path string"),
        "fit_lo": Param(100, _int(1), "fit_lo must be a positive integer"),
        "tol": Param(0.15, _real(0, 10, lo_open=True), "tol must be in (0, 10]"),
        "max_lost_mass": Param(1e-3, _real(0, 1, lo_open=True), "max_lost_mass must be in (0, 1]"),
    },
    "chain": {
        "family": Param("stadium", _choice(CHAIN_FAMILIES), f"family must be one of {CHAIN_FAMILIES}"),
        "m_max": Param(10 ** 5, _int(1000, 10 ** 7), "m_max must be an integer in [1000, 10^7]"),
        "tol": Param(1e-12, _real(0, 1e-3, lo_open=True), "tol must be in (0, 1e-3]"),
        "n_grid": Param([1000, 10_000, 100_000], _int_list(10, 2),
                        "n_grid must list at least two integers >= 10"),
        "samples": Param(10_000, _int(100, 10 ** 8), "samples must be an integer >= 100"),
        "b": Param(1.0, _real(0, 100, lo_open=True), "b must be in (0, 100]"),
        "q_h2a": Param(0.25, _real(0, 1, lo_open=True, hi_open=True), "q_h2a must be in (0, 1)"),
        "q_h2b": Param(0.45, _real(0, 1, lo_open=True, hi_open=True), "q_h2b must be in (0, 1)"),
        "drift_m": Param(10_000, _int(10), "drift_m must be an integer >= 10"),
        "exponent_band": Param([-3.2, -2.8], _band, "exponent_band must be [lo, hi] with lo < hi"),
        "rate_tol": Param(0.15, _real(0, 1, lo_open=True), "rate_tol must be in (0, 1]"),
    },
    "couple": {
        "alpha0": Param(2.0, _real(0, 50, lo_open=True), "alpha0 must be in (0, 50]"),
        "N": Param(10_000, _int(10, 10 ** 5), "N must be an integer in [10, 10^5]"),
        "eps_d": Param(1e-5, _real(0, 1e-5, lo_open=True), "eps_d must be in (0, 1e-5]"),
        "c0": Param(0.4, _real(0.1, 0.9), "c0 must be in [0.1, 0.9]"),
        "mode": Param("random", _choice(("exact", "low", "high", "random")),
                      "mode must be exact, low, high or random"),
        "shifted": Param(False, _bool, "shifted must be a boolean"),
    },
    "accept-all": {
        "scale": Param("full", _choice(("full", "quick")), "scale must be full or quick"),
        "criteria": Param(list(range(1, 14)), lambda v: isinstance(v, list) and len(v) > 0
                          and all(_int(1, 13)(x) for x in v), "criteria must list ids in 1..13"),
    },
}


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc


def validate(config: dict) -> list[str]:
    """All violations of the schema, each naming the key and its constraint."""
    out = []
    for key in ("kind", "seed"):
        if key not in config:
            out.append(f"{key}: missing required key")
    kind = config.get("kind")
    for key, param in COMMON.items():
        if key in config and not param.check(config[key]):
            out.append(f"{key}: {param.rule}")
    if kind not in SCHEMA:
        return out
    schema = SCHEMA[kind]
    for key, value in config.items():
        if key in COMMON:
            continue
        if key not in schema:
            out.append(f"{key}: unknown key for kind = {kind}")
        elif not schema[key].check(value):
            out.append(f"{key}: {schema[key].rule}")
    if kind == "renewal" and config.get("family") == "custom" and not config.get("p_file"):
        out.append("p_file: required when family = custom")
    if kind == "renewal" and "fit_lo" in config and "N" in config and _int(1)(config["fit_lo"]) \
            and _int(1)(config["N"]) and config["fit_lo"] >= config["N"]:
        out.append("fit_lo: must be smaller than N")
    return out


def resolve(config: dict) -> dict:
    """Config with defaults filled in; raises ConfigError on the first violation."""
    problems = validate(config)
    if problems:
        key = problems[0].split(":", 1)[0]
        raise ConfigError("; ".join(problems), key=key)
    full = {k: p.default for k, p in COMMON.items() if p.default is not None}
    full.update({k: p.default for k, p in SCHEMA[config["kind"]].items()})
    full.update(config)
    return full


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
