"""Run configuration: converter parameters from a YAML/JSON file and/or
``KEY=VALUE`` overrides.

Parameters come in one of two forms:

* physical: ``Lr, Cr, Co, Ro, N, Vin, fs``
* design: ``F, Qe, fr, N, Ro, Vin`` with optional ``Co`` (default 100 nF)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import ConverterParams, ParameterError, from_design

PHYSICAL_KEYS = ("Lr", "Cr", "Co", "Ro", "N", "Vin", "fs")
DESIGN_KEYS = ("F", "Qe", "fr", "N", "Ro", "Vin")
DESIGN_OPTIONAL = {"Co": 100e-9}
PARAM_KEYS = set(PHYSICAL_KEYS) | set(DESIGN_KEYS) | set(DESIGN_OPTIONAL)
META_KEYS = {"format", "output"}
# keys of emitted result documents, accepted so JSON output parses back
RESULT_KEYS = {"command", "summary", "tables", "failures", "derived"}
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: ConverterParams | None
    form: str | None                  # "physical" | "design" | None
    values: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "csv"


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return doc


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _number(key, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {value!r}")
    return v


def build_params(values: dict) -> tuple[ConverterParams, str]:
    phys_only = {"Lr", "Cr", "fs"} & values.keys()
    design_only = {"F", "Qe", "fr"} & values.keys()
    if phys_only and design_only:
        raise ConfigError("both parameter forms present: physical keys "
                          f"{sorted(phys_only)} and design keys {sorted(design_only)}")
    if design_only:
        missing = [k for k in DESIGN_KEYS if k not in values]
        if missing:
            raise ConfigError(f"missing design-form keys: {', '.join(missing)}")
        kw = {k: values[k] for k in DESIGN_KEYS}
        kw["Co"] = values.get("Co", DESIGN_OPTIONAL["Co"])
        return from_design(**kw), "design"
    missing = [k for k in PHYSICAL_KEYS if k not in values]
    if missing:
        raise ConfigError(
            f"missing parameter keys: {', '.join(missing)} (physical form needs "
            f"{', '.join(PHYSICAL_KEYS)}; design form needs {', '.join(DESIGN_KEYS)})")
    return ConverterParams(**{k: values[k] for k in PHYSICAL_KEYS}), "physical"


def parse_config(path=None, overrides=(), require_params: bool = True,
                 fmt: str | None = None, output: str | None = None) -> RunConfig:
    """Merge a config file with ``KEY=VALUE`` overrides (overrides win)."""
    doc = load_document(path) if path is not None else {}
    meta = {k: doc[k] for k in META_KEYS if k in doc}
    if "params" in doc:
        if not isinstance(doc["params"], dict):
            raise ConfigError("'params' must be a mapping")
        extra = set(doc) - {"params"} - META_KEYS - RESULT_KEYS
        raw = dict(doc["params"])
    else:
        extra = set(doc) - PARAM_KEYS - META_KEYS
        raw = {k: v for k, v in doc.items() if k in PARAM_KEYS}
    if extra:
        raise ConfigError(f"unknown config key: {sorted(extra)[0]!r}")
    for item in overrides:
        k, v = parse_assignment(item) if isinstance(item, str) else item
        raw[k] = v
    unknown = sorted(set(raw) - PARAM_KEYS)
    if unknown:
        raise ConfigError(f"unknown parameter key: {unknown[0]!r}")
    values = {k: _number(k, v) for k, v in raw.items()}
    fmt = fmt or meta.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}")
    out = output or meta.get("output")
    if not values:
        if require_params:
            raise ConfigError(
                f"no converter parameters given; required keys: {', '.join(PHYSICAL_KEYS)} "
                f"(or {', '.join(DESIGN_KEYS)})")
        return RunConfig(params=None, form=None, values={}, output=out, format=fmt)
    try:
        params, form = build_params(values)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(params=params, form=form, values=values, output=out, format=fmt)
