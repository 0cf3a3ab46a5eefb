"""YAML configuration: scenarios, optimizer settings and experiment specs.

A config document has optional top-level sections ``scenario``, ``solve``,
``experiment``, ``barprop``, ``rmsprop``, ``lm`` and ``de``.  Every key has a
default, so an empty document is valid.  ``--set section.key=value``
overrides are parsed as YAML scalars/lists and must name an existing key.
"""

from __future__ import annotations

import copy
import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .baselines import DeConfig, LmConfig, RmspropConfig
from .model import Scenario
from .optim import BarpropConfig


class ConfigError(ValueError):
    pass


CONFIG_TYPES = {
    "barprop": BarpropConfig,
    "rmsprop": RmspropConfig,
    "lm": LmConfig,
    "de": DeConfig,
}

SCENARIO_DEFAULTS = {
    "layout": "homogeneous_12",
    "anchors": None,
    "region_min": [0.0, 0.0],
    "region_max": [40.0, 40.0],
    "tx_power_dbm": -10.0,
    "path_loss_exponent": 3.0,
    "noise_std_db": 3.0,
}

SOLVE_DEFAULTS = {
    "algorithm": "barprop",
    "target": [20.0, 20.0],
    "rss_dbm": None,
    "noiseless": False,
}

EXPERIMENT_DEFAULTS = {
    "target": None,
    "noise_levels": [1.0, 2.0, 3.0, 4.0, 5.0],
    "anchor_counts": [10, 14, 18, 22, 26, 30],
    "runs": 1000,
    "algorithms": ["barprop", "rmsprop", "lm", "de"],
    "master_seed": 0,
    "noiseless": False,
    "anchors_per_run": False,
    "trials": 1000,
}


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def dataclass_to_dict(obj) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def dataclass_from_dict(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "region_min": _plain(scenario.region_min),
        "region_max": _plain(scenario.region_max),
        "anchors": _plain(scenario.anchors),
        "tx_power_dbm": scenario.tx_power_dbm,
        "path_loss_exponent": scenario.path_loss_exponent,
        "noise_std_db": _plain(scenario.noise_std_db),
    }


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from explicit ``anchors`` or a built-in ``layout`` name."""
    from .harness import builtin_layout

    unknown = set(data) - set(SCENARIO_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    d = {**SCENARIO_DEFAULTS, **data}
    anchors = d["anchors"]
    if anchors is None:
        try:
            anchors = builtin_layout(d["layout"])
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return Scenario(d["region_min"], d["region_max"], anchors,
                        d["tx_power_dbm"], d["path_loss_exponent"], d["noise_std_db"])
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def default_document() -> dict:
    doc = {
        "scenario": dict(SCENARIO_DEFAULTS),
        "solve": dict(SOLVE_DEFAULTS),
        "experiment": dict(EXPERIMENT_DEFAULTS),
    }
    for name, cls in CONFIG_TYPES.items():
        doc[name] = dataclass_to_dict(cls())
    return copy.deepcopy(doc)


def merge_document(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for section, values in (update or {}).items():
        if section not in out:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in values.items():
            if key not in out[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            out[section][key] = value
    return out


def load_document(path=None) -> dict:
    """Defaults overlaid with the YAML file at ``path`` (if given)."""
    doc = default_document()
    if path is None:
        return doc
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return merge_document(doc, data)


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as YAML."""
    update: dict = {}
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}") from exc
        update.setdefault(section, {})[name] = value
    return merge_document(doc, update)


def build_configs(doc: dict) -> dict:
    return {name: dataclass_from_dict(cls, doc[name]) for name, cls in CONFIG_TYPES.items()}


def dump_document(doc: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(_plain_doc(doc), sort_keys=False))


def _plain_doc(doc):
    if isinstance(doc, dict):
        return {k: _plain_doc(v) for k, v in doc.items()}
    return _plain(doc)


def save_scenario(scenario: Scenario, path) -> None:
    dump_document({"scenario": scenario_to_dict(scenario)}, path)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_document(path)["scenario"] if path else {})
