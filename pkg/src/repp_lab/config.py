"""Experiment configuration: strict TOML with per-scenario defaults.

Every scenario declares a complete default table. A user file is merged
into it key by key; a key absent from the defaults is an error, as is a
value whose type does not match. The ``map`` table is replaced wholesale
because its keys depend on the family.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigInvalid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Tables a user file replaces wholesale rather than merging into the
# scenario default. ``map`` keys depend on the family; a user ``target``
# starts from the blank template so no default point leaks into it.
TARGET_TEMPLATE = {
    "zeta": None,  # explicit point
    "period": None,  # prime period of zeta if known; else detected up to nonperiodic_max
    "search_period": None,  # locate a point of this prime period instead of giving zeta
    "search_bracket": None,  # [lo, hi] for the search; default scans the interval
    "interval": None,  # [lo, hi): target given as an interval
    "nonperiodic_max": 20,
}
REPLACED_TABLES = {"map": None, "target": TARGET_TEMPLATE}


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc


def _type_ok(default: Any, value: Any) -> bool:
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, type(default))


def merge_strict(defaults: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigInvalid(f"unknown config key '{where}'")
        if key in REPLACED_TABLES and not path:
            if not isinstance(value, dict):
                raise ConfigInvalid(f"'{where}' must be a table")
            template = REPLACED_TABLES[key]
            out[key] = copy.deepcopy(value) if template is None else merge_strict(template, value, where)
        elif isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigInvalid(f"'{where}' must be a table")
            out[key] = merge_strict(defaults[key], value, where)
        else:
            if not _type_ok(defaults[key], value):
                raise ConfigInvalid(f"'{where}' has type {type(value).__name__}, "
                                    f"expected {type(defaults[key]).__name__}")
            out[key] = float(value) if isinstance(defaults[key], float) else value
    return out


def check_common(cfg: dict) -> None:
    seed = cfg.get("seed")
    if seed is None:
        raise ConfigInvalid("config must set 'seed'")
    if seed < 0:
        raise ConfigInvalid("'seed' must be non-negative")
    sched = cfg.get("schedule", {})
    masses = sched.get("masses")
    if masses is not None:
        if not masses or any(not 0 < m < 1 for m in masses):
            raise ConfigInvalid("schedule.masses must be non-empty and lie in (0, 1)")
        if any(b >= a for a, b in zip(masses, masses[1:])):
            raise ConfigInvalid("schedule.masses must be strictly decreasing")
    radii = sched.get("radii")
    if radii is not None:
        if not radii or any(r <= 0 for r in radii):
            raise ConfigInvalid("schedule.radii must be positive")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigInvalid("schedule.radii must be strictly decreasing")
    for key, val in cfg.get("tolerances", {}).items():
        if isinstance(val, (int, float)) and not isinstance(val, bool) and key not in SIGNED_TOLERANCES:
            if not val > 0:
                raise ConfigInvalid(f"tolerance '{key}' must be positive")


# tolerances that are bounds on signed quantities rather than radii
SIGNED_TOLERANCES = {"slope_max"}


def resolve(defaults: dict, user: dict, seed_override: int | None = None) -> dict:
    cfg = merge_strict(defaults, user)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    check_common(cfg)
    return cfg


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def sub_seed(seed: int, label: str) -> int:
    """Independent seed for one task, derived from the master seed and a label."""
    state = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])
