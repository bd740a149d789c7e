"""Sweep configuration: schema, defaults and loading from TOML/JSON."""

from __future__ import annotations

import copy
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

__all__ = ["SweepConfig", "load_config", "EXPERIMENTS", "validate_config"]

EXPERIMENTS = (
    "recover",
    "gauge",
    "regress",
    "feasibility",
    "dict-recover",
    "lowrank",
    "complete",
    "onebit",
    "project",
    "phase",
    "tessellate",
)

TOP_KEYS = {"experiment", "n", "grid", "trials", "seed", "set", "model", "output", "solver",
            "workers", "format", "truth"}
GRID_KEYS = {"m", "s", "r", "eps", "d1", "d2", "N", "sigma"}
MODEL_KEYS = {"rows", "link", "noise"}
TRUTH_KINDS = ("sparse", "compressible")


@dataclass
class SweepConfig:
    experiment: str
    n: int
    grid: dict
    trials: int = 50
    seed: int = 0
    set: dict | None = None
    model: dict = field(default_factory=lambda: {"rows": "Gaussian"})
    output: str | None = None
    solver: str = "auto"
    workers: int = 1
    format: str = "csv"
    truth: str = "sparse"

    def to_dict(self) -> dict:
        return asdict(self)

    def grid_list(self, key, default=None):
        val = self.grid.get(key, default)
        if val is None:
            return [None]
        return list(val) if isinstance(val, (list, tuple)) else [val]


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_list(grid, key, pred, what):
    val = grid.get(key)
    if val is None:
        return
    items = val if isinstance(val, list) else [val]
    if isinstance(val, list) and not val:
        raise ConfigError(f"grid.{key} must not be empty")
    for i, v in enumerate(items):
        if not pred(v):
            where = f"grid.{key}[{i}]" if isinstance(val, list) else f"grid.{key}"
            raise ConfigError(f"{where} must be {what}, got {v!r}")


def validate_config(raw: dict) -> SweepConfig:
    """Validate a raw mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    for key in ("experiment", "n", "grid"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    if not _is_int(raw["n"]) or raw["n"] < 1:
        raise ConfigError(f"n must be a positive integer, got {raw['n']!r}")
    grid = raw["grid"]
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a table")
    for key in grid:
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown config key 'grid.{key}'")
    if "m" not in grid:
        raise ConfigError("missing required key 'grid.m'")
    _check_list(grid, "m", lambda v: _is_int(v) and v >= 0, "a non-negative integer")
    for key in ("s", "r", "d1", "d2", "N"):
        _check_list(grid, key, lambda v: _is_int(v) and v >= 1, "a positive integer")
    for key in ("eps", "sigma"):
        _check_list(grid, key, lambda v: _is_num(v) and v >= 0, "a non-negative number")
    model = raw.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("model must be a table")
    for key in model:
        if key not in MODEL_KEYS:
            raise ConfigError(f"unknown config key 'model.{key}'")
    cfg = SweepConfig(
        experiment=exp,
        n=raw["n"],
        grid=copy.deepcopy(grid),
        trials=raw.get("trials", 50),
        seed=raw.get("seed", 0),
        set=copy.deepcopy(raw.get("set")),
        model={"rows": "Gaussian", **copy.deepcopy(model)},
        output=raw.get("output"),
        solver=raw.get("solver", "auto"),
        workers=raw.get("workers", 1),
        format=raw.get("format", "csv"),
        truth=raw.get("truth", "sparse"),
    )
    if "eps" not in cfg.grid:
        cfg.grid["eps"] = 0.0
    if not _is_int(cfg.trials) or cfg.trials < 1:
        raise ConfigError(f"trials must be a positive integer, got {cfg.trials!r}")
    if not _is_int(cfg.seed):
        raise ConfigError(f"seed must be an integer, got {cfg.seed!r}")
    if not _is_int(cfg.workers) or cfg.workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {cfg.workers!r}")
    if cfg.solver not in ("auto", "lp", "splitting"):
        raise ConfigError(f"solver must be auto, lp or splitting, got {cfg.solver!r}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg.format!r}")
    if cfg.truth not in TRUTH_KINDS:
        raise ConfigError(f"truth must be one of {TRUTH_KINDS}, got {cfg.truth!r}")
    if cfg.set is not None and not isinstance(cfg.set, dict):
        raise ConfigError("set must be a descriptor table {kind, n, params}")
    return cfg


def _set_path(raw: dict, dotted: str, value):
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {part!r} is not a table")
    node[parts[-1]] = value


def load_config(path=None, overrides: dict | None = None) -> SweepConfig:
    """Read a TOML or JSON config (by extension), apply overrides, validate.

    ``overrides`` maps dotted keys (``"grid.eps"``) to values and wins over
    the file.  ``path`` may be ``None`` when the overrides are complete.
    """
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        text = p.read_text()
        try:
            if p.suffix.lower() == ".toml":
                raw = tomllib.loads(text)
            elif p.suffix.lower() == ".json":
                raw = json.loads(text)
            else:
                raise ConfigError(f"config must be .toml or .json, got {p.suffix!r}")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            _set_path(raw, key, val)
    if "workers" not in raw and os.environ.get("ESTKIT_WORKERS"):
        try:
            raw["workers"] = int(os.environ["ESTKIT_WORKERS"])
        except ValueError as exc:
            raise ConfigError("ESTKIT_WORKERS must be an integer") from exc
    return validate_config(raw)
