"""Run configuration, its JSON schema and the hyperparameter grid."""
from __future__ import annotations

import copy
import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema

from .model import NORM_MODES, PRESETS, WEIGHT_MODES, Composition, ModelConfig

TASKS = ("link-prediction", "node-classification", "graph-classification")

# Allowed values when a grid is requested.
GRID_DOMAINS = {
    "K": (1, 2, 3),
    "lr": (0.001, 0.0001),
    "batch_size": (128, 256),
    "dropout": (0.0, 0.1, 0.2, 0.3),
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "K": {"type": "integer", "minimum": 0},
        "composition": {"enum": [c.value for c in Composition]},
        "norm_mode": {"enum": list(NORM_MODES)},
        "basis": {"type": ["integer", "null"], "minimum": 1},
        "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "activation": {"enum": ["tanh", "relu", "identity"]},
        "weight_mode": {"enum": list(WEIGHT_MODES)},
        "relation_scalars": {"type": "boolean"},
        "preset": {"enum": list(PRESETS) + [None]},
    },
    "required": ["dims"],
    "additionalProperties": False,
}

RUN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "CompGCN run configuration",
    "type": "object",
    "properties": {
        "task": {"enum": list(TASKS)},
        "dataset": {"type": "string"},
        "model": MODEL_SCHEMA,
        "score_fn": {"enum": ["transe", "distmult"]},
        "transe_norm": {"enum": [1, 2]},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 0},
        "eval_every": {"type": "integer", "minimum": 1},
        "patience": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "label_smoothing": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "folds": {"type": "integer", "minimum": 2},
        "grid": {
            "type": ["object", "null"],
            "properties": {k: {"type": "array", "items": {"enum": list(v)}, "minItems": 1}
                           for k, v in GRID_DOMAINS.items()},
            "additionalProperties": False,
        },
    },
    "required": ["task"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "link-prediction"
    dataset: str = ""
    model: ModelConfig = field(default_factory=lambda: ModelConfig(dims=[32, 32]))
    score_fn: str = "distmult"
    transe_norm: int = 1
    lr: float = 0.001
    batch_size: int = 128
    epochs: int = 100
    eval_every: int = 10
    patience: int = 25
    seed: int = 0
    label_smoothing: float = 0.1
    folds: int = 10
    grid: dict | None = None

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.grid:
            for key, values in self.grid.items():
                allowed = GRID_DOMAINS.get(key)
                if allowed is None:
                    raise ConfigError(f"unknown grid axis {key!r}")
                bad = [v for v in values if v not in allowed]
                if bad:
                    raise ConfigError(f"grid values {bad} for {key} outside {allowed}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            jsonschema.validate(d, RUN_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {path}: {exc.message}") from None
        d = copy.deepcopy(d)
        if "model" in d:
            m = d["model"]
            if "K" in m and len(m["dims"]) != m["K"] + 1:
                raise ConfigError("model.K must equal len(model.dims) - 1")
            d["model"] = ModelConfig.from_dict(m)
        return cls(**d)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)


def grid_configs(cfg: RunConfig) -> list[RunConfig]:
    """Expand ``cfg.grid`` into concrete configurations (cartesian product)."""
    if not cfg.grid:
        return [cfg]
    axes = sorted(cfg.grid)
    out = []
    for values in itertools.product(*(cfg.grid[a] for a in axes)):
        c = replace(cfg, grid=None, model=replace(cfg.model))
        for axis, v in zip(axes, values):
            if axis == "K":
                width = c.model.dims[-1]
                c.model = replace(c.model, dims=[c.model.dims[0]] + [width] * v)
            elif axis == "dropout":
                c.model = replace(c.model, dropout=v)
            else:
                setattr(c, axis, v)
        out.append(c)
    return out
