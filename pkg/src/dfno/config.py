"""JSON run configurations for the command-line harness.

Every command reads one flat JSON object; an optional ``"model"`` sub-object
carries architecture settings. Unknown keys are rejected so that typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidArgument


@dataclass
class ModelSpec:
    width: int = 20
    num_blocks: int = 4
    modes: Optional[list] = None
    activation: str = "relu"
    grid_channels: bool = True
    fft_backend: str = "numpy"


@dataclass
class GenDataConfig:
    out_dir: str = "data"
    n_samples: int = 250
    grid: int = 32
    n_t: int = 10
    t_final: float = 0.01
    seed: int = 0


@dataclass
class TrainConfig:
    data_dir: str = "data"
    out_dir: str = "run"
    n_train: int = 200
    n_val: int = 50
    epochs: int = 30
    batch_size: int = 1
    lr: float = 1e-3
    seed: int = 0
    partition: Optional[list] = None
    model: ModelSpec = field(default_factory=ModelSpec)


@dataclass
class InferConfig:
    checkpoint: str = "run/checkpoint"
    input: str = "input.dfno"
    output: str = "output.dfno"
    partition: Optional[list] = None
    fft_backend: Optional[str] = None
    seed: int = 0


@dataclass
class BenchConfig:
    out_csv: str = "bench.csv"
    spatial_base: list = field(default_factory=lambda: [32, 32, 32])
    n_t: int = 20
    p_values: list = field(default_factory=lambda: [1, 2, 4, 8])
    series: list = field(default_factory=lambda: ["spatial", "temporal"])
    warmup: int = 2
    reps: int = 5
    seed: int = 0
    model: ModelSpec = field(default_factory=ModelSpec)


@dataclass
class SelftestConfig:
    seeds: int = 10
    seed: int = 0
    corrupt_adjoint: bool = False


COMMANDS = {
    "gen-data": GenDataConfig,
    "train": TrainConfig,
    "infer": InferConfig,
    "bench": BenchConfig,
    "selftest": SelftestConfig,
}

# keys whose values are shapes or counts and so must be positive
_POSITIVE = {"n_samples", "grid", "n_t", "epochs", "batch_size", "width", "num_blocks",
             "modes", "partition", "spatial_base", "p_values", "reps", "seeds", "n_train"}


def _check_positive(key, value):
    if key not in _POSITIVE or value is None:
        return
    vals = value if isinstance(value, list) else [value]
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise InvalidArgument(f"{key}: entries must be positive integers, got {value!r}")


def _build(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise InvalidArgument(f"{where}: expected a JSON object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise InvalidArgument(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in doc.items():
        if key == "model":
            value = _build(ModelSpec, value, f"{where}.model")
        else:
            _check_positive(key, value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(command: str, text: Optional[str] = None, **overrides):
    """Parse ``text`` (JSON, may be None for all defaults) for ``command``.

    ``overrides`` with value None are ignored; the rest replace top-level keys.
    """
    if command not in COMMANDS:
        raise InvalidArgument(f"unknown command {command!r}")
    doc = json.loads(text) if text else {}
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return _build(COMMANDS[command], doc, command)


def load_config_file(command: str, path: Optional[str] = None, **overrides):
    text = None
    if path is not None:
        with open(path) as f:
            text = f.read()
    return load_config(command, text, **overrides)
