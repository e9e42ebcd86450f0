"""Run configuration with the published default hyperparameters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .exceptions import ContractError

HEAD_TYPES = ("lee", "biaffine", "concat")
TASKS = ("md", "ner")
MODES = ("high-recall", "high-f1")


@dataclass
class RunConfig:
    # architecture and task
    head: str = "biaffine"
    task: str = "md"
    labels: list | None = None
    # operating mode
    mode: str = "high-f1"
    lam: float = 0.4
    beta: float = 0.5
    max_width: int = 30
    # embeddings
    word_dim: int = 300
    hash_dim: int = 0
    hash_buckets: int = 10000
    char_cnn: bool | None = None
    vectors_dir: str | None = None
    vectors_dim: int = 1024
    embedding_dropout: float = 0.5
    # encoder
    lstm_layers: int = 3
    lstm_size: int = 200
    lstm_dropout: float = 0.4
    # scorer
    ffnn_layers: int = 2
    ffnn_size: int = 150
    ffnn_dropout: float = 0.2
    width_dim: int = 20
    biaffine_dim: int = 150
    # optimisation
    learning_rate: float = 1e-3
    train_steps: int = 40000
    batch_size: int = 1
    eval_interval: int = 2000
    no_dev: bool = False
    precision: str = "float32"
    seed: int = 0
    # paths (CLI only)
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    output_dir: str | None = None
    drop_singletons: bool = False

    _PATH_FIELDS = ("train_path", "dev_path", "test_path", "output_dir", "drop_singletons")

    def __post_init__(self):
        if self.head not in HEAD_TYPES:
            raise ContractError(f"head must be one of {HEAD_TYPES}, got {self.head!r}")
        if self.task not in TASKS:
            raise ContractError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.precision not in ("float32", "float64"):
            raise ContractError("precision must be float32 or float64")

    @classmethod
    def from_file(cls, path, **overrides):
        """Load a JSON config; ``overrides`` (non-None values) win over the file."""
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def estimator_params(self):
        return {k: v for k, v in asdict(self).items() if k not in self._PATH_FIELDS}

    def to_dict(self):
        return asdict(self)
