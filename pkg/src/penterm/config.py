"""Pipeline configuration: one section per stage, JSON on disk.

Every stage seed derives from the single root seed, so a config file plus
one integer reproduces any run byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np


@dataclass
class GenerateConfig:
    n_writers: int = 10
    terms_per_writer: int = 30
    min_label_len: int = 10
    max_label_len: int = 20
    corrupt_fraction: float = 0.0


@dataclass
class PreprocessConfig:
    resample_period_ms: int = 10
    window_size: int = 16
    window_stride: int = 12


@dataclass
class SplitStageConfig:
    force_threshold: float = 0.1
    min_stroke_len: int = 3
    merge_gap: int = 2
    min_votes: int = 3
    agreement: float = 0.75


@dataclass
class BoundaryConfig:
    batch_size: int = 2048
    learning_rate: float = 0.001
    l2_rate: float = 0.01
    patience: int = 5
    max_epochs: int = 60
    max_train_samples: int = 120_000
    n_estimators: int = 50
    train_fraction: float = 0.25
    min_run: int = 5
    extend: int = 4
    guard: int = 3
    dtype: str = "float64"  # "float32" enables the fast path


@dataclass
class CharclfConfig:
    batch_size: int = 128
    learning_rate: float = 0.001
    l2_rate: float = 0.01
    patience: int = 5
    max_epochs: int = 100
    dtype: str = "float64"


@dataclass
class AdaptConfig:
    n_terms: int = 5
    learning_rate: float = 0.001
    max_epochs: int = 20
    patience: int = 3


@dataclass
class PipelineConfig:
    seed: int = 42
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    split: SplitStageConfig = field(default_factory=SplitStageConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    charclf: CharclfConfig = field(default_factory=CharclfConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def stage_seed(self, stage: str) -> int:
        """A stable per-stage child of the root seed."""
        tag = int.from_bytes(stage.encode("utf-8")[:8].ljust(8, b"\0"), "little")
        return int(np.random.SeedSequence([self.seed, tag]).generate_state(1)[0])


_SECTIONS = {
    "generate": GenerateConfig,
    "preprocess": PreprocessConfig,
    "split": SplitStageConfig,
    "boundary": BoundaryConfig,
    "charclf": CharclfConfig,
    "adapt": AdaptConfig,
}


class ConfigError(ValueError):
    """Malformed configuration file or unknown key."""


def _build_section(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kwargs = {"seed": data.get("seed", PipelineConfig.seed)}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(cls, data.get(name, {}), name)
    return PipelineConfig(**kwargs)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Defaults when path is None; otherwise defaults overlaid by the file."""
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
