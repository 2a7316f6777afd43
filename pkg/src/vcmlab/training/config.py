from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..errors import ConfigError

STRATEGIES = ("mse", "gt", "feature", "pseudo_gt")
FRAME_MODES = ("labeled_only", "random_frame")


@dataclass
class TrainingConfig:
    """Every knob of a pretrain or finetune run.

    ``lam`` is used by pretraining; finetuning trains one model per entry of
    ``lambda_ladder``.
    """

    strategy: str = "mse"
    lam: float = 1024.0
    lambda_ladder: list = field(default_factory=lambda: [16.0, 8.0, 4.0, 2.0])
    pretrain_iterations: int = 125_000
    finetune_epochs: int = 10
    batch_size: int = 8
    crop_size: int = 256
    learning_rate: float = 1e-4
    seed: int = 0
    frame_mode: str = "labeled_only"
    cut_point: str = "stage3"
    confidence_threshold: float = 0.5
    checkpoint_every: int = 0
    network: str = "full"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.frame_mode not in FRAME_MODES:
            raise ConfigError(f"frame_mode must be one of {FRAME_MODES}, got {self.frame_mode!r}")
        if not self.lam > 0 or any(not float(l) > 0 for l in self.lambda_ladder):
            raise ConfigError("lambda values must be positive")
        if self.strategy == "gt" and self.frame_mode != "labeled_only":
            raise ConfigError("ground-truth finetuning needs the labeled frame (frame_mode=labeled_only)")
        if self.crop_size < 64 or self.batch_size < 1:
            raise ConfigError("crop_size must be >= 64 and batch_size >= 1")
        if self.network not in ("full", "toy"):
            raise ConfigError(f"network preset must be 'full' or 'toy', got {self.network!r}")
        self.lambda_ladder = [float(l) for l in self.lambda_ladder]

    @classmethod
    def toy(cls, **overrides) -> "TrainingConfig":
        base = dict(lam=64.0, pretrain_iterations=500, batch_size=4, crop_size=64, learning_rate=1e-3,
                    finetune_epochs=10, network="toy")
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "TrainingConfig":
        return TrainingConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training fields: {sorted(unknown)}")
        return cls(**d)


def load_yaml(path) -> dict:
    """Parse a YAML file, turning syntax errors into ConfigError with line info."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: cannot parse config{where}: {getattr(e, 'problem', e)}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data
