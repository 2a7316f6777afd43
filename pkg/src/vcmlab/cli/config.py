"""Experiment configuration files and dataset descriptors."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..datasets import SequenceDataset, load_dataset
from ..errors import ConfigError
from ..training import TrainingConfig
from ..training.config import load_yaml

LAYOUTS = ("sequence_folders", "flat_images")
ANNOTATION_FORMATS = ("png_label_map",)


@dataclass
class DatasetDescriptor:
    root: str
    layout: str = "sequence_folders"
    labeled_pattern: str = r"_labeled\.png$"
    annotation_format: str = "png_label_map"
    annotation_suffix: str = "_gt"

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"dataset layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.annotation_format not in ANNOTATION_FORMATS:
            raise ConfigError(f"unsupported annotation format {self.annotation_format!r}")
        try:
            re.compile(self.labeled_pattern)
        except re.error as e:
            raise ConfigError(f"labeled_pattern is not a valid regular expression: {e}") from e

    @classmethod
    def from_dict(cls, d, base_dir: Path | None = None) -> "DatasetDescriptor":
        if isinstance(d, str):
            d = {"root": d}
        if not isinstance(d, dict) or "root" not in d:
            raise ConfigError("a dataset needs at least a 'root' entry")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown dataset fields: {sorted(unknown)}")
        desc = cls(**d)
        if base_dir is not None and not Path(desc.root).is_absolute():
            desc.root = str((base_dir / desc.root).resolve())
        return desc

    def load(self) -> SequenceDataset:
        """Resolve to a non-empty dataset; raises DataError otherwise."""
        return load_dataset(self.root, self.layout, self.labeled_pattern, self.annotation_suffix)


@dataclass
class ExperimentConfig:
    experiment: str
    dataset: DatasetDescriptor
    training: TrainingConfig
    eval_dataset: DatasetDescriptor | None = None
    task_net: str | None = None     # None selects the bundled toy segmenter
    pretrained: str | None = None   # codec checkpoint finetuning starts from
    source: Path | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        known = {"experiment", "dataset", "training", "eval_dataset", "task_net", "pretrained"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level config fields: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config has no 'dataset' section")
        name = str(d.get("experiment") or "experiment")
        if not re.fullmatch(r"[A-Za-z0-9._-]+", name):
            raise ConfigError(f"experiment name {name!r} may only use letters, digits, '.', '_' and '-'")

        def path(v):
            if v is None or base_dir is None or Path(v).is_absolute():
                return v
            return str((base_dir / v).resolve())

        training = d.get("training") or {}
        if not isinstance(training, dict):
            raise ConfigError("'training' must be a mapping")
        ev = d.get("eval_dataset")
        return cls(experiment=name, dataset=DatasetDescriptor.from_dict(d["dataset"], base_dir),
                   training=TrainingConfig.from_dict(training),
                   eval_dataset=DatasetDescriptor.from_dict(ev, base_dir) if ev else None,
                   task_net=path(d.get("task_net")), pretrained=path(d.get("pretrained")))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        cfg = cls.from_dict(load_yaml(path), path.parent.resolve())
        cfg.source = path
        return cfg

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "dataset": asdict(self.dataset),
                "eval_dataset": asdict(self.eval_dataset) if self.eval_dataset else None,
                "task_net": self.task_net, "pretrained": self.pretrained, "training": self.training.to_dict()}


def default_config_text(preset: str = "toy") -> str:
    """A complete config with every field at its default value."""
    if preset == "toy":
        training = TrainingConfig.toy()
    elif preset == "full":
        training = TrainingConfig()
    else:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = ExperimentConfig(
        experiment=f"{preset}-experiment",
        dataset=DatasetDescriptor(root="data/train"),
        eval_dataset=DatasetDescriptor(root="data/val"),
        training=training,
    )
    header = ("# vcmlab experiment config. Relative paths resolve against this file's directory.\n"
              "# task_net: null selects the bundled toy segmenter; pretrained: codec checkpoint for finetune.\n")
    return header + yaml.safe_dump(cfg.to_dict(), sort_keys=False)
