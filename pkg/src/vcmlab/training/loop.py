"""Pretraining and task-driven finetuning loops."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..codec import HyperpriorCodec, save_codec
from ..datasets import Sequence, SequenceDataset
from ..errors import ConfigError, DataError, EmptySequenceError, FrozenViolationError
from ..task import FrozenNetworkHandle, LabelMap, assert_frozen
from .config import TrainingConfig
from .losses import distortion_feature, distortion_gt, distortion_mse, distortion_pseudo_gt, rd_loss

log = logging.getLogger(__name__)


def sample_frame_index(seq: Sequence, rng: np.random.Generator, mode: str) -> int:
    if len(seq) == 0:
        raise EmptySequenceError("cannot sample from an empty sequence")
    if mode == "labeled_only":
        return seq.labeled_index
    if mode == "random_frame":
        return int(rng.integers(len(seq)))
    raise ConfigError(f"unknown frame mode {mode!r}")


def sample_training_frame(seq: Sequence, rng: np.random.Generator, mode: str) -> np.ndarray:
    """The labeled frame, or a frame drawn uniformly from the whole sequence."""
    return seq.frames[sample_frame_index(seq, rng, mode)]


def _to_tensor(frames: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(frames)).permute(0, 3, 1, 2).float().div_(255.0)


def epoch_batches(dataset: SequenceDataset, rng: np.random.Generator, config: TrainingConfig, with_labels: bool):
    """One pass over the sequences in random order, one frame per sequence.

    Yields ``(images, labels)``; ``labels`` is None unless requested, and
    annotations are only touched when requested.
    """
    order = rng.permutation(len(dataset))
    for start in range(0, len(order), config.batch_size):
        crops, labels = [], []
        for i in order[start:start + config.batch_size]:
            seq = dataset.sequences[i]
            frame = sample_training_frame(seq, rng, config.frame_mode)
            h, w = frame.shape[:2]
            c = min(config.crop_size, h, w)
            oy, ox = rng.integers(0, h - c + 1), rng.integers(0, w - c + 1)
            crops.append(frame[oy:oy + c, ox:ox + c])
            if with_labels:
                labels.append(dataset.annotation(i)[oy:oy + c, ox:ox + c])
        x = _to_tensor(crops)
        y = torch.from_numpy(np.stack(labels)).long() if with_labels else None
        yield x, y


@dataclass
class TrainResult:
    model: HyperpriorCodec
    lam: float
    strategy: str
    iterations: int
    history: list = field(default_factory=list)
    checkpoint: Path | None = None


def _distortion(strategy, x_hat, x, labels, net, config):
    if strategy == "mse":
        return distortion_mse(x_hat, x)
    if strategy == "gt":
        return distortion_gt(x_hat, LabelMap(labels), net)
    if strategy == "feature":
        return distortion_feature(x_hat, x, net, config.cut_point)
    return distortion_pseudo_gt(x_hat, x, net, config.confidence_threshold)


class _Trainer:
    def __init__(self, model, config: TrainingConfig, strategy: str, lam: float, net=None, log_path=None):
        self.model = model
        self.config = config
        self.strategy = strategy
        self.lam = lam
        self.net = net
        self.opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        self.gen = torch.Generator().manual_seed(config.seed)
        self.history = []
        self.log_path = Path(log_path) if log_path else None
        self.step = 0

    def train_step(self, x, labels):
        self.model.train()
        out = self.model(x, self.gen)
        dist = _distortion(self.strategy, out["x_hat"], x, labels, self.net, self.config)
        loss = rd_loss(out["bpp"], dist, self.lam, self.strategy)
        self.opt.zero_grad(set_to_none=True)
        loss.total.backward()
        self.opt.step()
        self.step += 1
        r, d = out["bpp"].item(), dist.item()
        record = {"step": self.step, "R": r, "D": d, "total": r + self.lam * d, "lam": self.lam,
                  "strategy": self.strategy}
        self.history.append(record)
        if self.log_path:
            with self.log_path.open("a") as fh:
                fh.write(json.dumps(record) + "\n")
        return record


def pretrain(model: HyperpriorCodec, dataset: SequenceDataset, config: TrainingConfig, out_dir=None) -> TrainResult:
    """Run exactly ``config.pretrain_iterations`` steps of MSE rate-distortion training."""
    if config.strategy != "mse":
        raise ConfigError(f"pretraining uses the mse strategy, config has {config.strategy!r}")
    if len(dataset) == 0:
        raise DataError("empty dataset")
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    trainer = _Trainer(model, config, "mse", config.lam, log_path=out_dir / "pretrain_log.jsonl" if out_dir else None)
    while trainer.step < config.pretrain_iterations:
        for x, _ in epoch_batches(dataset, rng, config, with_labels=False):
            rec = trainer.train_step(x, None)
            if out_dir and config.checkpoint_every and trainer.step % config.checkpoint_every == 0:
                save_codec(out_dir / f"pretrain_step{trainer.step:07d}.pt", model, iterations=trainer.step,
                           lam=config.lam, strategy="mse")
            if trainer.step % 100 == 0:
                log.info("pretrain step %d R=%.4f D=%.5f", rec["step"], rec["R"], rec["D"])
            if trainer.step >= config.pretrain_iterations:
                break
    model.eval()
    ckpt = None
    if out_dir:
        ckpt = save_codec(out_dir / "pretrain.pt", model, iterations=trainer.step, lam=config.lam, strategy="mse",
                          final_loss=trainer.history[-1]["total"] if trainer.history else None)
    return TrainResult(model, config.lam, "mse", trainer.step, trainer.history, ckpt)


def finetune(model: HyperpriorCodec, dataset: SequenceDataset, net: FrozenNetworkHandle, config: TrainingConfig,
             out_dir=None) -> list[TrainResult]:
    """Finetune a copy of ``model`` for every lambda of the ladder.

    The task network is checked against its load-time fingerprint before
    and after every run.
    """
    strategy = config.strategy
    if strategy not in ("gt", "feature", "pseudo_gt"):
        raise ConfigError(f"finetuning needs a task strategy, got {strategy!r}")
    if len(dataset) == 0:
        raise DataError("empty dataset")
    need_labels = strategy == "gt"
    if need_labels:
        for i in range(len(dataset)):
            dataset.annotation(i)  # raises MissingAnnotationError
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for lam in config.lambda_ladder:
        if not assert_frozen(net):
            raise FrozenViolationError("task network weights differ from their load-time fingerprint")
        m = copy.deepcopy(model)
        rng = np.random.default_rng(config.seed)
        tag = f"{strategy}_{config.frame_mode}_lam{lam:g}"
        trainer = _Trainer(m, config, strategy, lam, net, log_path=out_dir / f"{tag}_log.jsonl" if out_dir else None)
        for epoch in range(config.finetune_epochs):
            for x, labels in epoch_batches(dataset, rng, config, with_labels=need_labels):
                trainer.train_step(x, labels)
            log.info("%s epoch %d R=%.4f D=%.5f", tag, epoch, trainer.history[-1]["R"], trainer.history[-1]["D"])
        if not assert_frozen(net):
            raise FrozenViolationError(f"task network changed during the {tag} run")
        m.eval()
        ckpt = None
        if out_dir:
            ckpt = save_codec(out_dir / f"{tag}.pt", m, iterations=trainer.step, lam=lam, strategy=strategy,
                              frame_mode=config.frame_mode, epochs=config.finetune_epochs)
        results.append(TrainResult(m, lam, strategy, trainer.step, trainer.history, ckpt))
    return results
