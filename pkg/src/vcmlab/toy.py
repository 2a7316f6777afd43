"""Small end-to-end experiment on the synthetic moving-shapes data.

One shared MSE pretraining run feeds three ladders:

* ``mse``: the anchor, continued MSE training at several rate trade-offs;
* ``pseudo_gt_labeled_only`` and ``pseudo_gt_random_frame``: task-driven
  finetuning with pseudo labels on the labeled frame only, or on a frame
  drawn from anywhere in each sequence.

Every ladder gets the same number of optimizer steps per model and is
evaluated through the real bitstream on held-out sequences. The three
ladders are trained once per finetune seed, all from the same pretrained
model, so comparisons can be averaged over seeds.
"""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .codec import HyperpriorCodec, NetworkConfig, load_codec, save_codec
from .datasets import make_shapes_dataset
from .evaluation import RDCurve, RDPoint, bd_quality, evaluate_model
from .task import FrozenNetworkHandle, load_task_net
from .training import TrainingConfig, finetune, pretrain

log = logging.getLogger(__name__)


@dataclass
class ToySettings:
    train_sequences: int = 64
    val_sequences: int = 96
    train_seed: int = 1
    val_seed: int = 999
    # the task-driven gain only shows once the MSE base has converged; 4k steps was too short
    pretrain_iterations: int = 16000
    pretrain_lam: float = 512.0
    pretrain_frame_mode: str = "random_frame"
    anchor_lams: tuple = (1024.0, 512.0, 256.0, 128.0)
    ladder: tuple = (16.0, 8.0, 4.0, 2.0)
    finetune_epochs: int = 60
    batch_size: int = 4
    crop_size: int = 64
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 2e-4
    seed: int = 0
    # one ladder set per seed; a single run's BD mIoU moves by about 1.5 pp with the seed alone
    finetune_seeds: tuple = (0, 1, 2)

    def steps_per_model(self) -> int:
        per_epoch = -(-self.train_sequences // self.batch_size)
        return per_epoch * self.finetune_epochs


@dataclass
class ToyResult:
    runs: dict[int, dict[str, RDCurve]]
    baseline: RDPoint
    settings: ToySettings
    seconds: dict = field(default_factory=dict)

    @property
    def curves(self) -> dict[str, RDCurve]:
        """Curves of the first finetune seed."""
        return self.runs[self.settings.finetune_seeds[0]]

    def mean_bd_quality(self, anchor: str, test: str, metric: str) -> float:
        return float(np.mean([bd_quality(c[anchor], c[test], metric) for c in self.runs.values()]))

    def save(self, path) -> Path:
        path = Path(path)
        body = {"settings": asdict(self.settings), "seconds": self.seconds,
                "baseline": json.loads(self.baseline.to_json()),
                "runs": {str(seed): {k: [json.loads(p.to_json()) for p in c.points] for k, c in curves.items()}
                         for seed, curves in self.runs.items()}}
        path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ToyResult":
        body = json.loads(Path(path).read_text())
        s = body["settings"]
        settings = ToySettings(**{**s, **{k: tuple(s[k]) for k in ("anchor_lams", "ladder", "finetune_seeds")}})
        runs = {int(seed): {k: RDCurve(k, [RDPoint.from_dict(p) for p in pts]) for k, pts in curves.items()}
                for seed, curves in body["runs"].items()}
        return cls(runs, RDPoint.from_dict(body["baseline"]), settings, body.get("seconds", {}))


def _config(s: ToySettings, **kw) -> TrainingConfig:
    return TrainingConfig.toy(batch_size=s.batch_size, crop_size=s.crop_size, seed=s.seed, **kw)


def pretrain_checkpoint(s: ToySettings, out_dir) -> Path:
    """Where :func:`shared_pretrain` caches its model inside ``out_dir``."""
    tag = (f"pretrain_n{s.train_sequences}_s{s.train_seed}_it{s.pretrain_iterations}_lam{s.pretrain_lam:g}"
           f"_{s.pretrain_frame_mode}_seed{s.seed}")
    return Path(out_dir) / f"{tag}.pt"


def shared_pretrain(s: ToySettings, train, out_dir: Path | None = None) -> HyperpriorCodec:
    ckpt = pretrain_checkpoint(s, out_dir) if out_dir else None
    if ckpt and ckpt.exists():
        return load_codec(ckpt)[0]
    torch.manual_seed(s.seed)
    model = HyperpriorCodec(NetworkConfig.toy())
    cfg = _config(s, lam=s.pretrain_lam, pretrain_iterations=s.pretrain_iterations, learning_rate=s.learning_rate,
                  frame_mode=s.pretrain_frame_mode)
    pretrain(model, train, cfg)
    if ckpt:
        save_codec(ckpt, model, lam=s.pretrain_lam, iterations=s.pretrain_iterations)
    return model


def mse_ladder(s: ToySettings, base: HyperpriorCodec, train) -> list[tuple[float, HyperpriorCodec]]:
    """The anchor: continued MSE training, one model per anchor lambda, same step budget as finetuning."""
    models = []
    for lam in s.anchor_lams:
        m = copy.deepcopy(base)
        cfg = _config(s, lam=lam, pretrain_iterations=s.steps_per_model(), learning_rate=s.finetune_learning_rate)
        pretrain(m, train, cfg)
        models.append((lam, m))
    return models


def pseudo_gt_ladder(s: ToySettings, base: HyperpriorCodec, train, net: FrozenNetworkHandle,
                     frame_mode: str) -> list[tuple[float, HyperpriorCodec]]:
    cfg = _config(s, strategy="pseudo_gt", lambda_ladder=list(s.ladder), finetune_epochs=s.finetune_epochs,
                  frame_mode=frame_mode, learning_rate=s.finetune_learning_rate)
    return [(r.lam, r.model) for r in finetune(base, train.without_annotations(), net, cfg)]


def _curve(name: str, models, val, net) -> tuple[RDCurve, RDPoint]:
    points, baseline = [], None
    for lam, m in models:
        res = evaluate_model(m, val, net)
        res.point.lam = lam
        points.append(res.point)
        baseline = baseline or res.baseline
    return RDCurve(name, points), baseline


def run_toy_experiment(s: ToySettings | None = None, out_dir=None, net: FrozenNetworkHandle | None = None) -> ToyResult:
    """Run (or load from ``out_dir/toy_result.json``) the three-ladder experiment."""
    s = s or ToySettings()
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        cached = out_dir / "toy_result.json"
        if cached.exists():
            res = ToyResult.load(cached)
            if res.settings == s:
                return res
    net = net or load_task_net()
    train = make_shapes_dataset(s.train_sequences, seed=s.train_seed)
    val = make_shapes_dataset(s.val_sequences, seed=s.val_seed)
    seconds = {}
    t = time.perf_counter()
    base = shared_pretrain(s, train, out_dir)
    seconds["pretrain"] = time.perf_counter() - t
    runs, baseline = {}, None
    for seed in s.finetune_seeds:
        fs = replace(s, seed=seed)
        ladders = {}
        t = time.perf_counter()
        ladders["mse"] = mse_ladder(fs, base, train)
        seconds["mse"] = seconds.get("mse", 0.0) + time.perf_counter() - t
        for mode in ("labeled_only", "random_frame"):
            t = time.perf_counter()
            ladders[f"pseudo_gt_{mode}"] = pseudo_gt_ladder(fs, base, train, net, mode)
            seconds[f"pseudo_gt_{mode}"] = seconds.get(f"pseudo_gt_{mode}", 0.0) + time.perf_counter() - t
        t = time.perf_counter()
        runs[seed] = {}
        for name, models in ladders.items():
            runs[seed][name], b = _curve(name, models, val, net)
            baseline = baseline or b
        seconds["evaluate"] = seconds.get("evaluate", 0.0) + time.perf_counter() - t
    log.info("toy experiment timings: %s", seconds)
    res = ToyResult(runs, baseline, s, seconds)
    if out_dir:
        res.save(out_dir / "toy_result.json")
    return res
