"""Frozen analysis networks and the bundled toy segmentation model."""
from __future__ import annotations

from importlib import resources

import torch
import torch.nn.functional as F
from torch import nn

from ..checkpoint import read_checkpoint, save_checkpoint
from ..codec.model import state_fingerprint
from ..errors import ShapeMismatchError, UnknownCutPointError
from .predictions import SemanticPredictions

BUNDLED_TASK_NET = "toy_segnet.pt"


def _block(cin, cout, stride):
    return [nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False), nn.BatchNorm2d(cout), nn.ReLU()]


class ToySegNet(nn.Module):
    """Fully convolutional semantic segmenter: three stride-2 stages, a 1x1
    classifier on the deepest stage and a skip classifier on the first."""

    cut_points = ("stage1", "stage2", "stage3")

    def __init__(self, num_classes: int = 4, widths=(16, 32, 48)):
        super().__init__()
        self.num_classes = num_classes
        self.widths = tuple(widths)
        w1, w2, w3 = widths
        self.stage1 = nn.Sequential(*_block(3, w1, 2), *_block(w1, w1, 1))
        self.stage2 = nn.Sequential(*_block(w1, w2, 2), *_block(w2, w2, 1))
        self.stage3 = nn.Sequential(*_block(w2, w3, 2), *_block(w3, w3, 1))
        self.head = nn.Conv2d(w3, num_classes, 1)
        self.skip = nn.Conv2d(w1, num_classes, 1)

    def features(self, x: torch.Tensor, cut_point: str) -> torch.Tensor:
        if cut_point not in self.cut_points:
            raise UnknownCutPointError(cut_point)
        f = x - 0.5
        for name in self.cut_points:
            f = getattr(self, name)(f)
            if name == cut_point:
                return f

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f1 = self.stage1(x - 0.5)
        f3 = self.stage3(self.stage2(f1))
        logits = F.interpolate(self.head(f3), size=f1.shape[-2:], mode="bilinear", align_corners=False)
        logits = logits + self.skip(f1)
        return F.interpolate(logits, size=x.shape[-2:], mode="bilinear", align_corners=False)

    def config(self) -> dict:
        return {"arch": "toy_segnet", "num_classes": self.num_classes, "widths": list(self.widths),
                "cut_points": list(self.cut_points)}


class FrozenNetworkHandle:
    """A task network whose weights must not change while it is in use.

    Parameters have ``requires_grad`` disabled and the module stays in eval
    mode, so gradients reach the *input* but never the weights. The weight
    fingerprint is recorded at construction.
    """

    def __init__(self, net: nn.Module, config: dict | None = None):
        self.net = net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.config = dict(config or getattr(net, "config", lambda: {})())
        self.cut_points = tuple(self.config.get("cut_points", getattr(net, "cut_points", ())))
        self.fingerprint = state_fingerprint(self.net)

    def current_fingerprint(self) -> str:
        return state_fingerprint(self.net)

    def _check_input(self, x: torch.Tensor):
        if x.dim() != 4 or x.shape[1] != 3 or min(x.shape[-2:]) < 16:
            raise ShapeMismatchError(f"task network needs (B, 3, H>=16, W>=16) input, got {tuple(x.shape)}")

    def predict(self, x: torch.Tensor) -> SemanticPredictions:
        self._check_input(x)
        self.net.eval()
        return SemanticPredictions(self.net(x))

    def extract_features(self, x: torch.Tensor, cut_point: str) -> torch.Tensor:
        if cut_point not in self.cut_points:
            raise UnknownCutPointError(f"{cut_point!r} is not registered; known: {self.cut_points}")
        self._check_input(x)
        self.net.eval()
        return self.net.features(x, cut_point)

    def to(self, dtype: torch.dtype) -> "FrozenNetworkHandle":
        """Cast weights in place (e.g. float64 for gradient checks); the fingerprint is re-recorded."""
        self.net.to(dtype)
        self.fingerprint = state_fingerprint(self.net)
        return self


def predict(x: torch.Tensor, net: FrozenNetworkHandle) -> SemanticPredictions:
    return net.predict(x)


def extract_features(x: torch.Tensor, net: FrozenNetworkHandle, cut_point: str) -> torch.Tensor:
    return net.extract_features(x, cut_point)


def assert_frozen(net: FrozenNetworkHandle) -> bool:
    """True iff the weights still hash to the fingerprint recorded at load."""
    return net.current_fingerprint() == net.fingerprint


def build_task_net(config: dict) -> nn.Module:
    if config.get("arch") != "toy_segnet":
        raise ValueError(f"unsupported task network architecture {config.get('arch')!r}")
    return ToySegNet(config["num_classes"], config["widths"])


def save_task_net(path, net: ToySegNet, **meta):
    return save_checkpoint(path, "task_net", net.config(), net, meta)


def load_task_net(path=None) -> FrozenNetworkHandle:
    """Load a task-network checkpoint (the bundled toy segmenter by default)."""
    if path is None:
        path = resources.files("vcmlab.data") / BUNDLED_TASK_NET
    payload = read_checkpoint(path, kind="task_net")
    net = build_task_net(payload["config"])
    net.load_state_dict(payload["state_dict"])
    return FrozenNetworkHandle(net, payload["config"])
