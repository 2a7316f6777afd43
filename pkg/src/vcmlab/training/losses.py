"""Rate-distortion objective and the four distortion measures."""
from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigError, MissingAnnotationError, ShapeMismatchError
from ..task import FrozenNetworkHandle, harden_predictions, task_loss


@dataclass
class RDLossBreakdown:
    rate: float | torch.Tensor
    distortion: float | torch.Tensor
    lam: float
    total: float | torch.Tensor
    strategy: str = ""


def rd_loss(rate, distortion, lam: float, strategy: str = "") -> RDLossBreakdown:
    """``total = rate + lam * distortion``."""
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    return RDLossBreakdown(rate, distortion, lam, rate + lam * distortion, strategy)


def distortion_mse(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if x_hat.shape != x.shape:
        raise ShapeMismatchError(f"{tuple(x_hat.shape)} vs {tuple(x.shape)}")
    return torch.mean((x_hat - x) ** 2)


def distortion_gt(x_hat: torch.Tensor, annotations, net: FrozenNetworkHandle) -> torch.Tensor:
    """Task loss of the frozen network on ``x_hat`` against ``annotations``."""
    if annotations is None:
        raise MissingAnnotationError("ground-truth distortion needs annotations")
    return task_loss(net.predict(x_hat), annotations)


def distortion_feature(x_hat: torch.Tensor, x: torch.Tensor, net: FrozenNetworkHandle, cut_point: str) -> torch.Tensor:
    """Sum (not mean) of squared feature differences; the target branch is detached."""
    if x_hat.shape != x.shape:
        raise ShapeMismatchError(f"{tuple(x_hat.shape)} vs {tuple(x.shape)}")
    with torch.no_grad():
        psi = net.extract_features(x, cut_point)
    psi_hat = net.extract_features(x_hat, cut_point)
    return torch.sum((psi_hat - psi) ** 2)


def pseudo_annotations(x: torch.Tensor, net: FrozenNetworkHandle, threshold: float = 0.5):
    with torch.no_grad():
        return harden_predictions(net.predict(x), threshold)


def distortion_pseudo_gt(x_hat: torch.Tensor, x: torch.Tensor, net: FrozenNetworkHandle, threshold: float = 0.5) -> torch.Tensor:
    """Task loss on ``x_hat`` against the network's own hardened output on ``x``.

    Identical to :func:`distortion_gt` with the labels swapped; no
    annotation is ever read.
    """
    return distortion_gt(x_hat, pseudo_annotations(x, net, threshold), net)
