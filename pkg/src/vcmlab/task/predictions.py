"""Task predictions, annotation schemas, hardening and the task loss.

Ground-truth and pseudo annotations share one schema per task; only the
``provenance`` tag differs, and nothing downstream reads it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import torch
import torch.nn.functional as F

from ..errors import SchemaMismatchError

IGNORE_INDEX = 255
Provenance = Literal["ground_truth", "pseudo"]


@dataclass
class SemanticPredictions:
    logits: torch.Tensor  # (B, K, H, W) raw class scores

    def detach(self) -> "SemanticPredictions":
        return SemanticPredictions(self.logits.detach())


@dataclass
class LabelMap:
    labels: torch.Tensor  # (B, H, W) int64, IGNORE_INDEX for unlabeled pixels
    provenance: Provenance = "ground_truth"


@dataclass
class InstancePredictions:
    """Raw instance output for one image."""

    boxes: torch.Tensor         # (n, 4) x0, y0, x1, y1
    class_scores: torch.Tensor  # (n, K) probabilities
    masks: torch.Tensor         # (n, H, W) mask probabilities

    def detach(self) -> "InstancePredictions":
        return InstancePredictions(self.boxes.detach(), self.class_scores.detach(), self.masks.detach())


@dataclass
class InstanceAnnotations:
    boxes: torch.Tensor = field(default_factory=lambda: torch.zeros(0, 4))
    labels: torch.Tensor = field(default_factory=lambda: torch.zeros(0, dtype=torch.int64))
    masks: torch.Tensor = field(default_factory=lambda: torch.zeros(0, 0, 0, dtype=torch.bool))
    scores: torch.Tensor | None = None  # confidence, kept for pseudo annotations
    provenance: Provenance = "ground_truth"

    def __len__(self):
        return len(self.labels)


def harden_predictions(p, confidence_threshold: float = 0.5):
    """Turn raw predictions into annotation form (provenance ``pseudo``).

    Semantic: per-pixel argmax, ties resolved to the lowest class index.
    Instance: keep instances whose top class score is at least the
    threshold, label them with that class and binarize masks at 0.5.
    """
    if isinstance(p, SemanticPredictions):
        return LabelMap(torch.argmax(p.logits.detach(), dim=1), provenance="pseudo")
    if isinstance(p, InstancePredictions):
        scores, labels = p.class_scores.detach().max(dim=1)
        keep = scores >= confidence_threshold
        return InstanceAnnotations(boxes=p.boxes.detach()[keep], labels=labels[keep],
                                   masks=p.masks.detach()[keep] >= 0.5, scores=scores[keep], provenance="pseudo")
    raise SchemaMismatchError(f"cannot harden {type(p).__name__}")


def as_raw(ann, num_classes: int, confidence: float = 1.0):
    """Raw-prediction form of an annotation (one-hot scores / probabilities)."""
    if isinstance(ann, LabelMap):
        onehot = F.one_hot(ann.labels.clamp(max=num_classes - 1), num_classes).permute(0, 3, 1, 2)
        return SemanticPredictions(onehot.to(torch.float64) * confidence)
    if isinstance(ann, InstanceAnnotations):
        scores = F.one_hot(ann.labels, num_classes).to(torch.float64) * confidence
        return InstancePredictions(ann.boxes.to(torch.float64), scores, ann.masks.to(torch.float64))
    raise SchemaMismatchError(f"cannot convert {type(ann).__name__}")


def _mask_iou(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    # pred (n, H, W) soft, gt (m, H, W) bool -> (n, m)
    p = (pred >= 0.5).flatten(1).to(torch.float64)
    g = gt.flatten(1).to(torch.float64)
    inter = p @ g.T
    union = p.sum(1, keepdim=True) + g.sum(1)[None, :] - inter
    return torch.where(union > 0, inter / union.clamp(min=1), torch.zeros_like(inter))


def _instance_loss(p: InstancePredictions, ann: InstanceAnnotations) -> torch.Tensor:
    if len(ann) == 0 or len(p.class_scores) == 0:
        return (p.class_scores.sum() + p.masks.sum()) * 0.0
    match = _mask_iou(p.masks.detach(), ann.masks).argmax(dim=0)
    eps = 1e-7
    cls = -torch.log(p.class_scores[match, ann.labels].clamp(min=eps))
    m = p.masks[match].clamp(eps, 1 - eps)
    target = ann.masks.to(m.dtype)
    bce = -(target * torch.log(m) + (1 - target) * torch.log(1 - m)).flatten(1).mean(1)
    return (cls + bce).mean()


def task_loss(p_raw, ann) -> torch.Tensor:
    """The loss the analysis network was trained with, against ``ann``.

    Semantic segmentation: mean per-pixel cross-entropy over non-ignored
    pixels. Instance segmentation: class cross-entropy plus mask BCE, each
    annotation matched to its best-overlapping prediction.
    """
    if isinstance(p_raw, SemanticPredictions) and isinstance(ann, LabelMap):
        if p_raw.logits.shape[0] != ann.labels.shape[0] or p_raw.logits.shape[2:] != ann.labels.shape[1:]:
            raise SchemaMismatchError(f"logits {tuple(p_raw.logits.shape)} vs labels {tuple(ann.labels.shape)}")
        return F.cross_entropy(p_raw.logits, ann.labels, ignore_index=IGNORE_INDEX)
    if isinstance(p_raw, InstancePredictions) and isinstance(ann, InstanceAnnotations):
        return _instance_loss(p_raw, ann)
    raise SchemaMismatchError(f"{type(p_raw).__name__} cannot be scored against {type(ann).__name__}")
