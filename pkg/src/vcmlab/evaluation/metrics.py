"""Image and task metrics: PSNR, MS-SSIM, mIoU and weighted AP."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from ..errors import DataError, ShapeMismatchError
from ..task.predictions import IGNORE_INDEX, InstanceAnnotations

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN, _WIN_SIGMA = 11, 1.5
_K1, _K2 = 0.01, 0.03


def _to_nchw(img) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(img) if not isinstance(img, torch.Tensor) else img).to(torch.float64)
    if t.dim() == 3:  # H, W, C
        t = t.permute(2, 0, 1)[None]
    return t


def psnr(x_hat, x, peak: float = 1.0) -> float:
    """PSNR in dB; ``math.inf`` for identical inputs."""
    a, b = np.asarray(x_hat, dtype=np.float64), np.asarray(x, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(dtype) -> torch.Tensor:
    c = torch.arange(_WIN, dtype=dtype) - _WIN // 2
    g = torch.exp(-(c ** 2) / (2 * _WIN_SIGMA ** 2))
    return g / g.sum()


def _blur(x: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    C = x.shape[1]
    x = F.conv2d(x, g.view(1, 1, 1, -1).repeat(C, 1, 1, 1), groups=C)
    return F.conv2d(x, g.view(1, 1, -1, 1).repeat(C, 1, 1, 1), groups=C)


def _ssim_terms(x, y, g, data_range):
    c1, c2 = (_K1 * data_range) ** 2, (_K2 * data_range) ** 2
    mu_x, mu_y = _blur(x, g), _blur(y, g)
    sxx = _blur(x * x, g) - mu_x ** 2
    syy = _blur(y * y, g) - mu_y ** 2
    sxy = _blur(x * y, g) - mu_x * mu_y
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    return (lum * cs).flatten(2).mean(-1), cs.flatten(2).mean(-1)


def ms_ssim_scales(height: int, width: int) -> int:
    """Number of scales such that the coarsest one still fits the 11-tap window."""
    side = min(height, width)
    for s in range(len(MS_SSIM_WEIGHTS), 0, -1):
        if side / 2 ** (s - 1) >= _WIN:
            return s
    raise ShapeMismatchError(f"image {height}x{width} smaller than the {_WIN}-pixel window")


def ms_ssim(x_hat, x, data_range: float = 1.0) -> float:
    """Multi-scale SSIM on RGB, averaged over channels.

    Five scales with the usual exponents; smaller images use fewer scales
    with the leading exponents renormalized to sum to one.
    """
    a, b = _to_nchw(x_hat), _to_nchw(x)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    levels = ms_ssim_scales(*a.shape[-2:])
    w = torch.tensor(MS_SSIM_WEIGHTS[:levels], dtype=torch.float64)
    w = w / w.sum()
    g = _gaussian_window(torch.float64)
    factors = []
    for i in range(levels):
        ssim_val, cs = _ssim_terms(a, b, g, data_range)
        if i < levels - 1:
            factors.append(torch.relu(cs))
            pad = [s % 2 for s in a.shape[2:]]
            a = F.avg_pool2d(a, 2, padding=pad)
            b = F.avg_pool2d(b, 2, padding=pad)
    factors.append(torch.relu(ssim_val))
    stacked = torch.stack(factors, dim=0)  # levels, N, C
    val = torch.prod(stacked ** w.view(-1, 1, 1), dim=0)
    return float(val.mean())


# -- semantic segmentation -------------------------------------------------------

def confusion_matrix(pred, gt, num_classes: int, ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"{pred.shape} vs {gt.shape}")
    valid = gt != ignore_index
    idx = gt[valid].astype(np.int64) * num_classes + np.clip(pred[valid].astype(np.int64), 0, num_classes - 1)
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def miou_from_confusion(conf: np.ndarray) -> float:
    if conf.sum() == 0:
        raise DataError("no valid (non-ignored) pixels")
    inter = np.diag(conf).astype(np.float64)
    gt_count = conf.sum(axis=1)
    union = gt_count + conf.sum(axis=0) - inter
    present = gt_count > 0
    return float(np.mean(inter[present] / union[present]))


def miou(pred_labels, gt_labels, num_classes: int, ignore_index: int = IGNORE_INDEX) -> float:
    """Mean IoU over classes present in the ground truth.

    Accepts a single label map pair or two equal-length sequences of maps;
    pixel counts are pooled over all images before the ratio is taken.
    """
    if isinstance(pred_labels, (list, tuple)):
        conf = sum(confusion_matrix(p, g, num_classes, ignore_index) for p, g in zip(pred_labels, gt_labels))
    else:
        conf = confusion_matrix(pred_labels, gt_labels, num_classes, ignore_index)
    return miou_from_confusion(conf)


# -- instance segmentation -------------------------------------------------------

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
_RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def _mask_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.reshape(len(a), -1).astype(np.float64)
    b = b.reshape(len(b), -1).astype(np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def match_instances(pred: InstanceAnnotations, gt: InstanceAnnotations, num_classes: int) -> dict:
    """Greedy per-image matching at every IoU threshold.

    Returns ``{class: {"n_gt", "scores", "tp"}}`` where ``tp[k][t]`` flags
    detection ``k`` (in descending score order) as a true positive at
    threshold ``t``. The result is JSON-serializable and pools across
    images without loss.
    """
    out = {}
    p_labels, g_labels = np.asarray(pred.labels), np.asarray(gt.labels)
    for c in range(num_classes):
        pm, gm = p_labels == c, g_labels == c
        if not pm.any() and not gm.any():
            continue
        n_p = int(pm.sum())
        scores = np.ones(n_p) if pred.scores is None else np.asarray(pred.scores, dtype=np.float64)[pm]
        order = np.argsort(-scores, kind="stable")
        scores = scores[order]
        if n_p and gm.any():
            ious = _mask_iou(np.asarray(pred.masks)[pm][order], np.asarray(gt.masks)[gm])
        else:
            ious = np.zeros((n_p, int(gm.sum())))
        tp = np.zeros((n_p, len(IOU_THRESHOLDS)), dtype=int)
        for t, thr in enumerate(IOU_THRESHOLDS):
            taken = np.zeros(ious.shape[1], dtype=bool)
            for k in range(n_p):
                cand = np.where(~taken & (ious[k] >= thr), ious[k], -1.0)
                if cand.size and cand.max() >= 0:
                    j = int(np.argmax(cand))
                    taken[j] = True
                    tp[k, t] = 1
        out[str(c)] = {"n_gt": int(gm.sum()), "scores": scores.tolist(), "tp": tp.tolist()}
    return out


def _interpolated_ap(scores: np.ndarray, tp: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return math.nan
    if not len(tp):
        return 0.0
    order = np.argsort(-scores, kind="stable")
    ctp = np.cumsum(tp[order])
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_POINTS, side="left")
    return float(np.mean([precision[i] if i < len(precision) else 0.0 for i in idx]))


def ap_from_matches(matches: Sequence[dict], num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class AP (mean over IoU 0.50:0.05:0.95, 101-point interpolation) and GT counts."""
    ap = np.full(num_classes, np.nan)
    counts = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_classes):
        entries = [m[str(c)] for m in matches if str(c) in m]
        n_gt = sum(e["n_gt"] for e in entries)
        counts[c] = n_gt
        if n_gt == 0:
            continue
        scores = np.array([s for e in entries for s in e["scores"]], dtype=np.float64)
        tp = np.array([row for e in entries for row in e["tp"]], dtype=np.float64).reshape(-1, len(IOU_THRESHOLDS))
        ap[c] = float(np.mean([_interpolated_ap(scores, tp[:, t], n_gt) for t in range(len(IOU_THRESHOLDS))]))
    return ap, counts


def average_precision_per_class(preds: Sequence[InstanceAnnotations], gts: Sequence[InstanceAnnotations],
                                num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    if len(preds) != len(gts):
        raise ShapeMismatchError("prediction and ground-truth image counts differ")
    return ap_from_matches([match_instances(p, g, num_classes) for p, g in zip(preds, gts)], num_classes)


def weighted_mean(values: Iterable[float], weights: Iterable[float]) -> float:
    v = np.asarray(list(values), dtype=np.float64)
    w = np.asarray(list(weights), dtype=np.float64)
    keep = (w > 0) & ~np.isnan(v)
    if not keep.any():
        raise DataError("no class with positive weight")
    return float(np.sum(w[keep] * v[keep]) / np.sum(w[keep]))


def wap(pred_instances: Sequence[InstanceAnnotations], gt_instances: Sequence[InstanceAnnotations],
        class_weights=None, num_classes: int | None = None) -> float:
    """Class-weighted AP; by default each class is weighted by its GT instance count."""
    if num_classes is None:
        labels = [int(l) for g in gt_instances for l in g.labels] + [int(l) for p in pred_instances for l in p.labels]
        num_classes = max(labels, default=-1) + 1
    ap, counts = average_precision_per_class(pred_instances, gt_instances, num_classes)
    return wap_from_ap(ap, counts, class_weights)


def wap_from_ap(ap: np.ndarray, counts: np.ndarray, class_weights=None) -> float:
    if counts.sum() == 0:
        raise DataError("ground truth contains no instances")
    weights = counts if class_weights is None else np.asarray(class_weights, dtype=np.float64) * (counts > 0)
    return weighted_mean(ap, weights)


def semantic_to_instances(labels, probs=None, min_area: int = 8, background: int = 0) -> InstanceAnnotations:
    """Connected components of each foreground class as instances.

    With ``probs`` (K, H, W) each component is scored by its mean class
    probability; otherwise scores are 1.
    """
    labels = np.asarray(labels)
    masks, cls, scores = [], [], []
    for c in np.unique(labels):
        if c == background or c == IGNORE_INDEX:
            continue
        comp, n = ndimage.label(labels == c)
        for k in range(1, n + 1):
            m = comp == k
            if m.sum() < min_area:
                continue
            masks.append(m)
            cls.append(int(c))
            scores.append(float(np.asarray(probs)[c][m].mean()) if probs is not None else 1.0)
    h, w = labels.shape
    boxes = []
    for m in masks:
        ys, xs = np.nonzero(m)
        boxes.append([xs.min(), ys.min(), xs.max() + 1, ys.max() + 1])
    return InstanceAnnotations(
        boxes=torch.tensor(boxes, dtype=torch.float64).reshape(-1, 4),
        labels=torch.tensor(cls, dtype=torch.int64),
        masks=torch.from_numpy(np.stack(masks)) if masks else torch.zeros(0, h, w, dtype=torch.bool),
        scores=torch.tensor(scores, dtype=torch.float64),
        provenance="pseudo" if probs is not None else "ground_truth",
    )
