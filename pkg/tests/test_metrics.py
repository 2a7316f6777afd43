import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from vcmlab.errors import DataError, ShapeMismatchError
from vcmlab.evaluation import (ap_from_matches, average_precision_per_class, match_instances, miou, ms_ssim, psnr,
                               semantic_to_instances, wap)
from vcmlab.evaluation.metrics import ms_ssim_scales, wap_from_ap
from vcmlab.task import InstanceAnnotations


# -- PSNR ---------------------------------------------------------------------

def test_psnr_examples():
    x = np.full((4, 4, 3), 0.5)
    assert psnr(x, x) == math.inf
    assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-9)
    zeros, ones = np.zeros((2, 2)), np.ones((2, 2))
    assert psnr(ones, zeros) == 0.0
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


@given(st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_psnr_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
    assert psnr(a, b) == psnr(b, a)


# -- MS-SSIM -------------------------------------------------------------------

def _img(seed, h=192, w=192):
    return torch.rand(1, 3, h, w, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_ms_ssim_matches_reference_implementation():
    from pytorch_msssim import ms_ssim as ref
    x = _img(0)
    y = (x + 0.1 * _img(1)).clamp(0, 1)
    assert ms_ssim(y, x) == pytest.approx(float(ref(y, x, data_range=1.0)), abs=1e-6)


def test_ms_ssim_identity_and_inversion():
    x = (_img(2) > 0.5).double() * 0.8 + 0.1
    assert ms_ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert ms_ssim(1 - x, x) < 0.5


def test_ms_ssim_luminance_offset():
    x = 0.2 + 0.6 * _img(3)
    s = ms_ssim(x + 0.05, x)
    assert abs(1.0 - s) <= 0.02


@given(st.integers(0, 2**16))
@settings(max_examples=10, deadline=None)
def test_ms_ssim_symmetric_and_bounded(seed):
    x, y = _img(seed, 64, 80), _img(seed + 1, 64, 80)
    y = 0.7 * x + 0.3 * y
    a, b = ms_ssim(x, y), ms_ssim(y, x)
    assert a == pytest.approx(b, abs=1e-12)
    assert a < 1.0 - 1e-9


def test_ms_ssim_scale_reduction():
    assert ms_ssim_scales(176, 300) == 5
    assert ms_ssim_scales(64, 64) == 3
    x = _img(5, 32, 40)
    assert 0 < ms_ssim(0.8 * x + 0.2 * _img(6, 32, 40), x) < 1
    with pytest.raises(ShapeMismatchError):
        ms_ssim_scales(8, 8)


# -- mIoU -----------------------------------------------------------------------

def test_miou_examples():
    gt = np.array([[0, 1], [1, 1]])
    assert miou(gt, gt, 2) == 1.0
    # class 2 never appears, so only classes 0 and 1 enter the mean
    assert miou(np.array([[1, 1, 1, 1]]), np.array([[1, 1, 0, 0]]), 3) == pytest.approx(0.5 * (0.5 + 0.0))


def test_miou_one_class_half_overlap():
    pred = np.array([[1, 1, 1, 0]])
    gt = np.array([[255, 1, 1, 1]])
    # pred ∩ gt = 2, union = 3 on valid pixels; class 0 absent from gt
    assert miou(pred, gt, 2) == pytest.approx(2 / 3)
    pred = np.array([[1, 1, 0, 0, 1, 1]])
    gt = np.array([[1, 1, 1, 1, 255, 255]])
    assert miou(pred, gt, 2) == pytest.approx(0.5)


def test_miou_errors():
    with pytest.raises(DataError):
        miou(np.zeros((2, 2)), np.full((2, 2), 255), 2)
    with pytest.raises(ShapeMismatchError):
        miou(np.zeros((2, 2)), np.zeros((2, 3)), 2)


@given(st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_miou_traversal_order_invariant(seed):
    rng = np.random.default_rng(seed)
    preds = [rng.integers(0, 4, (6, 7)) for _ in range(5)]
    gts = [rng.integers(0, 4, (6, 7)) for _ in range(5)]
    perm = rng.permutation(5)
    assert miou(preds, gts, 4) == miou([preds[i] for i in perm], [gts[i] for i in perm], 4)


# -- wAP ------------------------------------------------------------------------

def _inst(masks, labels, scores=None):
    masks = torch.as_tensor(np.asarray(masks, dtype=bool))
    return InstanceAnnotations(torch.zeros(len(labels), 4), torch.as_tensor(labels, dtype=torch.int64), masks,
                               None if scores is None else torch.as_tensor(scores, dtype=torch.float64))


def _blobs(n, size=16):
    masks = np.zeros((n, size, size * n), dtype=bool)
    for k in range(n):
        masks[k, 2:12, size * k + 2:size * k + 12] = True
    return masks


def test_wap_weighted_mean_example():
    assert wap_from_ap(np.array([1.0, 0.0]), np.array([3, 1])) == 0.75
    assert wap_from_ap(np.array([1.0, 0.0]), np.array([3, 1]), class_weights=[1, 1]) == 0.5


def test_wap_two_classes_from_matching():
    gt_masks = _blobs(4)
    gt = _inst(gt_masks, [0, 0, 0, 1])
    # class 0 found perfectly, class 1 missed entirely (prediction lands on empty space)
    wrong = np.zeros_like(gt_masks[:1])
    wrong[0, 13:16, :3] = True
    pred = _inst(np.concatenate([gt_masks[:3], wrong]), [0, 0, 0, 1], [0.9, 0.8, 0.7, 0.6])
    assert wap([pred], [gt], num_classes=2) == pytest.approx(0.75)


def test_wap_perfect_is_one_regardless_of_weights():
    gt = _inst(_blobs(3), [0, 1, 1])
    for w in (None, [1, 1], [5, 0.1]):
        assert wap([gt], [gt], class_weights=w, num_classes=2) == pytest.approx(1.0)


def test_uniform_weights_give_map():
    rng = np.random.default_rng(0)
    gt_masks = _blobs(5)
    gt = _inst(gt_masks, [0, 0, 1, 1, 1])
    noisy = gt_masks & (rng.random(gt_masks.shape) > 0.35)
    pred = _inst(noisy, [0, 0, 1, 1, 1], [0.9, 0.3, 0.8, 0.5, 0.2])
    ap, _ = average_precision_per_class([pred], [gt], 2)
    assert wap([pred], [gt], class_weights=[1, 1], num_classes=2) == pytest.approx(float(np.nanmean(ap)))


def test_wap_empty_ground_truth():
    with pytest.raises(DataError):
        wap([_inst(_blobs(1), [0])], [InstanceAnnotations()], num_classes=1)


def test_ap_pooling_and_order_invariance():
    rng = np.random.default_rng(1)
    preds, gts = [], []
    for _ in range(4):
        m = _blobs(3)
        gts.append(_inst(m, [0, 1, 1]))
        preds.append(_inst(m & (rng.random(m.shape) > 0.3), [0, 1, 1], rng.random(3)))
    a = average_precision_per_class(preds, gts, 2)
    b = average_precision_per_class(preds[::-1], gts[::-1], 2)
    np.testing.assert_array_equal(a[0], b[0])
    # pooling per-image match records equals matching all images at once
    matches = [match_instances(p, g, 2) for p, g in zip(preds, gts)]
    np.testing.assert_array_equal(ap_from_matches(matches, 2)[0], a[0])


def test_semantic_to_instances_components():
    labels = np.zeros((20, 20), dtype=np.int64)
    labels[1:6, 1:6] = 1
    labels[10:15, 10:15] = 1
    labels[1:6, 12:18] = 2
    labels[18, 18] = 2  # below min_area
    inst = semantic_to_instances(labels)
    assert sorted(inst.labels.tolist()) == [1, 1, 2]
    assert inst.masks.sum().item() == 25 + 25 + 30
