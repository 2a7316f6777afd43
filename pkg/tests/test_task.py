import math

import pytest
import torch

from vcmlab.errors import SchemaMismatchError, ShapeMismatchError, UnknownCutPointError
from vcmlab.task import (FrozenNetworkHandle, InstanceAnnotations, InstancePredictions, LabelMap,
                         SemanticPredictions, ToySegNet, as_raw, assert_frozen, extract_features, harden_predictions,
                         load_task_net, predict, save_task_net, task_loss)

from conftest import random_image


def two_class_net(seed=0):
    torch.manual_seed(seed)
    return FrozenNetworkHandle(ToySegNet(num_classes=2))


def test_predict_shape_on_constant_image():
    net = two_class_net()
    p = predict(torch.full((1, 3, 64, 48), 0.5), net)
    assert isinstance(p, SemanticPredictions)
    assert p.logits.shape == (1, 2, 64, 48)
    assert torch.isfinite(p.logits).all()


def test_predict_is_deterministic(task_net):
    x = random_image(64, 64)
    assert torch.equal(predict(x, task_net).logits, predict(x, task_net).logits)


def test_predict_rejects_bad_input(task_net):
    with pytest.raises(ShapeMismatchError):
        predict(torch.rand(1, 1, 64, 64), task_net)
    with pytest.raises(ShapeMismatchError):
        predict(torch.rand(1, 3, 8, 8), task_net)


def test_predict_gradient_matches_finite_difference():
    net = two_class_net().to(torch.float64)
    x = random_image(32, 32, seed=4, dtype=torch.float64).requires_grad_(True)
    predict(x, net).logits.sum().backward()
    eps = 1e-6
    for idx in [(0, 0, 3, 5), (0, 1, 17, 30), (0, 2, 31, 0)]:
        xp, xm = x.detach().clone(), x.detach().clone()
        xp[idx] += eps
        xm[idx] -= eps
        with torch.no_grad():
            fd = (predict(xp, net).logits.sum() - predict(xm, net).logits.sum()).item() / (2 * eps)
        assert fd == pytest.approx(x.grad[idx].item(), rel=1e-3, abs=1e-8)


def test_feature_shapes_and_errors(task_net):
    x = random_image(64, 64)
    f = extract_features(x, task_net, "stage1")
    assert f.shape == (1, task_net.net.widths[0], 32, 32)
    assert torch.equal(f, extract_features(x, task_net, "stage1"))
    assert extract_features(x, task_net, "stage3").shape[-2:] == (8, 8)
    with pytest.raises(UnknownCutPointError):
        extract_features(x, task_net, "head")


def test_features_are_continuous(task_net):
    x = random_image(64, 64, seed=9, dtype=torch.float64)
    task_net.to(torch.float64)
    base = extract_features(x, task_net, "stage2")
    diffs = [float((extract_features(x + eps, task_net, "stage2") - base).norm()) for eps in (1e-2, 1e-4, 1e-6)]
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-3


def test_harden_semantic_argmax_and_ties():
    logits = torch.tensor([[0.9, 0.5], [0.1, 0.5]]).reshape(1, 2, 1, 2)
    ann = harden_predictions(SemanticPredictions(logits))
    assert ann.provenance == "pseudo"
    assert ann.labels.tolist() == [[[0, 0]]]


def test_harden_instances_threshold():
    p = InstancePredictions(boxes=torch.zeros(2, 4),
                            class_scores=torch.tensor([[0.95, 0.05], [0.2, 0.3]]),
                            masks=torch.tensor([[[0.6, 0.2]], [[0.9, 0.9]]]))
    ann = harden_predictions(p, confidence_threshold=0.5)
    assert len(ann) == 1
    assert ann.labels.tolist() == [0]
    assert ann.masks.tolist() == [[[True, False]]]
    empty = harden_predictions(p, confidence_threshold=0.99)
    assert len(empty) == 0


def test_harden_is_idempotent_on_raw_form(task_net):
    p = predict(random_image(64, 64, seed=2), task_net)
    once = harden_predictions(p)
    twice = harden_predictions(as_raw(once, 4))
    assert torch.equal(once.labels, twice.labels)


def test_task_loss_uniform_two_class_is_ln2():
    loss = task_loss(SemanticPredictions(torch.zeros(1, 2, 1, 1)), LabelMap(torch.zeros(1, 1, 1, dtype=torch.long)))
    assert float(loss) == pytest.approx(math.log(2.0), abs=1e-7)


def test_task_loss_confident_correct_is_near_zero():
    labels = torch.randint(0, 3, (1, 5, 5))
    logits = torch.nn.functional.one_hot(labels, 3).permute(0, 3, 1, 2).float() * 50.0
    assert float(task_loss(SemanticPredictions(logits), LabelMap(labels))) <= 1e-6


def test_task_loss_ignores_provenance():
    logits = torch.randn(2, 4, 6, 6)
    labels = torch.randint(0, 4, (2, 6, 6))
    a = task_loss(SemanticPredictions(logits), LabelMap(labels, "ground_truth"))
    b = task_loss(SemanticPredictions(logits), LabelMap(labels, "pseudo"))
    assert torch.equal(a, b)
    assert float(a) >= 0


def test_task_loss_schema_mismatch():
    with pytest.raises(SchemaMismatchError):
        task_loss(SemanticPredictions(torch.zeros(1, 2, 2, 2)), InstanceAnnotations())
    with pytest.raises(SchemaMismatchError):
        task_loss(SemanticPredictions(torch.zeros(1, 2, 2, 2)), LabelMap(torch.zeros(1, 3, 3, dtype=torch.long)))


def test_instance_loss_accepts_pseudo_annotations():
    masks = torch.tensor([[[0.9, 0.8], [0.1, 0.0]]], requires_grad=True)
    p = InstancePredictions(torch.zeros(1, 4), torch.tensor([[0.2, 0.8]], requires_grad=True), masks)
    ann = harden_predictions(p)
    loss = task_loss(p, ann)
    loss.backward()
    assert loss.item() >= 0 and masks.grad is not None


def test_ignore_index_pixels_excluded():
    logits = torch.zeros(1, 2, 1, 2)
    logits[0, 1, 0, 1] = 100.0
    labels = torch.tensor([[[0, 255]]])
    assert float(task_loss(SemanticPredictions(logits), LabelMap(labels))) == pytest.approx(math.log(2.0))


def test_assert_frozen_detects_perturbation(tmp_path):
    net = load_task_net()
    assert assert_frozen(net)
    with torch.no_grad():
        next(net.net.parameters()).view(-1)[0] += 1e-3
    assert not assert_frozen(net)
    path = save_task_net(tmp_path / "t.pt", ToySegNet())
    assert assert_frozen(load_task_net(path))


def test_gradients_reach_input_not_weights(task_net):
    x = random_image(64, 64).requires_grad_(True)
    loss = task_loss(predict(x, task_net), LabelMap(torch.zeros(1, 64, 64, dtype=torch.long)))
    loss.backward()
    assert x.grad is not None and x.grad.abs().sum() > 0
    assert all(p.grad is None for p in task_net.net.parameters())
    assert not task_net.net.training
