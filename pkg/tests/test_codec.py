import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from vcmlab.codec import (HyperpriorCodec, NetworkConfig, latent_dims, load_codec, padded_dims, quantize_infer,
                          quantize_train, save_codec)
from vcmlab.entropy import SIGMA_MIN
from vcmlab.errors import DimensionTooSmallError, ShapeMismatchError

from conftest import random_image

OVERFIT_STEPS = 800


def small_codec(M=8, N=4, C=8, seed=0):
    torch.manual_seed(seed)
    return HyperpriorCodec(NetworkConfig(latent_channels=M, hyper_channels=N, transform_channels=C)).eval()


def test_analyze_shapes():
    m = small_codec()
    assert m.analyze(torch.rand(1, 3, 64, 64)).shape == (1, 8, 4, 4)
    m = small_codec(M=192, N=8, C=8)
    assert m.analyze(torch.rand(1, 3, 128, 96)).shape == (1, 192, 8, 6)


def test_full_preset_hyper_shapes():
    m = HyperpriorCodec(NetworkConfig.full())
    with torch.no_grad():
        z = m.hyper_analyze(torch.rand(1, 192, 8, 8))
        assert z.shape == (1, 128, 2, 2)
        p = m.hyper_synthesize(z, (8, 8))
    assert p.mu.shape == p.sigma.shape == (1, 192, 8, 8)


def test_small_latent_gives_single_hyper_cell():
    m = small_codec(M=8, N=5)
    assert m.hyper_analyze(torch.rand(1, 8, 4, 4)).shape == (1, 5, 1, 1)


def test_too_small_input_rejected():
    m = small_codec()
    with pytest.raises(DimensionTooSmallError):
        m.analyze(torch.rand(1, 3, 63, 64))
    with pytest.raises(ShapeMismatchError):
        m.analyze(torch.rand(1, 1, 64, 64))


def test_zero_weights_give_zero_latents():
    m = small_codec()
    last = m.g_a[-1]
    torch.nn.init.zeros_(last.weight)
    torch.nn.init.zeros_(last.bias)
    with torch.no_grad():
        y = m.analyze(torch.zeros(1, 3, 64, 64))
    assert torch.count_nonzero(y) == 0
    for layer in m.h_a:
        if isinstance(layer, torch.nn.Conv2d):
            torch.nn.init.zeros_(layer.weight)
            torch.nn.init.zeros_(layer.bias)
    with torch.no_grad():
        assert torch.count_nonzero(m.hyper_analyze(torch.randn(1, 8, 4, 4))) == 0


def test_zero_output_layer_gives_sigma_min():
    m = small_codec()
    torch.nn.init.zeros_(m.h_s[-1].weight)
    torch.nn.init.zeros_(m.h_s[-1].bias)
    with torch.no_grad():
        p = m.hyper_synthesize(torch.randn(1, 4, 2, 2), (8, 8))
    assert torch.all(p.sigma == SIGMA_MIN)
    assert torch.all(p.mu == 0)


def test_synthesize_shapes_and_crop():
    m = small_codec()
    with torch.no_grad():
        assert m.synthesize(torch.randn(1, 8, 4, 4), (64, 64)).shape == (1, 3, 64, 64)
        x = torch.rand(1, 3, 100, 100)
        assert padded_dims(100, 100) == (112, 112)
        y = m.analyze(x)
        assert y.shape[-2:] == (7, 7)
        assert m.synthesize(y, (100, 100)).shape == (1, 3, 100, 100)
    with pytest.raises(ShapeMismatchError):
        m.synthesize(torch.randn(1, 8, 5, 4), (64, 64))


def test_clamp_only_at_inference():
    m = small_codec()
    y = torch.randn(1, 8, 4, 4) * 50
    m.train()
    raw = m.synthesize(y, (64, 64))
    m.eval()
    clamped = m.synthesize(y, (64, 64))
    assert raw.min() < 0 or raw.max() > 1
    assert clamped.min() >= 0 and clamped.max() <= 1


@settings(max_examples=15, deadline=None)
@given(h=st.integers(64, 150), w=st.integers(64, 150))
def test_shape_algebra(h, w):
    m = small_codec(M=8, N=4, C=4)
    with torch.no_grad():
        y = m.analyze(torch.rand(1, 3, h, w))
        z = m.hyper_analyze(y)
        p = m.hyper_synthesize(torch.round(z), y.shape[-2:])
    assert y.shape[-2:] == latent_dims(h, w) == (math.ceil(h / 16), math.ceil(w / 16))
    assert z.shape[-2:] == (math.ceil(h / 64), math.ceil(w / 64))
    assert p.mu.shape == p.sigma.shape == y.shape
    assert bool(torch.all(p.sigma >= torch.tensor(SIGMA_MIN, dtype=p.sigma.dtype)))


def test_quantize_train_noise_bounds_and_mean():
    v = torch.zeros(1_000_000, dtype=torch.float64)
    g = torch.Generator().manual_seed(7)
    out = quantize_train(v, g)
    assert float((out - v).abs().max()) <= 0.5
    assert abs(float((out - v).mean())) < 0.002
    assert torch.equal(quantize_train(v, torch.Generator().manual_seed(7)), out)


def test_quantize_train_gradient_is_identity():
    v = torch.randn(10, requires_grad=True)
    quantize_train(v, torch.Generator().manual_seed(0)).sum().backward()
    assert torch.equal(v.grad, torch.ones(10))


def test_quantize_infer_examples():
    assert float(quantize_infer(torch.tensor(0.4))) == 0.0
    assert float(quantize_infer(torch.tensor(-1.6))) == -2.0
    out = quantize_infer(torch.tensor([1.3], dtype=torch.float64), torch.tensor([1.1], dtype=torch.float64))
    assert math.isclose(float(out), 1.1, abs_tol=1e-12)
    with pytest.raises(ShapeMismatchError):
        quantize_infer(torch.zeros(3), torch.zeros(4))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20),
       st.lists(st.floats(-10, 10, allow_nan=False), min_size=20, max_size=20))
def test_quantize_infer_idempotent(values, means):
    v = torch.tensor(values, dtype=torch.float64)
    mu = torch.tensor(means[:len(values)], dtype=torch.float64)
    once = quantize_infer(v, mu)
    assert torch.equal(quantize_infer(once, mu), once)
    assert torch.allclose(torch.round(once - mu), once - mu, rtol=0, atol=1e-9)


def test_inference_is_deterministic(toy_codec):
    x = random_image(96, 80)
    a = toy_codec.reconstruct(x)
    b = toy_codec.reconstruct(x.clone())
    assert torch.equal(a, b)


def test_parameter_count_depends_on_config_only():
    a = HyperpriorCodec(NetworkConfig.toy())
    torch.manual_seed(5)
    b = HyperpriorCodec(NetworkConfig.toy())
    assert a.parameter_count() == b.parameter_count()
    assert HyperpriorCodec(NetworkConfig.full()).parameter_count() > a.parameter_count()


def test_checkpoint_round_trip_is_bitwise(tmp_path, toy_codec):
    path = save_codec(tmp_path / "c.pt", toy_codec, lam=3.0)
    loaded, meta = load_codec(path)
    assert meta["lam"] == 3.0
    assert loaded.config == toy_codec.config
    for (k, a), (_, b) in zip(toy_codec.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(a, b), k
    assert loaded.model_id() == toy_codec.model_id()


def test_gradient_matches_finite_differences():
    m = small_codec(M=8, N=4, C=6).double().train()
    x = random_image(64, 64, seed=2, dtype=torch.float64).requires_grad_(True)

    def loss(inp):
        out = m(inp, noise=False)
        return out["bpp"] + 10 * torch.mean((out["x_hat"] - 0.5) ** 2)

    loss(x).backward()
    rng = np.random.default_rng(0)
    eps = 1e-6
    for _ in range(5):
        idx = tuple(int(rng.integers(s)) for s in x.shape)
        xp, xm = x.detach().clone(), x.detach().clone()
        xp[idx] += eps
        xm[idx] -= eps
        with torch.no_grad():
            fd = (loss(xp) - loss(xm)).item() / (2 * eps)
        assert fd == pytest.approx(x.grad[idx].item(), rel=1e-3, abs=1e-9)


def test_overfit_single_image_reconstructs(shapes):
    """Unquantized autoencoding of one image after a short MSE fit."""
    torch.manual_seed(0)
    m = HyperpriorCodec(NetworkConfig.toy())
    frame = shapes.labeled_frame(0)[:64, :64]
    x = torch.from_numpy(frame.copy()).permute(2, 0, 1)[None].float() / 255
    opt = torch.optim.Adam(list(m.g_a.parameters()) + list(m.g_s.parameters()), lr=2e-3)
    for _ in range(OVERFIT_STEPS):
        loss = torch.mean((m.synthesize(m.analyze(x), (64, 64), clamp=False) - x) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
    m.eval()
    with torch.no_grad():
        err = (m.synthesize(m.analyze(x), (64, 64)) - x).abs().mean()
    assert float(err) < 0.05
