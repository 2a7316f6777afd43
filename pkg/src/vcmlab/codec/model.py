"""Hyperprior compressive autoencoder with a mean/scale Laplacian latent model."""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..entropy import EntropyParameters, FactorizedPrior, SIGMA_MIN, estimate_rate_bits
from ..errors import DimensionTooSmallError, ShapeMismatchError
from .quantize import quantize_infer, quantize_train

MIN_SIDE = 64
ALIGN = 16


@dataclass(frozen=True)
class NetworkConfig:
    latent_channels: int = 192     # M
    hyper_channels: int = 128      # N
    transform_channels: int = 128  # width of the hidden core-transform layers
    core_kernel: int = 5
    hyper_kernels: tuple = (3, 5, 5)

    @classmethod
    def full(cls) -> "NetworkConfig":
        return cls()

    @classmethod
    def toy(cls) -> "NetworkConfig":
        return cls(latent_channels=32, hyper_channels=16, transform_channels=32)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        if "hyper_kernels" in d:
            d["hyper_kernels"] = tuple(d["hyper_kernels"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper_kernels"] = list(self.hyper_kernels)
        return d

    @property
    def config_id(self) -> int:
        return zlib.crc32(json.dumps(self.to_dict(), sort_keys=True).encode())


def _conv(cin, cout, k, stride=2):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)


def _tconv(cin, cout, k, stride=2):
    return nn.ConvTranspose2d(cin, cout, k, stride=stride, padding=k // 2, output_padding=stride - 1)


def padded_dims(height: int, width: int) -> tuple[int, int]:
    return -(-height // ALIGN) * ALIGN, -(-width // ALIGN) * ALIGN


def latent_dims(height: int, width: int) -> tuple[int, int]:
    return -(-height // ALIGN), -(-width // ALIGN)


def state_fingerprint(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


class HyperpriorCodec(nn.Module):
    """Core autoencoder (four stride-2 stages each way) plus hyperprior.

    Tensors are NCHW. Images are in [0, 1]; inputs of any size >= 64 are
    reflect-padded to a multiple of 16 and reconstructions cropped back.
    """

    def __init__(self, config: NetworkConfig | None = None):
        super().__init__()
        cfg = config or NetworkConfig.toy()
        self.config = cfg
        M, N, C, k = cfg.latent_channels, cfg.hyper_channels, cfg.transform_channels, cfg.core_kernel
        k1, k2, k3 = cfg.hyper_kernels
        self.g_a = nn.Sequential(
            _conv(3, C, k), nn.ReLU(),
            _conv(C, C, k), nn.ReLU(),
            _conv(C, C, k), nn.ReLU(),
            _conv(C, M, k),
        )
        self.g_s = nn.Sequential(
            _tconv(M, C, k), nn.ReLU(),
            _tconv(C, C, k), nn.ReLU(),
            _tconv(C, C, k), nn.ReLU(),
            _tconv(C, 3, k),
        )
        self.h_a = nn.Sequential(
            _conv(M, N, k1, stride=1), nn.ReLU(),
            _conv(N, N, k2), nn.ReLU(),
            _conv(N, N, k3),
        )
        self.h_s = nn.Sequential(
            _tconv(N, N, k3), nn.ReLU(),
            _tconv(N, M * 3 // 2, k2), nn.ReLU(),
            _conv(M * 3 // 2, 2 * M, k1, stride=1),
        )
        self.prior = FactorizedPrior(N)

    # -- transforms -------------------------------------------------------

    def analyze(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeMismatchError(f"expected (B, 3, H, W) image batch, got {tuple(x.shape)}")
        H, W = x.shape[-2:]
        if H < MIN_SIDE or W < MIN_SIDE:
            raise DimensionTooSmallError(f"image {H}x{W} is below the {MIN_SIDE}x{MIN_SIDE} minimum")
        ph, pw = padded_dims(H, W)
        if (ph, pw) != (H, W):
            x = F.pad(x, (0, pw - W, 0, ph - H), mode="reflect")
        return self.g_a(x)

    def synthesize(self, y_hat: torch.Tensor, target_dims: tuple[int, int], clamp: bool | None = None) -> torch.Tensor:
        """Decode ``y_hat`` to an image of ``target_dims``.

        Output is clamped to [0, 1] unless ``clamp`` is False; by default only
        in eval mode, so training keeps gradients at saturated pixels.
        """
        H, W = target_dims
        expected = (self.config.latent_channels, *latent_dims(H, W))
        if tuple(y_hat.shape[1:]) != expected:
            raise ShapeMismatchError(f"latent {tuple(y_hat.shape[1:])} does not match {expected} for {H}x{W}")
        x_hat = self.g_s(y_hat)[..., :H, :W]
        if clamp is None:
            clamp = not self.training
        return x_hat.clamp(0.0, 1.0) if clamp else x_hat

    def hyper_analyze(self, y: torch.Tensor) -> torch.Tensor:
        if y.dim() != 4 or y.shape[1] != self.config.latent_channels:
            raise ShapeMismatchError(f"expected core latent with {self.config.latent_channels} channels, got {tuple(y.shape)}")
        return self.h_a(y)

    def hyper_synthesize(self, z_hat: torch.Tensor, latent_hw: tuple[int, int] | None = None) -> EntropyParameters:
        if z_hat.dim() != 4 or z_hat.shape[1] != self.config.hyper_channels:
            raise ShapeMismatchError(f"expected hyper latent with {self.config.hyper_channels} channels, got {tuple(z_hat.shape)}")
        zh, zw = z_hat.shape[-2:]
        h, w = latent_hw if latent_hw is not None else (4 * zh, 4 * zw)
        if not (-(-h // 4) == zh and -(-w // 4) == zw):
            raise ShapeMismatchError(f"hyper latent {zh}x{zw} cannot describe a {h}x{w} core latent")
        out = self.h_s(z_hat)[..., :h, :w]
        mu, sigma = out.chunk(2, dim=1)
        return EntropyParameters(mu=mu, sigma=torch.clamp(sigma, min=SIGMA_MIN))

    # -- end-to-end passes ------------------------------------------------

    def forward(self, x: torch.Tensor, generator: torch.Generator | None = None, noise: bool = True) -> dict:
        """Training pass with additive-noise quantization.

        Returns the unclamped reconstruction, the rate in bits for both
        latents and the rate in bits per original pixel.
        """
        H, W = x.shape[-2:]
        y = self.analyze(x)
        z = self.hyper_analyze(y)
        z_t = quantize_train(z, generator) if noise else z
        params = self.hyper_synthesize(z_t, y.shape[-2:])
        y_t = quantize_train(y, generator) if noise else y
        bits_y = estimate_rate_bits(y_t, params)
        bits_z = estimate_rate_bits(z_t, self.prior)
        x_hat = self.synthesize(y_t, (H, W), clamp=False)
        bpp = (bits_y + bits_z) / (x.shape[0] * H * W)
        return {"x_hat": x_hat, "y": y, "z": z, "bits_y": bits_y, "bits_z": bits_z, "bpp": bpp}

    @torch.no_grad()
    def quantized_latents(self, x: torch.Tensor):
        """Inference-mode latents: ``(y_hat, z_hat, params)``."""
        y = self.analyze(x)
        z_hat = quantize_infer(self.hyper_analyze(y))
        params = self.hyper_synthesize(z_hat, y.shape[-2:])
        y_hat = quantize_infer(y, params.mu)
        return y_hat, z_hat, params

    @torch.no_grad()
    def reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        """Library-level reconstruction through rounded latents, no entropy coding."""
        y_hat, _, _ = self.quantized_latents(x)
        return self.synthesize(y_hat, tuple(x.shape[-2:]), clamp=True)

    def model_id(self) -> int:
        return int(state_fingerprint(self)[:16], 16)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
