"""Image-level compression through the real bitstream path, and codec checkpoints."""
from __future__ import annotations

import torch

from ..checkpoint import read_checkpoint, save_checkpoint
from ..entropy import Bitstream, Header, decode_latents, encode_latents
from .model import HyperpriorCodec, NetworkConfig, padded_dims


def save_codec(path, model: HyperpriorCodec, **meta):
    return save_checkpoint(path, "codec", model.config.to_dict(), model, meta)


def load_codec(path) -> tuple[HyperpriorCodec, dict]:
    """Load a codec checkpoint in eval mode; returns ``(model, meta)``."""
    payload = read_checkpoint(path, kind="codec")
    model = HyperpriorCodec(NetworkConfig.from_dict(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["meta"]


@torch.no_grad()
def compress(model: HyperpriorCodec, x: torch.Tensor, lam: float = 0.0) -> Bitstream:
    """Encode a single (1, 3, H, W) image."""
    H, W = x.shape[-2:]
    y_hat, z_hat, params = model.quantized_latents(x)
    header = Header(H, W, *padded_dims(H, W), model.config.config_id, model.model_id(), float(lam))
    return encode_latents(y_hat, z_hat, params, model.prior, header)


@torch.no_grad()
def decompress(model: HyperpriorCodec, bitstream: Bitstream) -> torch.Tensor:
    y_hat, _ = decode_latents(bitstream, model)
    hdr = bitstream.header
    return model.synthesize(y_hat, (hdr.height, hdr.width), clamp=True)
