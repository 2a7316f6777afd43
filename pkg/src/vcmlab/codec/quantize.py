from __future__ import annotations

import torch

from ..errors import ShapeMismatchError


def quantize_train(v: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """Additive uniform noise on [-0.5, 0.5); the gradient w.r.t. ``v`` is identity."""
    u = torch.rand(v.shape, generator=generator, dtype=v.dtype, device=v.device) - 0.5
    return v + u


def quantize_infer(v: torch.Tensor, means: torch.Tensor | None = None) -> torch.Tensor:
    """Round ``v``; with ``means``, round the residual and add the mean back."""
    if means is None:
        return torch.round(v)
    if means.shape != v.shape:
        raise ShapeMismatchError(f"means {tuple(means.shape)} vs values {tuple(v.shape)}")
    return torch.round(v - means) + means
