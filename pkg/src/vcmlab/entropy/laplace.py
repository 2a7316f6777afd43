"""Discretized Laplacian likelihoods and differentiable rate estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch

SIGMA_MIN = 0.11
P_MIN = 2.0 ** -16


@dataclass
class EntropyParameters:
    """Per-element Laplacian mean and scale for the core latent."""

    mu: torch.Tensor
    sigma: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError(f"mu {tuple(self.mu.shape)} and sigma {tuple(self.sigma.shape)} differ")


@dataclass
class RateEstimate:
    bits_y: torch.Tensor
    bits_z: torch.Tensor

    @property
    def total_bits(self) -> torch.Tensor:
        return self.bits_y + self.bits_z


def _as_tensor(v) -> torch.Tensor:
    return v if isinstance(v, torch.Tensor) else torch.as_tensor(v, dtype=torch.float64)


def laplace_cdf(t: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    return 0.5 - 0.5 * torch.sign(t) * torch.expm1(-torch.abs(t) / sigma)


def laplace_bin_probability(v_hat, mu, sigma, floor: float = P_MIN) -> torch.Tensor:
    """Mass of the unit-width bin centred on ``v_hat`` under Laplace(mu, sigma).

    The bin is evaluated on the negative half-axis (the distribution is
    symmetric) so the tails do not suffer cancellation. Values below
    ``floor`` are clamped to it.
    """
    v_hat, mu, sigma = _as_tensor(v_hat), _as_tensor(mu), _as_tensor(sigma)
    r = torch.abs(v_hat - mu)
    upper = laplace_cdf(0.5 - r, sigma)
    lower = 0.5 * torch.exp(-(r + 0.5) / sigma)
    p = upper - lower
    if floor:
        p = torch.clamp(p, min=floor)
    return p


def laplace_pmf_table(sigma: float, support: int) -> list[float]:
    """Integer-residual pmf on ``[-support, support]`` plus one escape bin per tail.

    Index 0 holds the mass below ``-support - 0.5``, the last index the mass
    above ``support + 0.5``. Computed in float64 without the probability floor;
    the floor is applied when the table is quantized.
    """
    r = torch.arange(-support, support + 1, dtype=torch.float64)
    s = torch.tensor(sigma, dtype=torch.float64)
    body = laplace_bin_probability(r, 0.0, s, floor=0.0)
    tail = 0.5 * math.exp(-(support + 0.5) / sigma)
    return [tail, *body.tolist(), tail]


def estimate_rate_bits(values: torch.Tensor, params) -> torch.Tensor:
    """Ideal code length ``-sum(log2 p)`` of ``values``.

    ``params`` is either :class:`EntropyParameters` (core latent) or a
    factorized prior module exposing ``likelihood`` (hyper latent).
    """
    if isinstance(params, EntropyParameters):
        if values.shape != params.mu.shape:
            raise ValueError(f"latent shape {tuple(values.shape)} != parameter shape {tuple(params.mu.shape)}")
        p = laplace_bin_probability(values, params.mu, params.sigma)
    else:
        p = params.likelihood(values)
    return -torch.log2(p).sum()
