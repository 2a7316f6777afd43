"""Learned per-channel factorized density for the hyper latent."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .laplace import P_MIN


class FactorizedPrior(nn.Module):
    """Non-parametric monotone CDF per channel, built from a small
    composition of positive-slope affine maps and ``tanh`` bends.

    The density of a unit bin is ``c(v + 0.5) - c(v - 0.5)`` where ``c`` is
    the learned CDF. Tails of the coding alphabet collect whatever mass lies
    outside the symbol support.
    """

    def __init__(self, channels: int, filters=(3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1, *filters, 1)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self.matrices = nn.ParameterList()
        self.biases = nn.ParameterList()
        self.factors = nn.ParameterList()
        for i in range(len(dims) - 1):
            init = math.log(math.expm1(1.0 / scale / dims[i + 1]))
            self.matrices.append(nn.Parameter(torch.full((channels, dims[i + 1], dims[i]), init)))
            self.biases.append(nn.Parameter(torch.rand(channels, dims[i + 1], 1) - 0.5))
            if i < len(dims) - 2:
                self.factors.append(nn.Parameter(torch.zeros(channels, dims[i + 1], 1)))

    def _logits_cumulative(self, v: torch.Tensor) -> torch.Tensor:
        # v: (C, 1, L)
        logits = v
        for i, matrix in enumerate(self.matrices):
            logits = torch.matmul(F.softplus(matrix), logits) + self.biases[i]
            if i < len(self.factors):
                logits = logits + torch.tanh(self.factors[i]) * torch.tanh(logits)
        return logits

    def _to_channel_rows(self, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 4 or v.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, h, w) hyper latent, got {tuple(v.shape)}")
        return v.transpose(0, 1).reshape(self.channels, 1, -1)

    def cdf(self, v: torch.Tensor) -> torch.Tensor:
        """CDF at ``v`` given as (C, 1, L) rows."""
        return torch.sigmoid(self._logits_cumulative(v))

    def likelihood(self, v: torch.Tensor) -> torch.Tensor:
        rows = self._to_channel_rows(v)
        lower = self._logits_cumulative(rows - 0.5)
        upper = self._logits_cumulative(rows + 0.5)
        # evaluate in whichever tail keeps the sigmoids away from 1
        sign = -torch.sign(lower + upper).detach()
        p = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        p = torch.clamp(p, min=P_MIN)
        b, _, h, w = v.shape
        return p.reshape(self.channels, b, h, w).transpose(0, 1)

    @torch.no_grad()
    def pmf_tables(self, support: int) -> torch.Tensor:
        """Per-channel pmf on ``[-support, support]`` with two escape bins, float64."""
        grid = torch.arange(-support - 0.5, support + 1.5, dtype=torch.float64)
        rows = grid.expand(self.channels, 1, -1)
        params = [p.detach().double() for p in (*self.matrices, *self.biases, *self.factors)]
        logits = rows
        n = len(self.matrices)
        for i in range(n):
            logits = torch.matmul(F.softplus(params[i]), logits) + params[n + i]
            if i < n - 1:
                logits = logits + torch.tanh(params[2 * n + i]) * torch.tanh(logits)
        c = torch.sigmoid(logits)[:, 0, :]
        body = c[:, 1:] - c[:, :-1]
        return torch.cat([c[:, :1], body, 1.0 - c[:, -1:]], dim=1).clamp(min=0.0)
