"""Training recipe for the bundled toy segmentation network.

Run ``python -m vcmlab.task.fixture OUT.pt`` to regenerate the checkpoint
shipped in ``vcmlab/data``.
"""
from __future__ import annotations

import argparse
import logging

import numpy as np
import torch
import torch.nn.functional as F

from ..datasets import render_sequence
from .network import ToySegNet, save_task_net

log = logging.getLogger(__name__)


def degrade(x: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Random blur-by-resampling, colour jitter and noise, so the network
    tolerates the artefacts of a low-rate codec."""
    n = x.shape[0]
    out = []
    for i in range(n):
        xi = x[i:i + 1]
        f = int(rng.choice([1, 1, 2, 4, 8]))
        if f > 1:
            small = F.avg_pool2d(xi, f)
            xi = F.interpolate(small, size=xi.shape[-2:], mode="bilinear", align_corners=False)
        xi = xi * float(rng.uniform(0.9, 1.1)) + float(rng.uniform(-0.05, 0.05))
        xi = xi + float(rng.uniform(0.0, 0.05)) * torch.randn_like(xi)
        out.append(xi)
    return torch.cat(out).clamp(0.0, 1.0)


def train_toy_task_net(steps: int = 3000, batch_size: int = 16, crop: int = 64, num_sequences: int = 96,
                       seed: int = 1234, lr: float = 2e-3) -> ToySegNet:
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    # every frame of every sequence is labeled here; the codec experiments only see one label per sequence
    data = [render_sequence(rng) for _ in range(num_sequences)]
    frames = np.concatenate([d[0] for d in data])
    labels = np.concatenate([d[1] for d in data])
    net = ToySegNet()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)
    size = frames.shape[1]
    net.train()
    for step in range(steps):
        idx = rng.integers(0, len(frames), batch_size)
        oy, ox = rng.integers(0, size - crop + 1, 2)
        x = torch.from_numpy(frames[idx, oy:oy + crop, ox:ox + crop]).permute(0, 3, 1, 2).float() / 255
        x = degrade(x, rng)
        y = torch.from_numpy(labels[idx, oy:oy + crop, ox:ox + crop]).long()
        loss = F.cross_entropy(net(x), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if step % 250 == 0:
            log.info("step %d loss %.4f", step, loss.item())
    return net.eval()


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out")
    parser.add_argument("--steps", type=int, default=3000)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    torch.set_num_threads(1)
    net = train_toy_task_net(steps=args.steps)
    save_task_net(args.out, net, steps=args.steps)


if __name__ == "__main__":
    main()
