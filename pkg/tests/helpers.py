"""Independent oracles shared by the test modules."""

import math

import torch
import torch.nn as nn

from fginpaint.config import build_config
from fginpaint.losses import LossWeights, generator_total_loss
from fginpaint.nets import Critic, CriticSpec, _init_module


class SmoothExtractor(nn.Module):
    """Frozen seeded conv stack with tanh + average pooling (no kinks), three taps."""

    def __init__(self, seed=0, dtype=torch.float64):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList([nn.Conv2d(3, 8, 3, padding=1), nn.Conv2d(8, 8, 3, padding=1),
                                    nn.Conv2d(8, 16, 3, padding=1)])
        with torch.no_grad():
            for c in self.convs:
                c.weight.copy_(torch.randn(c.weight.shape, generator=g) / math.sqrt(c.weight[0].numel()))
                c.bias.copy_(torch.randn(c.bias.shape, generator=g) * 0.1)
        self.to(dtype)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        taps = []
        for c in self.convs:
            x = torch.nn.functional.avg_pool2d(torch.tanh(c(x)), 2)
            taps.append(x)
        return taps


def fd_gradient(f, x, h=1e-3):
    """Central finite differences of scalar ``f`` at ``x`` (float64 tensor)."""
    g = torch.zeros_like(x)
    flat = g.view(-1)
    with torch.no_grad():
        for i in range(x.numel()):
            e = torch.zeros(x.numel(), dtype=x.dtype)
            e[i] = h
            e = e.view_as(x)
            flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def autograd_gradient(f, x):
    x = x.clone().requires_grad_(True)
    f(x).backward()
    return x.grad.detach()


def relative_error(a, b):
    return float((a - b).norm() / max(a.norm(), b.norm(), 1e-30))


def gradcheck_problem(seed, fx, weights=None, size=8, kink_margin=2e-3):
    """Random 8x8x3 fixture for the composite loss as a function of ``pred``.

    ``pred`` is redrawn wherever the foreground residual of the L1 term would
    sit within ``kink_margin`` of |.|'s kink, where FD is not an oracle.
    """
    g = torch.Generator().manual_seed(seed)
    dt = torch.float64
    gt = torch.rand(1, 3, size, size, generator=g, dtype=dt) * 2 - 1
    hole = (torch.rand(1, size, size, generator=g, dtype=dt) > 0.3).to(dt)
    fg = (torch.rand(1, size, size, generator=g, dtype=dt) > 0.4).to(dt)
    masked = gt * hole.unsqueeze(1)
    pred = torch.rand(1, 3, size, size, generator=g, dtype=dt) * 1.98 - 0.99
    for _ in range(100):
        near = (masked - pred).abs() < kink_margin
        if not near.any():
            break
        pred = torch.where(near, torch.rand(pred.shape, generator=g, dtype=dt) * 1.98 - 0.99, pred)
    critic = Critic(CriticSpec(depth=2, base_channels=8)).to(dt)
    _init_module(critic, g)
    w = weights or LossWeights()

    def f(p):
        return generator_total_loss(gt, masked, p, fg, fx, critic(p), w)[0]

    return f, pred


def desk_config(toy_root, out_dir, **kw):
    values = dict(desk_scale=True, data_root=str(toy_root), out_dir=str(out_dir),
                  checkpoint_every=10, samples_every=50)
    values.update(kw)
    return build_config(overrides=values)
