"""Generator (encoder-decoder with an additive symmetric feature chain) and WGAN critic."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    depth: int = 5
    base_channels: int = 64
    max_channels: int = 512
    input_channels: int = 3
    output_activation: str = "tanh"
    chain_mode: str = "add"
    hole_channel: bool = False

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError("generator depth must be >= 3")
        if self.chain_mode != "add":
            raise ValueError("only additive chaining is supported")
        if self.output_activation != "tanh":
            raise ValueError("output activation must be tanh")

    def channels(self) -> list[int]:
        return [min(self.base_channels * 2 ** i, self.max_channels) for i in range(self.depth)]


@dataclass(frozen=True)
class CriticSpec:
    depth: int = 4
    base_channels: int = 64
    max_channels: int = 512

    def channels(self) -> list[int]:
        return [min(self.base_channels * 2 ** i, self.max_channels) for i in range(self.depth)]


def spec_dict(spec) -> dict:
    return asdict(spec)


class Generator(nn.Module):
    """Strided-conv encoder, upsample+conv decoder.

    Encoder stage ``i`` output is added to the decoder output at the same
    resolution (channel counts mirror each other).  The foreground mask never
    enters this network.
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        ch = spec.channels()
        in_ch = spec.input_channels + (1 if spec.hole_channel else 0)
        self.down = nn.ModuleList()
        prev = in_ch
        for i, c in enumerate(ch):
            layers = [nn.Conv2d(prev, c, 4, stride=2, padding=1)]
            if i > 0:
                layers.append(nn.InstanceNorm2d(c))
            layers.append(nn.LeakyReLU(0.2))
            self.down.append(nn.Sequential(*layers))
            prev = c
        self.up = nn.ModuleList()
        for i in range(spec.depth - 1, 0, -1):
            self.up.append(nn.Sequential(
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch[i], ch[i - 1], 3, padding=1),
                nn.InstanceNorm2d(ch[i - 1]),
                nn.ReLU(),
            ))
        self.head = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(ch[0], spec.input_channels, 3, padding=1),
            nn.Tanh(),
        )
        self.use_chain = True

    def forward(self, x: torch.Tensor, hole: torch.Tensor | None = None) -> torch.Tensor:
        h, w = x.shape[-2:]
        k = 2 ** self.spec.depth
        if h % k or w % k:
            raise ShapeError(f"input {h}x{w} not divisible by 2**depth = {k}")
        if self.spec.hole_channel:
            if hole is None:
                raise ValueError("generator configured with a hole channel needs the hole mask")
            x = torch.cat([x, hole.reshape(x.shape[0], 1, h, w).to(x.dtype)], dim=1)
        feats = []
        for block in self.down:
            x = block(x)
            feats.append(x)
        for j, block in enumerate(self.up):
            x = block(x)
            if self.use_chain:
                x = x + feats[-2 - j]
        return self.head(x)


class Critic(nn.Module):
    """Full-image WGAN critic: strided convs, global average, affine to a scalar."""

    def __init__(self, spec: CriticSpec, in_channels: int = 3):
        super().__init__()
        self.spec = spec
        layers = []
        prev = in_channels
        for i, c in enumerate(spec.channels()):
            layers.append(nn.Conv2d(prev, c, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.InstanceNorm2d(c))
            layers.append(nn.LeakyReLU(0.2))
            prev = c
        self.features = nn.Sequential(*layers)
        self.fc = nn.Linear(prev, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f = self.features(x).mean(dim=(2, 3))
        return self.fc(f).squeeze(1)


@dataclass
class NetParams:
    generator: Generator
    critic: Critic
    seed: int

    @property
    def gspec(self) -> GeneratorSpec:
        return self.generator.spec

    @property
    def cspec(self) -> CriticSpec:
        return self.critic.spec

    def named_arrays(self) -> dict[str, torch.Tensor]:
        out = {f"generator/{k}": v for k, v in self.generator.state_dict().items()}
        out.update({f"critic/{k}": v for k, v in self.critic.state_dict().items()})
        return out


def _init_module(module: nn.Module, gen: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                if m.bias is not None:
                    m.bias.zero_()


def init_params(seed: int, gspec: GeneratorSpec | None = None,
                cspec: CriticSpec | None = None) -> NetParams:
    """He-scaled normal weights and zero biases, reproducible from ``seed``."""
    gspec = gspec or GeneratorSpec()
    cspec = cspec or CriticSpec()
    gen = torch.Generator().manual_seed(int(seed))
    g = Generator(gspec)
    c = Critic(cspec, gspec.input_channels)
    _init_module(g, gen)
    _init_module(c, gen)
    return NetParams(g, c, int(seed))


def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    x = torch.as_tensor(x, dtype=torch.float32) if not isinstance(x, torch.Tensor) else x
    return (x.unsqueeze(0), True) if x.dim() == 3 else (x, False)


@torch.no_grad()
def generator_forward(params: NetParams, masked, hole=None) -> torch.Tensor:
    """I_pred for a masked image in [-1, 1], ``(C, H, W)`` or ``(N, C, H, W)``."""
    x, single = _batched(masked)
    dtype = next(params.generator.parameters()).dtype
    was_training = params.generator.training
    params.generator.eval()
    try:
        out = params.generator(x.to(dtype), hole)
    finally:
        params.generator.train(was_training)
    return out[0] if single else out


@torch.no_grad()
def critic_forward(params: NetParams, image) -> torch.Tensor:
    """One unbounded score per image."""
    x, single = _batched(image)
    dtype = next(params.critic.parameters()).dtype
    scores = params.critic(x.to(dtype))
    if not torch.isfinite(scores).all():
        raise FloatingPointError("critic produced non-finite scores")
    return scores[0] if single else scores


def clip_weights(module: nn.Module, clip: float) -> None:
    with torch.no_grad():
        for p in module.parameters():
            p.clamp_(-clip, clip)

