"""Foreground-weighted reconstruction/perceptual losses and the WGAN objectives.

All image tensors are channel-first, ``(C, H, W)`` or ``(B, C, H, W)``.
Foreground masks are ``(H, W)``, ``(B, H, W)`` or ``(B, 1, H, W)`` and are
broadcast over channels.  ``N`` in every normalisation is the element count of
the ground-truth-shaped tensor (batch included, so a batch loss is the mean of
per-image losses).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import torch
import torch.nn as nn

from .imaging import DimensionError, resize_mask

logger = logging.getLogger(__name__)

CF_TARGETS = ("masked_input", "ground_truth")


@dataclass(frozen=True)
class LossWeights:
    lambda_cF: float = 1.0
    lambda_F: float = 10.0
    lambda_pF: float = 0.05
    lambda_adv: float = 0.01

    def __post_init__(self):
        vals = (self.lambda_cF, self.lambda_F, self.lambda_pF, self.lambda_adv)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def _fg_like(fg: torch.Tensor, img: torch.Tensor) -> torch.Tensor:
    fg = _t(fg).to(img.dtype)
    if fg.dim() == img.dim() - 1:
        fg = fg.unsqueeze(-3)
    if fg.shape[-2:] != img.shape[-2:]:
        raise DimensionError(f"foreground {tuple(fg.shape[-2:])} vs image {tuple(img.shape[-2:])}")
    return fg


def _pair(a, b, name: str):
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return a, b


def loss_cF(masked, pred, fg) -> torch.Tensor:
    """(1/N) * sum |fg * (masked - pred)|, masked input as the target."""
    masked, pred = _pair(masked, pred, "loss_cF")
    return (_fg_like(fg, pred) * (masked - pred)).abs().sum() / pred.numel()


def loss_F(gt, pred, fg) -> torch.Tensor:
    """(1/N) * sum (fg * (gt - pred))**2."""
    gt, pred = _pair(gt, pred, "loss_F")
    return (_fg_like(fg, pred) * (gt - pred)).pow(2).sum() / gt.numel()


# --- perceptual ------------------------------------------------------------


class FeatureExtractor(Protocol):
    def __call__(self, x: torch.Tensor) -> list[torch.Tensor]: ...


class IdentityExtractor(nn.Module):
    """Single tap returning its input; reduces the perceptual loss to ``loss_F``."""

    def forward(self, x):
        return [x]


VGG16_POOL_TAPS = (4, 9, 16)  # indices of the first three max-pools in vgg16().features
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class VGG16Features(nn.Module):
    """Frozen VGG16 trunk returning activations at ``layer_ids``.

    ``weights`` is ``"imagenet"`` (torchvision's pretrained weights, from the
    torch hub cache or a download), a path to a VGG16 state dict, or
    ``"seeded"`` for fixed He-initialised weights when no pretrained file is
    available offline.  Inputs are expected in [-1, 1].
    """

    def __init__(self, weights: str = "imagenet", layer_ids: Sequence[int] = VGG16_POOL_TAPS,
                 seed: int = 0):
        super().__init__()
        from torchvision.models import vgg16

        self.layer_ids = tuple(sorted(layer_ids))
        model = vgg16(weights=None)
        if weights == "seeded":
            gen = torch.Generator().manual_seed(seed)
            for m in model.features:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.weight[0].numel()
                    with torch.no_grad():
                        m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                        m.bias.zero_()
        elif weights == "imagenet":
            from torchvision.models import VGG16_Weights

            model.load_state_dict(VGG16_Weights.IMAGENET1K_V1.get_state_dict(progress=False))
        else:
            model.load_state_dict(torch.load(weights, map_location="cpu", weights_only=True))
        self.weights_name = weights
        self.features = model.features[: self.layer_ids[-1] + 1]
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.eval()
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def train(self, mode: bool = True):
        # frozen: stays in eval mode
        return super().train(False)

    def forward(self, x):
        x = ((x + 1) / 2 - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        taps = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self.layer_ids:
                taps.append(x)
        return taps


def build_extractor(name: str, seed: int = 0) -> nn.Module:
    if name == "identity":
        return IdentityExtractor()
    if name == "vgg16":
        return VGG16Features("imagenet")
    if name == "vgg16-seeded":
        return VGG16Features("seeded", seed=seed)
    if name.startswith("vgg16:"):
        return VGG16Features(name.split(":", 1)[1])
    raise ValueError(f"unknown feature extractor {name!r}")


def loss_pF(masked, pred, fg, fx: FeatureExtractor, masked_features=None) -> torch.Tensor:
    """Sum over taps of (1/N) * sum (fg_i * (phi_i(masked) - phi_i(pred)))**2.

    ``fg_i`` is the foreground mask resized (nearest) to tap ``i``; ``N`` is
    the element count of the image, not of the feature map.
    ``masked_features`` lets callers pass precomputed ``fx(masked)``.
    """
    masked, pred = _pair(masked, pred, "loss_pF")
    batched = pred.dim() == 4
    xm = masked if batched else masked.unsqueeze(0)
    xp = pred if batched else pred.unsqueeze(0)
    fg = _t(fg)
    if fg.dim() == 2:
        fg = fg.expand(xp.shape[0], *fg.shape)
    if fg.dim() == 4:
        fg = fg[:, 0]
    if masked_features is None:
        with torch.no_grad():
            masked_features = fx(xm)
    pred_features = fx(xp)
    total = pred.new_zeros(())
    n = pred.numel()
    for fm, fp in zip(masked_features, pred_features):
        fg_i = resize_mask(fg, fp.shape[-2:]).unsqueeze(1).to(fp.dtype)
        total = total + (fg_i * (fm - fp)).pow(2).sum() / n
    return total


# --- adversarial -----------------------------------------------------------


def _scores(x, name: str) -> torch.Tensor:
    x = _t(x).reshape(-1)
    if x.numel() == 0:
        raise ValueError(f"{name}: empty score list")
    return x


def critic_loss(real_scores, fake_scores) -> torch.Tensor:
    """Negated WGAN value: -(mean D(real) - mean D(fake))."""
    real = _scores(real_scores, "real_scores")
    fake = _scores(fake_scores, "fake_scores")
    return -(real.mean() - fake.mean())


def generator_adv_loss(fake_scores) -> torch.Tensor:
    return -_scores(fake_scores, "fake_scores").mean()


def generator_total_loss(gt, masked, pred, fg, fx, fake_scores, w: LossWeights | None = None,
                         cF_target: str = "masked_input", masked_features=None):
    """Weighted generator objective and its per-term breakdown.

    Returns ``(total, {"l_cF", "l_F", "l_pF", "l_adv"})``; zero-weighted terms
    are still reported but not evaluated through the feature network.
    """
    w = w or LossWeights()
    if cF_target not in CF_TARGETS:
        raise ValueError(f"cF_target must be one of {CF_TARGETS}")
    target = masked if cF_target == "masked_input" else gt
    l_cf = loss_cF(target, pred, fg)
    l_f = loss_F(gt, pred, fg)
    if w.lambda_pF > 0:
        l_pf = loss_pF(masked, pred, fg, fx, masked_features)
    else:
        l_pf = _t(pred).new_zeros(())
    if w.lambda_adv > 0 or fake_scores is not None:
        l_adv = generator_adv_loss(fake_scores)
    else:
        l_adv = _t(pred).new_zeros(())
    total = w.lambda_cF * l_cf + w.lambda_F * l_f + w.lambda_pF * l_pf + w.lambda_adv * l_adv
    parts = {"l_cF": l_cf, "l_F": l_f, "l_pF": l_pf, "l_adv": l_adv}
    return total, parts
