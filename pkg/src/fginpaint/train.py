"""Alternating WGAN training, checkpoint/resume, and inference."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch

from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .config import RunConfig, write_config
from .imaging import (SYMMETRIC, UNIT, DimensionError, SamplePair, composite_output,
                      convert_range, load_dataset, read_image, read_mask, write_image)
from .losses import build_extractor, critic_loss, generator_total_loss
from .nets import CriticSpec, GeneratorSpec, NetParams, clip_weights, init_params

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "l_cF", "l_F", "l_pF", "l_adv", "total")


class NonFiniteLossError(FloatingPointError):
    pass


class Batch(NamedTuple):
    gt: torch.Tensor  # (B, 3, H, W) in [-1, 1]
    masked: torch.Tensor  # gt * hole
    fg: torch.Tensor  # (B, H, W)
    hole: torch.Tensor  # (B, H, W), 1 = valid


def make_batch(samples: Sequence[SamplePair]) -> Batch:
    gt = np.stack([convert_range(s.image, UNIT, SYMMETRIC) for s in samples]).transpose(0, 3, 1, 2)
    gt = torch.from_numpy(gt).float()
    hole = torch.from_numpy(np.stack([s.hole for s in samples])).float()
    fg = torch.from_numpy(np.stack([s.foreground for s in samples])).float()
    return Batch(gt, gt * hole.unsqueeze(1), fg, hole)


def subset(batch: Batch, idx) -> Batch:
    idx = torch.as_tensor(np.asarray(idx), dtype=torch.long)
    return Batch(*(t.index_select(0, idx) for t in batch))


def gen_spec(cfg: RunConfig) -> GeneratorSpec:
    return GeneratorSpec(depth=cfg.depth, base_channels=cfg.base_channels, hole_channel=cfg.hole_channel)


def critic_spec(cfg: RunConfig) -> CriticSpec:
    return CriticSpec(depth=cfg.critic_depth, base_channels=cfg.critic_base_channels)


@dataclass
class TrainState:
    params: NetParams
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    extractor: torch.nn.Module
    step: int = 0
    epoch: int = 0
    running: dict[str, float] = field(default_factory=dict)


def make_optimizers(params: NetParams, cfg: RunConfig):
    betas = tuple(cfg.adam_betas)
    opt_g = torch.optim.Adam(params.generator.parameters(), lr=cfg.lr_g, betas=betas)
    opt_d = torch.optim.Adam(params.critic.parameters(), lr=cfg.lr_d, betas=betas)
    return opt_g, opt_d


def new_state(cfg: RunConfig, extractor=None) -> TrainState:
    params = init_params(cfg.seed, gen_spec(cfg), critic_spec(cfg))
    # start inside the clip box so every critic weight honours the bound from step 0
    clip_weights(params.critic, cfg.clip_value)
    opt_g, opt_d = make_optimizers(params, cfg)
    fx = extractor if extractor is not None else build_extractor(cfg.feature_extractor, cfg.seed)
    return TrainState(params, opt_g, opt_d, fx)


def resume_state(path, cfg: RunConfig, extractor=None) -> TrainState:
    params, header, opt_g, opt_d = load_checkpoint(
        path, gen_spec(cfg), critic_spec(cfg), opt_factory=lambda p: make_optimizers(p, cfg))
    fx = extractor if extractor is not None else build_extractor(cfg.feature_extractor, cfg.seed)
    return TrainState(params, opt_g, opt_d, fx, step=header["step"], epoch=header["epoch"])


def set_determinism(cfg: RunConfig) -> None:
    torch.manual_seed(cfg.seed)
    torch.use_deterministic_algorithms(cfg.deterministic)


def _check_finite(parts: dict[str, torch.Tensor], step: int) -> None:
    bad = [k for k, v in parts.items() if not torch.isfinite(v)]
    if bad:
        dump = ", ".join(f"{k}={float(v.detach()):.6g}" for k, v in parts.items())
        raise NonFiniteLossError(f"non-finite loss at step {step}: {sorted(bad)} ({dump})")


def train_step(state: TrainState, batch: Batch, cfg: RunConfig) -> TrainState:
    """k critic updates (each followed by weight clipping), then one generator update."""
    if batch.gt.shape[0] == 0:
        raise ValueError("empty batch")
    g, d = state.params.generator, state.params.critic
    hole = batch.hole if cfg.hole_channel else None
    pred = g(batch.masked, hole)

    d.requires_grad_(True)
    for _ in range(cfg.critic_steps_per_gen_step):
        loss_d = critic_loss(d(batch.gt), d(pred.detach()))
        _check_finite({"critic": loss_d}, state.step + 1)
        state.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        state.opt_d.step()
        clip_weights(d, cfg.clip_value)

    d.requires_grad_(False)
    fake = d(pred) if cfg.lambda_adv > 0 else None
    total, parts = generator_total_loss(batch.gt, batch.masked, pred, batch.fg, state.extractor, fake,
                                        cfg.loss_weights, cfg.cF_target)
    parts = {**parts, "total": total, "critic": loss_d.detach()}
    _check_finite(parts, state.step + 1)
    state.opt_g.zero_grad(set_to_none=True)
    total.backward()
    state.opt_g.step()
    d.requires_grad_(True)

    state.step += 1
    state.running = {k: float(v.detach()) for k, v in parts.items()}
    return state


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample order for one epoch; a function of (seed, epoch) only, so resumes replay it."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def _ckpt_path(out_dir: Path, step: int) -> Path:
    return out_dir / "checkpoints" / f"step_{step:07d}.npz"


def _prepare_loss_log(path: Path, resume_step: int) -> None:
    """Fresh header, or keep only rows up to the resume step."""
    kept = []
    if resume_step > 0 and path.exists():
        with open(path, newline="") as fh:
            kept = [r for r in csv.DictReader(fh) if int(r["step"]) <= resume_step]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        writer.writerows(kept)


def _append_loss(path: Path, step: int, running: dict[str, float]) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow([step] + [repr(running[k]) for k in LOSS_COLUMNS[1:]])


def read_loss_log(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def sample_rows(params: NetParams, batch: Batch, n: int = 4, hole_channel: bool = False):
    """(input, prediction, composite, ground truth) rows in unit range."""
    k = min(n, batch.gt.shape[0])
    with torch.no_grad():
        pred = params.generator(batch.masked[:k], batch.hole[:k] if hole_channel else None)
    rows = []
    for i in range(k):
        gt = convert_range(batch.gt[i].permute(1, 2, 0).numpy(), SYMMETRIC, UNIT)
        inp = convert_range(batch.masked[i].permute(1, 2, 0).numpy(), SYMMETRIC, UNIT)
        p = convert_range(pred[i].permute(1, 2, 0).numpy(), SYMMETRIC, UNIT)
        comp = composite_output(p, gt, batch.hole[i].numpy())
        rows.append((inp, p, comp, gt))
    return rows


def train(cfg: RunConfig, extractor=None) -> Path:
    """Run ``cfg.epochs`` epochs; returns the final checkpoint path.

    Writes under ``cfg.out_dir``: ``config.toml``, ``losses.csv``,
    ``losses.png``, ``checkpoints/step_*.npz`` and ``samples/epoch_*.png``.
    """
    from .plotting import plot_loss_csv, save_sample_grid

    out = Path(cfg.out_dir)
    samples = load_dataset(cfg.data_root, cfg.split, size=cfg.image_size, seed=cfg.seed)
    if not samples and cfg.epochs > 0:
        raise ValueError(f"no training images under {cfg.data_root}")
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "samples").mkdir(exist_ok=True)
    write_config(cfg, out / "config.toml")

    set_determinism(cfg)
    state = resume_state(cfg.resume, cfg, extractor) if cfg.resume else new_state(cfg, extractor)
    data = make_batch(samples) if samples else None
    n = len(samples)
    per_epoch = math.ceil(n / cfg.batch_size) if n else 0
    total_steps = cfg.epochs * per_epoch
    log_path = out / "losses.csv"
    _prepare_loss_log(log_path, state.step)

    def checkpoint() -> Path:
        return save_checkpoint(_ckpt_path(out, state.step), state.params, state.step, state.epoch,
                               state.opt_g, state.opt_d, extra={"config": cfg.to_dict()})

    if state.step == 0:
        checkpoint()
    logger.info("training %d images for %d steps (%d per epoch)", n, total_steps, per_epoch)
    while state.step < total_steps:
        epoch, pos = divmod(state.step, per_epoch)
        state.epoch = epoch
        order = epoch_order(cfg.seed, epoch, n)
        batch = subset(data, order[pos * cfg.batch_size:(pos + 1) * cfg.batch_size])
        train_step(state, batch, cfg)
        _append_loss(log_path, state.step, state.running)
        if pos == per_epoch - 1:
            state.epoch = epoch + 1
            if cfg.samples_every and state.epoch % cfg.samples_every == 0:
                save_sample_grid(out / "samples" / f"epoch_{state.epoch:04d}.png",
                                 sample_rows(state.params, data, hole_channel=cfg.hole_channel),
                                 title=f"epoch {state.epoch}, step {state.step}")
        if state.step % cfg.checkpoint_every == 0 or state.step == total_steps:
            checkpoint()
        if state.step % 50 == 0:
            logger.info("step %d total=%.5f critic=%.5f", state.step, state.running["total"],
                        state.running["critic"])
    plot_loss_csv(log_path, out / "losses.png")
    return _ckpt_path(out, state.step)


def infer(checkpoint, image_path, hole_path, out_path, composite: bool = True) -> Path:
    """Inpaint one image; with ``composite`` only hole pixels are replaced."""
    params, header, _, _ = load_checkpoint(checkpoint)
    gt = read_image(image_path)
    hole = read_mask(hole_path)
    if hole.shape != gt.shape[:2]:
        raise DimensionError(f"hole {hole.shape} vs image {gt.shape[:2]}")
    k = 2 ** params.gspec.depth
    if gt.shape[0] % k or gt.shape[1] % k:
        raise DimensionError(f"image {gt.shape[:2]} not divisible by 2**depth = {k}")
    x = torch.from_numpy(convert_range(gt, UNIT, SYMMETRIC).transpose(2, 0, 1)).float()
    h = torch.from_numpy(hole).float()
    with torch.no_grad():
        pred = params.generator((x * h).unsqueeze(0), h.unsqueeze(0) if params.gspec.hole_channel else None)
    pred = convert_range(pred[0].permute(1, 2, 0).double().numpy(), SYMMETRIC, UNIT)
    out = composite_output(pred, gt, hole) if composite else pred
    write_image(out_path, np.clip(out, 0, 1))
    return Path(out_path)


def checkpoint_step(path) -> int:
    return int(read_header(path)["step"])
