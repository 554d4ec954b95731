"""Image/mask value types, hole application, resizing and dataset ingestion.

Conventions used throughout the package:

* images are ``(H, W, C)`` float arrays, either in ``unit`` range [0, 1]
  (metrics, PNG I/O) or ``symmetric`` range [-1, 1] (network side);
* hole masks are ``(H, W)`` binary arrays with 1 = valid pixel, 0 = hole;
* foreground masks are ``(H, W)`` binary arrays with 1 = skin/hair.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

UNIT = "unit"
SYMMETRIC = "symmetric"
_RANGES = {UNIT: (0.0, 1.0), SYMMETRIC: (-1.0, 1.0)}

SPLITS = ("train", "test", "all")


class DimensionError(ValueError):
    """Raised when arrays that must agree in shape do not."""


class IngestionError(RuntimeError):
    """Raised when a dataset directory is malformed."""


@dataclass(frozen=True)
class ImageTensor:
    data: np.ndarray
    value_range: str = UNIT

    def __post_init__(self):
        if self.value_range not in _RANGES:
            raise ValueError(f"unknown value_range {self.value_range!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise DimensionError(f"expected (H, W, C) with C in {{1, 3}}, got {data.shape}")
        if data.shape[0] < 8 or data.shape[1] < 8:
            raise DimensionError(f"image must be at least 8x8, got {data.shape[:2]}")
        lo, hi = _RANGES[self.value_range]
        if not np.all(np.isfinite(data)) or data.min() < lo or data.max() > hi:
            raise ValueError(f"image values leave the declared {self.value_range} range [{lo}, {hi}]")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def to(self, value_range: str) -> "ImageTensor":
        return ImageTensor(convert_range(self.data, self.value_range, value_range), value_range)


@dataclass(frozen=True)
class SamplePair:
    image: np.ndarray  # (H, W, 3), unit range
    foreground: np.ndarray  # (H, W) binary
    hole: np.ndarray  # (H, W) binary, 1 = valid
    id: str


def convert_range(data, src: str, dst: str) -> np.ndarray:
    """Linearly map between the ``unit`` and ``symmetric`` value ranges."""
    data = np.asarray(data, dtype=np.float64)
    if src == dst:
        return data.copy()
    if (src, dst) == (UNIT, SYMMETRIC):
        return data * 2.0 - 1.0
    if (src, dst) == (SYMMETRIC, UNIT):
        return (data + 1.0) / 2.0
    raise ValueError(f"cannot convert {src!r} -> {dst!r}")


def as_binary_mask(mask, name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim == 3 and mask.shape[2] == 1:
        mask = mask[..., 0]
    if mask.ndim != 2:
        raise DimensionError(f"{name} must be (H, W), got {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return mask.astype(np.float64)


def _check_spatial(image: np.ndarray, mask: np.ndarray) -> None:
    if image.shape[:2] != mask.shape[:2]:
        raise DimensionError(f"spatial shape mismatch: image {image.shape[:2]} vs mask {mask.shape[:2]}")


def _data(image):
    return image.data if isinstance(image, ImageTensor) else np.asarray(image, dtype=np.float64)


def _wrap_like(template, data):
    if isinstance(template, ImageTensor):
        return ImageTensor(data, template.value_range)
    return data


def apply_hole_mask(image, hole):
    """Zero out hole pixels: ``M_I = image * hole`` broadcast over channels."""
    data = _data(image)
    hole = as_binary_mask(hole, "hole")
    _check_spatial(data, hole)
    out = data * (hole[..., None] if data.ndim == 3 else hole)
    return _wrap_like(image, out)


def composite_output(pred, gt, hole):
    """Keep valid pixels from ``gt`` and take only hole pixels from ``pred``."""
    p, g = _data(pred), _data(gt)
    if p.shape != g.shape:
        raise DimensionError(f"pred {p.shape} vs gt {g.shape}")
    hole = as_binary_mask(hole, "hole")
    _check_spatial(g, hole)
    h = hole[..., None] if g.ndim == 3 else hole
    # np.where keeps both branches bit-exact (no arithmetic on the kept pixel)
    return _wrap_like(gt, np.where(h == 1, g, p))


def _check_target(target) -> tuple[int, int]:
    th, tw = (int(t) for t in target)
    if th <= 0 or tw <= 0:
        raise ValueError(f"target dims must be positive, got {target}")
    return th, tw


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel aligned sample positions (same convention as align_corners=False)
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_image(image, target):
    """Bilinear resize of an ``(H, W, C)`` image.

    :class:`ImageTensor` inputs are clamped to their range and keep the >= 8
    size floor; plain arrays may go smaller.
    """
    th, tw = _check_target(target)
    data = _data(image)
    h, w = data.shape[:2]
    if (h, w) == (th, tw):
        return _wrap_like(image, data.copy())
    r0, r1, fr = _bilinear_axis(h, th)
    c0, c1, fc = _bilinear_axis(w, tw)
    fr = fr[:, None, None] if data.ndim == 3 else fr[:, None]
    rows = data[r0] * (1 - fr) + data[r1] * fr
    fc = fc[None, :, None] if data.ndim == 3 else fc[None, :]
    out = rows[:, c0] * (1 - fc) + rows[:, c1] * fc
    if isinstance(image, ImageTensor):
        lo, hi = _RANGES[image.value_range]
        out = np.clip(out, lo, hi)
    return _wrap_like(image, out)


def nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    """Source index for each output position; matches torch's ``nearest`` mode."""
    return np.minimum(np.floor(np.arange(n_out) * (n_in / n_out)).astype(int), n_in - 1)


def resize_mask(mask, target):
    """Nearest-neighbour resize over the last two axes (numpy or torch input)."""
    th, tw = _check_target(target)
    h, w = mask.shape[-2:]
    ri = nearest_indices(h, th)
    ci = nearest_indices(w, tw)
    if isinstance(mask, np.ndarray):
        return mask[..., ri[:, None], ci[None, :]]
    import torch

    ri_t = torch.as_tensor(ri, device=mask.device)
    ci_t = torch.as_tensor(ci, device=mask.device)
    return mask.index_select(-2, ri_t).index_select(-1, ci_t)


# --- PNG I/O ---------------------------------------------------------------


def read_image(path, value_range: str = UNIT) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return convert_range(arr, UNIT, value_range)


def write_image(path, data, value_range: str = UNIT) -> None:
    arr = convert_range(np.asarray(data), value_range, UNIT)
    arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path)


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.float64)


def write_mask(path, mask) -> None:
    mask = as_binary_mask(mask)
    Image.fromarray((mask * 255).astype(np.uint8)).save(path)


# --- dataset ---------------------------------------------------------------


def _stems(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def hole_index(seed: int, sample_id: str, pool_size: int) -> int:
    """Pool position assigned to ``sample_id``; depends only on (seed, id)."""
    rng = np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8"))])
    return int(rng.integers(pool_size))


def hole_seed(seed: int, sample_id: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(sample_id.encode("utf-8"))]).generate_state(1)[0])


def resolve_split_root(root, split: str) -> Path:
    root = Path(root)
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    if split != "all" and (root / split).is_dir():
        return root / split
    return root


def load_dataset(root, split: str = "train", size: int | Sequence[int] | None = None,
                 seed: int = 0) -> list[SamplePair]:
    """Read ``images/``, ``foreground/`` and the ``holes/`` pool under ``root``.

    ``root/<split>/`` is used when it exists, otherwise ``root`` itself.  Every
    image needs a same-stem foreground PNG.  Holes are assigned from the pool
    by :func:`hole_index`; when no pool exists a free-form mask is generated
    per sample from (seed, id).
    """
    base = resolve_split_root(root, split)
    images = _stems(base / "images")
    if not images:
        return []
    fgs = _stems(base / "foreground")
    missing = sorted(set(images) - set(fgs))
    if missing:
        raise IngestionError(f"images without foreground mask: {', '.join(missing)}")

    pool_dir = base / "holes"
    if not pool_dir.is_dir() and (Path(root) / "holes").is_dir():
        pool_dir = Path(root) / "holes"
    pool = sorted(pool_dir.glob("*.png")) if pool_dir.is_dir() else []

    target = None
    if size is not None:
        target = (size, size) if np.isscalar(size) else tuple(size)

    samples = []
    for sid in sorted(images):
        img = read_image(images[sid])
        fg = read_mask(fgs[sid])
        if target is not None:
            img = np.clip(resize_image(img, target), 0.0, 1.0)
            fg = resize_mask(fg, target)
        _check_spatial(img, fg)
        if not fg.any():
            raise IngestionError(f"foreground mask of {sid} is all zeros")
        if pool:
            hole = read_mask(pool[hole_index(seed, sid, len(pool))])
            if hole.shape != img.shape[:2]:
                hole = resize_mask(hole, img.shape[:2])
        else:
            from .masks import StrokeConfig, generate_freeform_mask

            hole = generate_freeform_mask(hole_seed(seed, sid), img.shape[:2],
                                          StrokeConfig.scaled(img.shape[:2]))
        samples.append(SamplePair(img, fg, hole, sid))
    logger.info("loaded %d samples from %s", len(samples), base)
    return samples
