"""Free-form hole masks and foreground masks built from face-parsing labels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .imaging import as_binary_mask

DEFAULT_RATIO = (0.01, 0.60)
FOREGROUND_LABELS = ("skin", "hair")


class MaskGenerationError(RuntimeError):
    pass


class LabelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StrokeConfig:
    """Brush-stroke random walk parameters.

    Widths are in pixels and tuned for 256x256 masks; use :meth:`scaled` for
    other sizes.
    """

    num_strokes: tuple[int, int] = (1, 6)
    vertex_count: tuple[int, int] = (4, 12)
    max_stroke_width: float = 36.0
    max_turn_angle: float = math.pi / 3
    target_ratio: tuple[float, float] = DEFAULT_RATIO
    max_step: float = 48.0

    def __post_init__(self):
        for name in ("num_strokes", "vertex_count", "target_ratio"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} interval is empty: {(lo, hi)}")
        if self.num_strokes[0] < 1 or self.vertex_count[0] < 2:
            raise ValueError("need at least one stroke of at least two vertices")
        lo, hi = self.target_ratio
        if lo < 0 or hi > 1:
            raise ValueError(f"target_ratio must lie in [0, 1], got {self.target_ratio}")
        if self.max_stroke_width < 1 or self.max_step <= 0:
            raise ValueError("stroke width must be >= 1 px and step > 0")

    @classmethod
    def scaled(cls, size, **overrides) -> "StrokeConfig":
        """Default config with pixel lengths rescaled from 256 to ``size``."""
        k = min(size) / 256.0
        base = cls()
        cfg = replace(base, max_stroke_width=max(1.0, base.max_stroke_width * k),
                      max_step=max(1.0, base.max_step * k))
        return replace(cfg, **overrides) if overrides else cfg


def hole_to_image_ratio(mask) -> float:
    """Fraction of hole (zero) pixels."""
    mask = as_binary_mask(mask)
    return float(np.count_nonzero(mask == 0)) / mask.size


def _stamp_segment(holes: np.ndarray, p0, p1, radius: float) -> None:
    """Mark pixels whose centre lies within ``radius`` of segment p0-p1."""
    h, w = holes.shape
    (y0, x0), (y1, x1) = p0, p1
    r0 = max(int(math.floor(min(y0, y1) - radius)), 0)
    r1 = min(int(math.ceil(max(y0, y1) + radius)) + 1, h)
    c0 = max(int(math.floor(min(x0, x1) - radius)), 0)
    c1 = min(int(math.ceil(max(x0, x1) + radius)) + 1, w)
    if r0 >= r1 or c0 >= c1:
        return
    yy, xx = np.mgrid[r0:r1, c0:c1]
    dy, dx = y1 - y0, x1 - x0
    seg2 = dy * dy + dx * dx
    if seg2 == 0:
        t = np.zeros(yy.shape)
    else:
        t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / seg2, 0.0, 1.0)
    d2 = (yy - (y0 + t * dy)) ** 2 + (xx - (x0 + t * dx)) ** 2
    holes[r0:r1, c0:c1] |= d2 <= radius * radius


def _draw_strokes(rng: np.random.Generator, size, cfg: StrokeConfig) -> np.ndarray:
    h, w = size
    holes = np.zeros((h, w), dtype=bool)
    for _ in range(rng.integers(cfg.num_strokes[0], cfg.num_strokes[1] + 1)):
        n_vertices = rng.integers(cfg.vertex_count[0], cfg.vertex_count[1] + 1)
        radius = rng.uniform(1.0, cfg.max_stroke_width) / 2.0
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        heading = rng.uniform(0, 2 * math.pi)
        for _ in range(n_vertices - 1):
            heading += rng.uniform(-cfg.max_turn_angle, cfg.max_turn_angle)
            step = rng.uniform(cfg.max_step / 4, cfg.max_step)
            ny = min(max(y + step * math.sin(heading), 0.0), h - 1.0)
            nx = min(max(x + step * math.cos(heading), 0.0), w - 1.0)
            _stamp_segment(holes, (y, x), (ny, nx), radius)
            y, x = ny, nx
    return holes


def generate_freeform_mask(seed: int, size, cfg: StrokeConfig | None = None,
                           max_tries: int = 100) -> np.ndarray:
    """Random brush-stroke hole mask (1 = valid, 0 = hole).

    Candidates are redrawn from the same seeded stream until the hole ratio
    falls inside ``cfg.target_ratio``; :class:`MaskGenerationError` after
    ``max_tries`` rejections.
    """
    h, w = (int(s) for s in size)
    if h < 32 or w < 32:
        raise ValueError(f"mask size must be at least 32x32, got {(h, w)}")
    cfg = cfg or StrokeConfig.scaled((h, w))
    lo, hi = cfg.target_ratio
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        holes = _draw_strokes(rng, (h, w), cfg)
        ratio = np.count_nonzero(holes) / holes.size
        if lo <= ratio <= hi:
            return (~holes).astype(np.float64)
    raise MaskGenerationError(
        f"no mask with hole ratio in [{lo}, {hi}] after {max_tries} samples (seed={seed})")


def mask_seeds(seed: int, n: int) -> list[int]:
    """Independent per-mask seeds derived from one run seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


# --- foreground from face-parsing labels ------------------------------------


@dataclass(frozen=True)
class AttributeMap:
    data: np.ndarray
    label_of: Mapping[str, int]

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or not np.issubdtype(data.dtype, np.integer):
            raise ValueError("attribute map must be a 2-D integer array")
        valid = np.fromiter(self.label_of.values(), dtype=np.int64)
        if data.size and not np.isin(data, valid).all():
            bad = sorted(set(np.unique(data)) - set(valid.tolist()))
            raise LabelConfigError(f"labels {bad} are not named in the label mapping")
        object.__setattr__(self, "data", data)


def foreground_from_attributes(attrs: AttributeMap,
                               include: Iterable[str] = FOREGROUND_LABELS) -> np.ndarray:
    """Binary mask that is 1 wherever the label is one of ``include``."""
    include = tuple(include)
    missing = [name for name in include if name not in attrs.label_of]
    if missing:
        raise LabelConfigError(f"label mapping lacks required names: {missing}")
    wanted = [attrs.label_of[name] for name in include]
    return np.isin(attrs.data, wanted).astype(np.float64)


def load_labels(path) -> dict[str, int]:
    with open(path) as fh:
        labels = json.load(fh)
    if not isinstance(labels, dict):
        raise LabelConfigError(f"{path}: expected a JSON object of name -> index")
    for name in FOREGROUND_LABELS:
        if name not in labels:
            raise LabelConfigError(f"{path}: missing required label {name!r}")
    return {str(k): int(v) for k, v in labels.items()}


def read_attribute_map(path, label_of: Mapping[str, int]) -> AttributeMap:
    from PIL import Image

    with Image.open(Path(path)) as im:
        if im.mode not in ("P", "L"):
            raise ValueError(f"{path}: expected an 8-bit indexed or grayscale PNG, got mode {im.mode}")
        data = np.asarray(im).astype(np.int64)
    return AttributeMap(data, label_of)
