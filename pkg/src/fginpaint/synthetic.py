"""Procedural toy "faces" with parsing labels, for offline runs and tests.

Each sample is a coloured background, a hair cap, a shaded skin ellipse, two
eyes and a mouth.  Labels follow a CelebAMask-HQ-like naming.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import write_image, write_mask
from .masks import AttributeMap, StrokeConfig, foreground_from_attributes, generate_freeform_mask, mask_seeds

LABELS = {"background": 0, "skin": 1, "hair": 2, "l_eye": 3, "r_eye": 4, "mouth": 5}


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def toy_face(rng: np.random.Generator, size: int = 64):
    """Return ``(image in [0,1] (H,W,3), label map (H,W) int)``."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    s = size
    bg_a, bg_b = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    t = (yy / s)[..., None]
    img = bg_a * (1 - t) + bg_b * t
    labels = np.zeros((s, s), dtype=np.int64)

    cy, cx = s * rng.uniform(0.5, 0.58), s * rng.uniform(0.44, 0.56)
    ry, rx = s * rng.uniform(0.28, 0.34), s * rng.uniform(0.22, 0.27)
    hair = _ellipse(yy, xx, cy - ry * 0.25, cx, ry * 1.05, rx * 1.25) & (yy < cy - ry * 0.1)
    hair_col = rng.uniform(0.05, 0.6) * np.array([1.0, rng.uniform(0.6, 0.9), rng.uniform(0.3, 0.7)])
    img[hair] = hair_col
    labels[hair] = LABELS["hair"]

    face = _ellipse(yy, xx, cy, cx, ry, rx)
    skin_col = np.array([rng.uniform(0.6, 0.95), rng.uniform(0.45, 0.75), rng.uniform(0.35, 0.6)])
    shade = 1.0 - 0.25 * np.clip(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2, 0, 1)
    img[face] = (skin_col * shade[..., None])[face]
    labels[face] = LABELS["skin"]

    eye_dy, eye_dx, eye_r = ry * 0.2, rx * 0.42, s * 0.035
    for name, sign in (("l_eye", -1), ("r_eye", 1)):
        eye = _ellipse(yy, xx, cy - eye_dy, cx + sign * eye_dx, eye_r, eye_r * 1.4)
        img[eye] = (0.08, 0.06, 0.05)
        labels[eye] = LABELS[name]
    mouth = _ellipse(yy, xx, cy + ry * 0.5, cx, s * 0.025, rx * rng.uniform(0.3, 0.5))
    img[mouth] = (rng.uniform(0.55, 0.8), 0.15, 0.2)
    labels[mouth] = LABELS["mouth"]
    return np.clip(img, 0, 1), labels


def make_toy_dataset(root, n: int = 8, size: int = 64, seed: int = 0, n_holes: int | None = None) -> Path:
    """Write ``images/``, ``attrs/`` + ``labels.json``, ``foreground/`` and ``holes/`` under ``root``."""
    root = Path(root)
    for sub in ("images", "attrs", "foreground", "holes"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "labels.json").write_text(json.dumps(LABELS, indent=2))
    rng = np.random.default_rng(seed)
    for i in range(n):
        img, labels = toy_face(rng, size)
        sid = f"{i:05d}"
        write_image(root / "images" / f"{sid}.png", img)
        Image.fromarray(labels.astype(np.uint8)).save(root / "attrs" / f"{sid}.png")
        write_mask(root / "foreground" / f"{sid}.png", foreground_from_attributes(AttributeMap(labels, LABELS)))
    cfg = StrokeConfig.scaled((size, size))
    for j, ms in enumerate(mask_seeds(seed, n_holes if n_holes is not None else n)):
        write_mask(root / "holes" / f"{j:05d}.png", generate_freeform_mask(ms, (size, size), cfg))
    return root
