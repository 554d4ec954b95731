"""MSE / MAE / PSNR / SSIM / FID, either over the whole image or restricted to a mask.

Images are ``(H, W)`` or ``(H, W, C)`` arrays in [0, 1].  ``scope_mask`` is an
``(H, W)`` binary array; when given, only pixels (or, for SSIM, windows
centred on pixels) where it is 1 count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import DimensionError, as_binary_mask, read_image, read_mask

logger = logging.getLogger(__name__)

METRICS = ("mse", "mae", "psnr", "ssim")
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


class EmptyScopeError(ValueError):
    """Raised when a scope mask selects no pixels."""


def _prep(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise DimensionError(f"gt {gt.shape} vs pred {pred.shape}")
    if gt.ndim == 2:
        gt, pred = gt[..., None], pred[..., None]
    return gt, pred


def _weights(gt, scope_mask):
    if scope_mask is None:
        return np.ones(gt.shape[:2])
    m = as_binary_mask(scope_mask, "scope_mask")
    if m.shape != gt.shape[:2]:
        raise DimensionError(f"scope mask {m.shape} vs image {gt.shape[:2]}")
    if not m.any():
        raise EmptyScopeError("scope mask selects no pixels")
    return m


def _masked_mean(values, m):
    # denominator counts included elements (pixels x channels)
    return float((values * m[..., None]).sum() / (m.sum() * values.shape[2]))


def mse(gt, pred, scope_mask=None) -> float:
    gt, pred = _prep(gt, pred)
    return _masked_mean((gt - pred) ** 2, _weights(gt, scope_mask))


def mae(gt, pred, scope_mask=None) -> float:
    gt, pred = _prep(gt, pred)
    return _masked_mean(np.abs(gt - pred), _weights(gt, scope_mask))


def psnr_from_mse(err: float) -> float:
    return math.inf if err == 0 else 10.0 * math.log10(1.0 / err)


def psnr(gt, pred, scope_mask=None) -> float:
    """PSNR in dB for unit dynamic range; ``inf`` when the images match."""
    return psnr_from_mse(mse(gt, pred, scope_mask))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    r = len(g) // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim_map(gt, pred) -> np.ndarray:
    """Local SSIM for every fully-contained 11x11 window, per channel.

    Returns ``(H - 10, W - 10, C)``; entry ``(i, j)`` belongs to the window
    centred at pixel ``(i + 5, j + 5)``.
    """
    gt, pred = _prep(gt, pred)
    if min(gt.shape[:2]) < SSIM_WINDOW:
        raise DimensionError(f"image {gt.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    out = []
    for c in range(gt.shape[2]):
        x, y = gt[..., c], pred[..., c]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        out.append(num / den)
    return np.stack(out, axis=-1)


def ssim(gt, pred, scope_mask=None) -> float:
    smap = ssim_map(gt, pred)
    if scope_mask is None:
        return float(smap.mean())
    m = _weights(_prep(gt, pred)[0], scope_mask)
    r = SSIM_WINDOW // 2
    centres = m[r:-r, r:-r]
    if not centres.any():
        raise EmptyScopeError("no SSIM window is centred inside the scope mask")
    return _masked_mean(smap, centres)


# --- FID -------------------------------------------------------------------


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((a + a.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b, tol: float = 1e-6) -> float:
    """Frechet distance between two Gaussians.

    The trace of ``(cov_a cov_b)^(1/2)`` is taken from the eigenvalues of the
    symmetric product ``sqrt(cov_a) cov_b sqrt(cov_a)``, which has the same
    spectrum.  Slightly negative eigenvalues are rounding noise and are
    clamped to zero.
    """
    mu_a, mu_b = np.asarray(mu_a, np.float64), np.asarray(mu_b, np.float64)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(np.float64), np.atleast_2d(cov_b).astype(np.float64)
    root_a = _sqrtm_psd(cov_a)
    prod = root_a @ cov_b @ root_a
    eig = np.linalg.eigvalsh((prod + prod.T) / 2)
    scale = max(1.0, float(np.abs(eig).max(initial=0.0)))
    if eig.min(initial=0.0) < -tol * scale:
        logger.warning("covariance product has eigenvalue %.3g below tolerance; clamped", eig.min())
    tr_cross = float(np.sqrt(np.clip(eig, 0, None)).sum())
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_cross)


def fid_from_embeddings(emb_a, emb_b) -> float:
    emb_a, emb_b = np.asarray(emb_a, np.float64), np.asarray(emb_b, np.float64)
    for name, e in (("set_a", emb_a), ("set_b", emb_b)):
        if e.ndim != 2 or e.shape[0] < 2:
            raise ValueError(f"{name}: need at least 2 embeddings, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise FloatingPointError(f"{name}: non-finite embeddings")
    return frechet_distance(emb_a.mean(0), np.cov(emb_a, rowvar=False),
                            emb_b.mean(0), np.cov(emb_b, rowvar=False))


def fid(set_a, set_b, backend, scope_masks_a=None, scope_masks_b=None) -> float:
    """FID between two image sets embedded by ``backend``.

    With scope masks, each image is multiplied by its mask before embedding.
    """
    def embed(images, masks):
        images = [np.asarray(im, np.float64) for im in images]
        if masks is not None:
            images = [im * (np.asarray(m, np.float64)[..., None] if im.ndim == 3 else m)
                      for im, m in zip(images, masks)]
        return backend.embed(images)

    return fid_from_embeddings(embed(set_a, scope_masks_a), embed(set_b, scope_masks_b))


# --- embedding backends ------------------------------------------------------


class TinyConvBackend:
    """Fixed random-weight conv net (seeded); channel means and stds give ``dim`` features.

    Meant for offline tests; values are not comparable to Inception FID.
    """

    name = "tiny"

    def __init__(self, seed: int = 0, dim: int = 64):
        if dim < 8 or dim % 2:
            raise ValueError("embedding dim must be an even number >= 8")
        import torch
        import torch.nn as nn

        gen = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, dim // 2, 3, stride=2, padding=1), nn.ReLU(),
        ).double()
        with torch.no_grad():
            for m in self.net:
                if isinstance(m, nn.Conv2d):
                    m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=torch.float64)
                                   * math.sqrt(2.0 / m.weight[0].numel()))
                    m.bias.copy_(torch.randn(m.bias.shape, generator=gen, dtype=torch.float64) * 0.1)
        self.net.eval()
        self.dim = dim

    def embed(self, images) -> np.ndarray:
        import torch

        x = np.stack([np.repeat(im[..., None], 3, -1) if im.ndim == 2 else im for im in images])
        with torch.no_grad():
            t = torch.from_numpy(x).permute(0, 3, 1, 2) * 2 - 1
            f = self.net(t)
            # mean and spatial std keep the features informative at any image size
            out = torch.cat([f.mean((2, 3)), f.std((2, 3), unbiased=False)], 1)
        return out.numpy()


class InceptionBackend:
    """2048-d pool features of torchvision's pretrained Inception-v3."""

    name = "inception"

    def __init__(self, weights_path: str | None = None, batch_size: int = 16):
        import torch
        from torchvision.models import Inception_V3_Weights, inception_v3

        model = inception_v3(weights=None, aux_logits=True, init_weights=False)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
        else:
            state = Inception_V3_Weights.IMAGENET1K_V1.get_state_dict(progress=False)
        model.load_state_dict(state)
        model.fc = torch.nn.Identity()
        self.model = model.eval()
        self.batch_size = batch_size

    def embed(self, images) -> np.ndarray:
        import torch
        import torch.nn.functional as F

        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        feats = []
        with torch.no_grad():
            for i in range(0, len(images), self.batch_size):
                x = torch.from_numpy(np.stack(images[i:i + self.batch_size])).float().permute(0, 3, 1, 2)
                x = F.interpolate(x, size=(299, 299), mode="bilinear", align_corners=False)
                feats.append(self.model((x - mean) / std).double().numpy())
        return np.concatenate(feats)


def get_backend(name: str, **kwargs):
    if name == "tiny":
        return TinyConvBackend(**kwargs)
    if name == "inception":
        return InceptionBackend(**kwargs)
    raise ValueError(f"unknown embedding backend {name!r}")


# --- reports ---------------------------------------------------------------


@dataclass
class MetricReport:
    scope: str
    backend: str
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)
    fid: float = math.nan

    @property
    def aggregate(self) -> dict[str, float]:
        agg = {}
        for k in METRICS:
            vals = [row[k] for row in self.per_image.values()]
            agg[k] = float(np.mean(vals)) if vals else math.nan
        agg["fid"] = self.fid
        return agg

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", *METRICS, "fid"])
            for sid in sorted(self.per_image):
                row = self.per_image[sid]
                writer.writerow([sid, *(repr(row[k]) for k in METRICS), ""])
            agg = self.aggregate
            writer.writerow(["__mean__", *(repr(agg[k]) for k in METRICS), repr(agg["fid"])])

    def to_dict(self) -> dict:
        return {"scope": self.scope, "backend": self.backend, "count": len(self.per_image),
                "aggregate": self.aggregate}


def image_metrics(gt, pred, scope_mask=None) -> dict[str, float]:
    err = mse(gt, pred, scope_mask)
    return {"mse": err, "mae": mae(gt, pred, scope_mask), "psnr": psnr_from_mse(err),
            "ssim": ssim(gt, pred, scope_mask)}


def _pngs(directory) -> dict[str, Path]:
    return {p.stem: p for p in sorted(Path(directory).glob("*.png"))}


def evaluate_pairs(dir_gt, dir_pred, dir_fg=None, backend=None) -> dict[str, MetricReport]:
    """Global report, plus a foreground-restricted one when ``dir_fg`` is given."""
    backend = backend or TinyConvBackend()
    gts, preds = _pngs(dir_gt), _pngs(dir_pred)
    fgs = _pngs(dir_fg) if dir_fg is not None else None
    problems = sorted(set(gts) ^ set(preds))
    if fgs is not None:
        problems = sorted(set(problems) | (set(gts) ^ set(fgs)))
    if problems:
        raise ValueError(f"ids not matched across directories: {', '.join(problems)}")

    ids = sorted(gts)
    gt_imgs = [read_image(gts[i]) for i in ids]
    pred_imgs = [read_image(preds[i]) for i in ids]
    reports = {"global": MetricReport("global", backend.name)}
    reports["global"].per_image = {i: image_metrics(g, p) for i, g, p in zip(ids, gt_imgs, pred_imgs)}
    reports["global"].fid = _safe_fid(gt_imgs, pred_imgs, backend)
    if fgs is not None:
        masks = [read_mask(fgs[i]) for i in ids]
        rep = MetricReport("foreground", backend.name)
        rep.per_image = {i: image_metrics(g, p, m) for i, g, p, m in zip(ids, gt_imgs, pred_imgs, masks)}
        rep.fid = _safe_fid(gt_imgs, pred_imgs, backend, masks)
        reports["foreground"] = rep
    return reports


def _safe_fid(a, b, backend, masks=None) -> float:
    if len(a) < 2:
        logger.warning("FID needs at least 2 images per set; reporting NaN")
        return math.nan
    return fid(a, b, backend, masks, masks)


def write_reports(reports: dict[str, MetricReport], out_dir, config: dict) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for scope, rep in reports.items():
        path = out_dir / f"report_{scope}.csv"
        rep.write_csv(path)
        written.append(path)
    blob = json.dumps(config, sort_keys=True, default=str)
    summary = {
        "backend": next(iter(reports.values())).backend,
        "count": len(next(iter(reports.values())).per_image),
        "config": config,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "reports": {k: v.to_dict() for k, v in reports.items()},
    }
    path = out_dir / "report.json"
    path.write_text(json.dumps(_finite(summary), indent=2, default=str))
    written.append(path)
    return written


def _finite(obj):
    # strict JSON has no inf/nan; encode them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj
