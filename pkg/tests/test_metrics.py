import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fginpaint.imaging import DimensionError, write_image, write_mask
from fginpaint.metrics import (METRICS, EmptyScopeError, TinyConvBackend, evaluate_pairs, fid,
                               fid_from_embeddings, frechet_distance, gaussian_window, mae, mse, psnr,
                               psnr_from_mse, ssim, write_reports)

# 2x2x1 fixture: residual 0.5 at (0,0), zeros elsewhere, foreground = top row
GT = np.array([[1.0, 0.0], [0.0, 1.0]])
PRED = np.array([[0.5, 0.0], [0.0, 1.0]])
FG = np.array([[1, 1], [0, 0]])
C1, C2 = 0.01 ** 2, 0.03 ** 2


def naive_ssim(x, y):
    """Direct per-window SSIM with explicit weighted sums, averaged over valid windows."""
    g = gaussian_window()
    w = np.outer(g, g)
    n = len(g)
    vals = []
    for i in range(x.shape[0] - n + 1):
        for j in range(x.shape[1] - n + 1):
            a, b = x[i:i + n, j:j + n], y[i:i + n, j:j + n]
            ma, mb = (w * a).sum(), (w * b).sum()
            va = (w * (a - ma) ** 2).sum()
            vb = (w * (b - mb) ** 2).sum()
            cab = (w * (a - ma) * (b - mb)).sum()
            vals.append((2 * ma * mb + C1) * (2 * cab + C2) / ((ma ** 2 + mb ** 2 + C1) * (va + vb + C2)))
    return float(np.mean(vals))


class TestPixelMetrics:
    def test_identical(self, rng):
        x = rng.uniform(size=(8, 8, 3))
        assert mse(x, x) == 0 and mae(x, x) == 0
        assert psnr(x, x) == math.inf

    def test_extremes(self):
        assert mse(np.zeros((4, 4)), np.ones((4, 4))) == 1

    def test_constant_offset_mae(self):
        x = np.full((4, 4, 3), 0.5)
        assert mae(x, x + 0.25) == pytest.approx(0.25, abs=1e-15)

    def test_fixture_masked(self):
        assert mse(GT, PRED, FG) == pytest.approx(0.125, abs=1e-15)
        assert mae(GT, PRED, FG) == pytest.approx(0.25, abs=1e-15)

    def test_empty_scope(self):
        with pytest.raises(EmptyScopeError):
            mse(GT, PRED, np.zeros((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_psnr_closed_form(self):
        assert psnr_from_mse(0.01) == pytest.approx(20.0, abs=1e-9)
        assert psnr_from_mse(0.25) == pytest.approx(6.0206, abs=1e-4)

    def test_psnr_decreases_with_noise(self, rng):
        x = rng.uniform(size=(32, 32, 3))
        noise = rng.standard_normal(x.shape)
        values = [psnr(x, x + a * noise) for a in (0.01, 0.05, 0.2)]
        assert values[0] > values[1] > values[2]


# 8-bit levels, as read from PNG; arbitrary floats let tiny residuals underflow when squared
levels = st.integers(0, 255).map(lambda v: v / 255)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 5, 2), elements=levels),
       arrays(np.float64, (5, 5, 2), elements=levels),
       arrays(np.int8, (5, 5), elements=st.integers(0, 1)))
def test_pixel_metrics_nonnegative_and_zero_iff_equal(a, b, m):
    if not m.any():
        m[0, 0] = 1
    sel = m.astype(bool)
    same = np.array_equal(a[sel], b[sel])
    for fn in (mse, mae):
        v = fn(a, b, m)
        assert v >= 0
        assert (v == 0) == same


class TestSSIM:
    def test_self(self, rng):
        x = rng.uniform(size=(32, 32, 3))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-6)

    def test_constant_closed_form(self):
        c1, c2 = 0.3, 0.7
        expected = (2 * c1 * c2 + C1) / (c1 ** 2 + c2 ** 2 + C1)
        assert ssim(np.full((16, 16), c1), np.full((16, 16), c2)) == pytest.approx(expected, abs=1e-9)

    def test_matches_naive_oracle(self, rng):
        x, y = rng.uniform(size=(32, 32)), rng.uniform(size=(32, 32))
        assert ssim(x, y) == pytest.approx(naive_ssim(x, y), abs=1e-8)

    def test_too_small(self):
        with pytest.raises(DimensionError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_scope_selects_window_centres(self, rng):
        x, y = rng.uniform(size=(20, 20)), rng.uniform(size=(20, 20))
        m = np.zeros((20, 20))
        m[5, 5] = 1  # only the first valid window is centred here
        from fginpaint.metrics import ssim_map
        assert ssim(x, y, m) == pytest.approx(float(ssim_map(x, y)[0, 0, 0]), abs=1e-12)

    def test_scope_without_centres(self):
        m = np.zeros((16, 16))
        m[0, 0] = 1
        with pytest.raises(EmptyScopeError):
            ssim(np.zeros((16, 16)), np.zeros((16, 16)), m)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (12, 12), elements=st.floats(0, 1)),
       arrays(np.float64, (12, 12), elements=st.floats(0, 1)))
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert s <= 1 + 1e-12
    assert s == pytest.approx(ssim(b, a), abs=1e-12)


class TestFID:
    def test_identical_embeddings(self, rng):
        e = rng.standard_normal((50, 8))
        assert abs(fid_from_embeddings(e, e)) <= 1e-6

    def test_point_masses(self):
        ea, eb = np.array([1.0, 2.0, 3.0]), np.array([0.0, -1.0, 3.5])
        a, b = np.tile(ea, (4, 1)), np.tile(eb, (4, 1))
        assert fid_from_embeddings(a, b) == pytest.approx(float(((ea - eb) ** 2).sum()), abs=1e-6)

    def test_symmetric(self, rng):
        a, b = rng.standard_normal((40, 6)), rng.standard_normal((40, 6)) * 2 + 1
        assert fid_from_embeddings(a, b) == pytest.approx(fid_from_embeddings(b, a), abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_gaussian_population_oracle(self, seed):
        d, n = 8, 500
        rng = np.random.default_rng(seed)
        mu_a, mu_b = np.zeros(d), np.ones(d)
        la, lb = rng.normal(size=(d, d)) / np.sqrt(d), rng.normal(size=(d, d)) / np.sqrt(d)
        cov_a, cov_b = la @ la.T + 0.5 * np.eye(d), lb @ lb.T + 0.5 * np.eye(d)
        cross = scipy.linalg.sqrtm(cov_a @ cov_b).real
        population = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2 * cross))
        assert frechet_distance(mu_a, cov_a, mu_b, cov_b) == pytest.approx(population, rel=1e-8)
        a = rng.multivariate_normal(mu_a, cov_a, n)
        b = rng.multivariate_normal(mu_b, cov_b, n)
        assert fid_from_embeddings(a, b) == pytest.approx(population, rel=0.15)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            fid_from_embeddings(rng.standard_normal((1, 8)), rng.standard_normal((5, 8)))
        bad = rng.standard_normal((5, 8))
        bad[0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            fid_from_embeddings(bad, rng.standard_normal((5, 8)))

    def test_tiny_backend_deterministic(self, rng):
        imgs = [rng.uniform(size=(32, 32, 3)) for _ in range(3)]
        e1, e2 = TinyConvBackend(seed=0).embed(imgs), TinyConvBackend(seed=0).embed(imgs)
        assert e1.shape == (3, 64)
        np.testing.assert_array_equal(e1, e2)
        assert not np.array_equal(e1, TinyConvBackend(seed=1).embed(imgs))

    def test_image_sets(self, rng):
        imgs = [rng.uniform(size=(32, 32, 3)) for _ in range(4)]
        backend = TinyConvBackend()
        assert abs(fid(imgs, imgs, backend)) <= 1e-6
        other = [np.clip(im + 0.3, 0, 1) for im in imgs]
        assert fid(imgs, other, backend) > 1e-3


def _write_set(root, images, name):
    d = root / name
    d.mkdir(parents=True)
    for i, im in enumerate(images):
        write_image(d / f"{i:03d}.png", im)
    return d


@pytest.fixture
def pair_dirs(tmp_path, rng):
    gts = [rng.uniform(size=(24, 24, 3)) for _ in range(3)]
    preds = [np.clip(g + rng.normal(0, 0.1, g.shape), 0, 1) for g in gts]
    fg_dir = tmp_path / "fg"
    fg_dir.mkdir()
    for i in range(3):
        m = np.zeros((24, 24))
        m[4:20, 6:18] = 1
        write_mask(fg_dir / f"{i:03d}.png", m)
    return _write_set(tmp_path, gts, "gt"), _write_set(tmp_path, preds, "pred"), fg_dir


class TestEvaluatePairs:
    def test_identical_dirs(self, pair_dirs):
        gt, _, fg = pair_dirs
        rep = evaluate_pairs(gt, gt, fg)["global"].aggregate
        assert rep["mse"] == 0 and rep["mae"] == 0
        assert rep["ssim"] == pytest.approx(1.0, abs=1e-9)
        assert abs(rep["fid"]) <= 1e-6

    def test_all_ones_foreground_equals_global(self, pair_dirs, tmp_path):
        gt, pred, _ = pair_dirs
        ones = tmp_path / "ones"
        ones.mkdir()
        for i in range(3):
            write_mask(ones / f"{i:03d}.png", np.ones((24, 24)))
        reps = evaluate_pairs(gt, pred, ones)
        g, f = reps["global"], reps["foreground"]
        for sid in g.per_image:
            for k in METRICS:
                assert abs(g.per_image[sid][k] - f.per_image[sid][k]) <= 1e-9
        assert abs(g.fid - f.fid) <= 1e-9

    def test_aggregate_is_mean_of_per_image(self, pair_dirs):
        from fginpaint.imaging import read_image, read_mask
        gt, pred, fg = pair_dirs
        rep = evaluate_pairs(gt, pred, fg)["foreground"]
        for k, fn in (("mse", mse), ("mae", mae), ("ssim", ssim), ("psnr", psnr)):
            oracle = [fn(read_image(gt / f"{i:03d}.png"), read_image(pred / f"{i:03d}.png"),
                         read_mask(fg / f"{i:03d}.png")) for i in range(3)]
            for i, v in enumerate(oracle):
                assert rep.per_image[f"{i:03d}"][k] == pytest.approx(v, abs=1e-12)
            assert abs(rep.aggregate[k] - float(np.mean(oracle))) <= 1e-9

    def test_mismatched_ids(self, pair_dirs):
        gt, pred, _ = pair_dirs
        (pred / "001.png").rename(pred / "zzz.png")
        with pytest.raises(ValueError, match="001.*zzz|zzz.*001"):
            evaluate_pairs(gt, pred)

    def test_write_reports(self, pair_dirs, tmp_path):
        gt, pred, fg = pair_dirs
        paths = write_reports(evaluate_pairs(gt, pred, fg), tmp_path / "out", {"backend": "tiny"})
        assert sorted(p.name for p in paths) == ["report.json", "report_foreground.csv", "report_global.csv"]
        summary = json.loads((tmp_path / "out" / "report.json").read_text())
        assert summary["backend"] == "tiny" and summary["count"] == 3
        assert len(summary["config_hash"]) == 64
        lines = (tmp_path / "out" / "report_global.csv").read_text().splitlines()
        assert lines[0].startswith("id,") and lines[-1].startswith("__mean__") and len(lines) == 5

    def test_single_image_fid_nan(self, tmp_path, rng):
        d = _write_set(tmp_path, [rng.uniform(size=(16, 16, 3))], "one")
        rep = evaluate_pairs(d, d)["global"]
        assert math.isnan(rep.fid)
        write_reports({"global": rep}, tmp_path / "o", {})
        json.loads((tmp_path / "o" / "report.json").read_text())
