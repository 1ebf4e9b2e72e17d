import math
import time

import numpy as np
import pytest

from freqreg.errors import DomainError, EmptyDatasetError, ShapeError
from freqreg.metrics import PSNR_CAP, histogram, histogram_overlap, rates, recon_metrics, ssim, throughput
from freqreg.profiling import MemoryProfiler


def _ssim_direct(x, y, size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for c in range(x.shape[2]):
        for i in range(x.shape[0] - size + 1):
            for j in range(x.shape[1] - size + 1):
                a, b = x[i:i + size, j:j + size, c], y[i:i + size, j:j + size, c]
                ma, mb = (w * a).sum(), (w * b).sum()
                va = (w * (a - ma) ** 2).sum()
                vb = (w * (b - mb) ** 2).sum()
                cov = (w * (a - ma) * (b - mb)).sum()
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestHistogram:
    def test_shared_edges_and_counts(self):
        h = histogram({"id": [0.0, 1.0, 2.0], "ood": [2.0, 3.0]}, bins=3)
        np.testing.assert_allclose(h.edges, [0.0, 1.0, 2.0, 3.0])
        assert h.counts["id"].tolist() == [1, 1, 1]
        assert h.counts["ood"].tolist() == [0, 0, 2]

    def test_degenerate_range_widened(self):
        h = histogram({"a": [4.0, 4.0]}, bins=2)
        np.testing.assert_allclose(h.edges, [3.5, 4.0, 4.5])
        assert h.counts["a"].sum() == 2

    def test_errors(self):
        with pytest.raises(DomainError):
            histogram({"a": [1.0]}, bins=1)
        with pytest.raises(EmptyDatasetError):
            histogram({"a": []})

    def test_overlap(self):
        assert histogram_overlap([1, 1, 0], [1, 1, 0]) == pytest.approx(1.0)
        assert histogram_overlap([2, 0], [0, 5]) == 0.0
        assert histogram_overlap([1, 1], [1, 0]) == pytest.approx(0.5)
        assert histogram_overlap([0, 0], [1, 0]) == 0.0
        with pytest.raises(ShapeError):
            histogram_overlap([1, 2], [1, 2, 3])


class TestThroughput:
    def test_times_scoring_after_warmup(self):
        calls = []

        def scorer(images):
            calls.append(len(images))
            time.sleep(0.01)

        tp = throughput(scorer, np.zeros((8, 4, 4, 1)), warmup=2)
        assert calls == [2, 8]
        assert tp.images == 8
        assert tp.seconds >= 0.01
        assert tp.images_per_sec * tp.sec_per_image == pytest.approx(1.0)
        assert tp.peak_rss_mb > 0

    def test_rates(self):
        assert rates(10, 2.0) == (5.0, 0.2)
        with pytest.raises(EmptyDatasetError):
            rates(0, 1.0)

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            throughput(lambda x: None, np.zeros((0, 2, 2, 1)))

    def test_profiler_writes_memory_log(self, tmp_path):
        with MemoryProfiler(log_dir=tmp_path, interval=0.01) as profiler:
            time.sleep(0.05)
        assert profiler.peak_rss_mb > 0
        assert (tmp_path / "memory.csv").read_text().startswith("timestamp,rss_mb")


class TestSsim:
    def test_matches_direct_window_loop(self, rng):
        x = rng.random((14, 13, 2))
        y = np.clip(x + rng.normal(0, 0.1, size=x.shape), 0, 1)
        assert abs(ssim(x, y) - _ssim_direct(x, y)) < 1e-6

    def test_small_images_shrink_the_window(self, rng):
        x = rng.random((6, 7, 1))
        y = rng.random((6, 7, 1))
        assert abs(ssim(x, y) - _ssim_direct(x, y, size=6)) < 1e-6

    def test_identical_images(self, rng):
        x = rng.random((12, 12, 3))
        assert ssim(x, x) == pytest.approx(1.0)
        assert ssim(x[..., 0], x[..., 0]) == pytest.approx(1.0)


class TestRecon:
    def test_identity(self, rng):
        x = rng.random((3, 12, 12, 1))
        m = recon_metrics(x, x.copy())
        assert (m.mse, m.mae, m.psnr) == (0.0, 0.0, PSNR_CAP)
        assert m.ssim == pytest.approx(1.0)

    def test_known_error(self):
        x = np.zeros((4, 4, 1))
        y = np.full((4, 4, 1), 0.1)
        m = recon_metrics(x, y)
        assert m.mse == pytest.approx(0.01)
        assert m.mae == pytest.approx(0.1)
        assert m.psnr == pytest.approx(20.0)

    def test_psnr_cap(self):
        x = np.zeros((4, 4, 1))
        assert recon_metrics(x, x + 1e-7).psnr == PSNR_CAP

    def test_errors(self):
        with pytest.raises(ShapeError):
            recon_metrics(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))
        with pytest.raises(DomainError):
            recon_metrics(np.zeros((2, 2, 1)), np.full((2, 2, 1), 1.5))
        with pytest.raises(EmptyDatasetError):
            recon_metrics(np.zeros((0, 2, 1)), np.zeros((0, 2, 1)))

    def test_psnr_formula(self, rng):
        x = rng.random((5, 5, 1))
        y = np.clip(x + 0.05, 0, 1)
        m = recon_metrics(x, y)
        assert m.psnr == pytest.approx(10 * math.log10(1 / m.mse))
