import numpy as np
import pytest

from freqreg import frequency as F
from freqreg.errors import ConfigError, ShapeError
from freqreg.frequency import FrequencyConfig


def _naive_blur(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    k = kernel.shape[0]
    p = (k - 1) // 2
    padded = np.pad(g, p, mode="reflect")
    out = np.zeros_like(g)
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            acc = 0.0
            for u in range(k):
                for v in range(k):
                    acc += padded[i + u, j + v] * kernel[u, v]
            out[i, j] = acc
    return out


class TestGaussian:
    @pytest.mark.parametrize("k", [1, 3, 5, 7, 9])
    def test_kernel_normalized_and_symmetric(self, k):
        kern = F.gaussian_kernel(k, k / 4)
        assert kern.shape == (k, k)
        assert kern.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(kern, kern.T)
        np.testing.assert_array_equal(kern, kern[::-1, ::-1])

    @pytest.mark.parametrize("k", [0, 2, 4, -1])
    def test_even_or_non_positive_kernel_rejected(self, k):
        with pytest.raises(ConfigError):
            F.gaussian_kernel(k, 1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_blur_matches_naive_loop(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.choice([3, 5, 7]))
        g = rng.random((int(rng.integers(k, 12)), int(rng.integers(k, 12))))
        kern = F.gaussian_kernel(k, rng.uniform(0.5, 2.0))
        np.testing.assert_allclose(F.blur(g, kern), _naive_blur(g, kern), atol=1e-6)

    def test_blur_keeps_channel_axis(self, rng):
        x = rng.random((2, 8, 8, 1))
        assert F.blur(x, F.gaussian_kernel(3, 0.75)).shape == x.shape

    def test_constant_image_has_no_high_frequency(self):
        x = np.full((1, 12, 12, 3), 0.37)
        xh = F.high_freq(x, FrequencyConfig(method="gaussian", kernel_size=5))
        np.testing.assert_allclose(xh, 0.0, atol=1e-12)

    def test_sigma_defaults_to_quarter_kernel(self):
        assert FrequencyConfig(kernel_size=7).resolved_sigma == 1.75
        assert FrequencyConfig(kernel_size=7, sigma=2.0).resolved_sigma == 2.0


class TestHaar:
    @pytest.mark.parametrize("shape,levels", [((8, 8), 1), ((8, 8), 3), ((7, 9), 2), ((3, 16, 16), 2)])
    def test_perfect_reconstruction(self, rng, shape, levels):
        x = rng.random(shape)
        ll, details = F.haar_forward(x, levels)
        np.testing.assert_allclose(F.haar_inverse(ll, details), x, atol=1e-6)

    def test_orthonormal_energy(self, rng):
        x = rng.random((8, 8))
        ll, details = F.haar_forward(x, 1)
        lh, hl, hh, _ = details[0]
        energy = sum(float(np.sum(b ** 2)) for b in (ll, lh, hl, hh))
        assert energy == pytest.approx(float(np.sum(x ** 2)), rel=1e-12)

    def test_constant_image_highpass_is_exactly_zero(self):
        x = np.full((1, 16, 16, 1), 0.5)
        xh = F.high_freq(x, FrequencyConfig(method="haar", haar_levels=2))
        assert np.all(xh == 0.0)

    def test_too_many_levels_rejected(self):
        with pytest.raises(ConfigError):
            F.high_freq(np.zeros((1, 4, 4, 1)), FrequencyConfig(method="haar", haar_levels=3))


class TestFft:
    def test_parseval(self, rng):
        g = rng.random((10, 12))
        xh, masked = F.fft_highpass(g, 0.25)
        assert float(np.sum(xh ** 2)) == pytest.approx(float(np.sum(np.abs(masked) ** 2)), abs=1e-6)
        full = np.fft.fft2(g, norm="ortho")
        assert float(np.sum(g ** 2)) == pytest.approx(float(np.sum(np.abs(full) ** 2)), abs=1e-6)

    def test_checkerboard_matches_dense_dft(self):
        n = 16
        g = (np.indices((n, n)).sum(axis=0) % 2).astype(np.float64)
        idx = np.arange(n)
        dft = np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
        spectrum = dft @ g @ dft.T
        freq = np.where(idx < n / 2, idx, idx - n) / n
        mask = np.sqrt(freq[:, None] ** 2 + freq[None, :] ** 2) / 0.5 >= 0.5
        expected = (dft.conj().T @ (spectrum * mask) @ dft.conj()).real
        xh, _ = F.fft_highpass(g, 0.5)
        np.testing.assert_allclose(xh, expected, atol=1e-6)

    def test_constant_image_removed(self):
        xh, _ = F.fft_highpass(np.full((8, 8), 0.6), 0.0625)
        np.testing.assert_allclose(xh, 0.0, atol=1e-12)

    def test_radial_frequency_nyquist(self):
        r = F.radial_frequency(8, 8)
        assert r[0, 0] == 0.0
        assert r[4, 0] == pytest.approx(1.0)


class TestAugment:
    @pytest.mark.parametrize("method", ["gaussian", "fft", "haar"])
    def test_augmented_shape_and_range(self, rng, method):
        x = rng.random((3, 8, 8, 3))
        xf = F.augment(x, FrequencyConfig(method=method))
        assert xf.shape == (3, 8, 8, 4)
        np.testing.assert_array_equal(xf[..., :3], x)
        assert xf.min() >= 0.0 and xf.max() <= 1.0

    def test_high_freq_uses_grayscale(self, rng):
        x = rng.random((1, 8, 8, 3))
        cfg = FrequencyConfig(method="gaussian", kernel_size=3)
        np.testing.assert_allclose(F.high_freq(x, cfg), F.high_freq(F.rgb2gray(x), cfg))

    def test_none_method_has_no_high_frequency(self):
        with pytest.raises(ConfigError):
            F.high_freq(np.zeros((1, 4, 4, 1)), FrequencyConfig(method="none"))

    def test_two_channel_image_rejected(self):
        with pytest.raises(ShapeError):
            F.high_freq(np.zeros((1, 4, 4, 2)), FrequencyConfig())

    def test_quantize_rounds_half_up(self):
        q = F.quantize_augmented(np.array([0.0, 0.5, 1.0, 1.2, -0.1]), 3)
        np.testing.assert_array_equal(q, [0, 1, 2, 2, 0])

    def test_quantize_needs_two_levels(self):
        with pytest.raises(ConfigError):
            F.quantize_augmented(np.zeros(2), 1)


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            FrequencyConfig(method="wavelet").validate()

    def test_fingerprint_ignores_unused_fields(self):
        a = FrequencyConfig(method="haar", kernel_size=3)
        b = FrequencyConfig(method="haar", kernel_size=9)
        assert a.fingerprint() == b.fingerprint()
        assert FrequencyConfig(kernel_size=3).fingerprint() != FrequencyConfig(kernel_size=5).fingerprint()

    def test_fingerprint_resolves_sigma(self):
        assert FrequencyConfig(kernel_size=8 + 1, sigma=None).fingerprint() == \
            FrequencyConfig(kernel_size=9, sigma=2.25).fingerprint()
