import struct
import zlib

import numpy as np
import pytest

from freqreg.complexity import (
    PNG_SIGNATURE,
    complexity,
    complexity_batch,
    filter_rows,
    png_code_length,
    png_encode,
)
from freqreg.errors import DomainError, EmptyDatasetError, ShapeError
from nodes.fixtures import complexity_triple


def _decode_png(data: bytes) -> np.ndarray:
    """Reference decoder: chunk walk, inflate, per-row unfilter."""
    assert data[:8] == PNG_SIGNATURE
    pos, idat, ihdr = 8, b"", None
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        assert crc == zlib.crc32(kind + body)
        if kind == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif kind == b"IDAT":
            idat += body
        pos += 12 + length
    w, h, depth, color, *_ = ihdr
    assert depth == 8
    c = 3 if color == 2 else 1
    raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8).reshape(h, 1 + w * c)
    out = np.zeros((h, w * c), dtype=np.int64)
    for y in range(h):
        ftype, line = raw[y, 0], raw[y, 1:].astype(np.int64)
        for x in range(w * c):
            a = out[y, x - c] if x >= c else 0
            b = out[y - 1, x] if y > 0 else 0
            cc = out[y - 1, x - c] if (y > 0 and x >= c) else 0
            if ftype == 0:
                pred = 0
            elif ftype == 1:
                pred = a
            elif ftype == 2:
                pred = b
            elif ftype == 3:
                pred = (a + b) // 2
            else:
                p = a + b - cc
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - cc)
                pred = a if pa <= pb and pa <= pc else (b if pb <= pc else cc)
            out[y, x] = (line[x] + pred) % 256
    return out.reshape(h, w, c).astype(np.uint8)


class TestEncoder:
    @pytest.mark.parametrize("channels", [1, 3])
    def test_decodes_back_to_the_image(self, rng, channels):
        img = rng.integers(0, 256, size=(9, 7, channels), dtype=np.uint8)
        img[3:6] = 40  # smooth band so several filters get picked
        np.testing.assert_array_equal(_decode_png(png_encode(img)), img)

    def test_fixture_images_decode(self):
        for img in complexity_triple(seed=3).values():
            np.testing.assert_array_equal(_decode_png(png_encode(img)), img)

    def test_filter_choice_prefers_earliest_on_ties(self):
        rows = np.zeros((2, 6), dtype=np.uint8)
        types, filtered = filter_rows(rows, 3)
        np.testing.assert_array_equal(types, [0, 0])
        assert not filtered.any()

    def test_ramp_picks_sub_filter(self):
        rows = np.tile(np.arange(0, 60, 3, dtype=np.uint8), (1, 1))
        types, _ = filter_rows(rows, 1)
        assert types[0] == 1

    def test_deterministic(self, rng):
        img = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        assert png_encode(img) == png_encode(img.copy())
        assert complexity(img) == complexity(img.copy())


class TestComplexity:
    def test_fixture_ordering(self):
        triple = complexity_triple(seed=0)
        bpd = {name: complexity(img) for name, img in triple.items()}
        assert bpd["constant"] < bpd["structured"] < bpd["noise"]

    def test_noise_bits_per_dim_near_eight(self):
        noise = complexity_triple(seed=0)["noise"]
        assert noise.shape == (32, 32, 3)
        assert 7.0 <= complexity(noise) <= 9.0

    def test_code_bits_count_whole_file(self, rng):
        img = rng.integers(0, 256, size=(8, 8, 1), dtype=np.uint8)
        score = png_code_length(img)
        assert score.code_bits == 8 * len(png_encode(img))
        assert score.bits_per_dim == score.code_bits / 64
        assert complexity(img, normalize=False) == score.code_bits

    def test_float_integer_levels_accepted(self):
        img = np.full((4, 4, 1), 12.0)
        assert complexity(img) == complexity(img.astype(np.uint8))

    def test_gray_2d_accepted(self):
        img = np.full((4, 4), 7, dtype=np.uint8)
        assert complexity(img) == complexity(img[..., None])

    def test_batch(self, rng):
        images = rng.integers(0, 256, size=(3, 8, 8, 1), dtype=np.uint8)
        np.testing.assert_array_equal(complexity_batch(images), [complexity(i) for i in images])

    def test_fractional_levels_rejected(self):
        with pytest.raises(DomainError):
            complexity(np.full((4, 4, 1), 0.5))

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            complexity(np.full((4, 4, 1), 300))

    def test_empty_rejected(self):
        with pytest.raises(EmptyDatasetError):
            complexity(np.zeros((0, 4, 1)))

    def test_two_channels_rejected(self):
        with pytest.raises(ShapeError):
            complexity(np.zeros((4, 4, 2)))
