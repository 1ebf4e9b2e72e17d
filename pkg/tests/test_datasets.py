import gzip
import json
import struct

import numpy as np
import pytest

from freqreg.datasets import (
    Dataset,
    encode_idx,
    encode_ppm,
    load_idx,
    load_idx_labels,
    load_manifest,
    load_ppm_dir,
    parse_idx,
    parse_ppm,
    resize,
    synth_ood,
    to_gray_levels,
    to_rgb,
)
from freqreg.errors import ConfigError, EmptyDatasetError, IdxFormatError, PpmFormatError, ShapeError


class TestIdx:
    def test_parses_images(self, rng):
        imgs = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
        np.testing.assert_array_equal(parse_idx(encode_idx(imgs), 0x803), imgs)

    def test_header_layout(self):
        data = encode_idx(np.zeros((2, 3, 4), dtype=np.uint8))
        assert struct.unpack(">IIII", data[:16]) == (0x803, 2, 3, 4)

    def test_wrong_magic(self):
        with pytest.raises(IdxFormatError):
            parse_idx(struct.pack(">I", 0x0D03) + b"\x00" * 16)

    def test_expected_magic_mismatch(self):
        with pytest.raises(IdxFormatError):
            parse_idx(encode_idx(np.zeros(3, dtype=np.uint8)), 0x803)

    def test_truncated_payload(self):
        data = encode_idx(np.zeros((2, 4, 4), dtype=np.uint8))
        with pytest.raises(IdxFormatError):
            parse_idx(data[:-1])

    def test_truncated_header(self):
        with pytest.raises(IdxFormatError):
            parse_idx(struct.pack(">I", 0x803) + b"\x00\x00")

    def test_short_file(self):
        with pytest.raises(IdxFormatError):
            parse_idx(b"\x00\x00")

    def test_dimension_overflow(self):
        data = struct.pack(">IIII", 0x803, 2 ** 20, 2 ** 20, 2 ** 20)
        with pytest.raises(IdxFormatError):
            parse_idx(data)

    def test_load_gz_and_labels(self, tmp_path, rng):
        imgs = rng.integers(0, 256, size=(6, 5, 5), dtype=np.uint8)
        labels = np.arange(6, dtype=np.uint8)
        (tmp_path / "imgs-idx3-ubyte.gz").write_bytes(gzip.compress(encode_idx(imgs)))
        (tmp_path / "labels-idx1-ubyte").write_bytes(encode_idx(labels))
        ds = load_idx(str(tmp_path / "imgs-idx3-ubyte.gz"))
        assert ds.name == "imgs"
        assert ds.images.shape == (6, 5, 5, 1)
        np.testing.assert_array_equal(ds.images[..., 0], imgs)
        np.testing.assert_array_equal(load_idx_labels(str(tmp_path / "labels-idx1-ubyte")), labels)

    def test_labels_file_is_not_images(self, tmp_path):
        (tmp_path / "l").write_bytes(encode_idx(np.zeros(3, dtype=np.uint8)))
        with pytest.raises(IdxFormatError):
            load_idx(str(tmp_path / "l"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_idx(str(tmp_path / "nope"))


class TestPpm:
    def test_parses_with_comments(self):
        pixels = bytes(range(12))
        data = b"P6\n# made by hand\n2 2\n# another\n255\n" + pixels
        img = parse_ppm(data)
        assert img.shape == (2, 2, 3)
        assert img.tobytes() == pixels

    def test_encoder_output_parses(self, rng):
        img = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
        np.testing.assert_array_equal(parse_ppm(encode_ppm(img)), img)

    @pytest.mark.parametrize("data", [
        b"P3\n1 1\n255\n\x00\x00\x00",
        b"P6\n1 1\n65535\n\x00\x00\x00",
        b"P6\n1 1\n255\n\x00",
        b"P6\n1",
        b"P6\nx 1\n255\n\x00\x00\x00",
        b"P6\n0 1\n255\n",
    ])
    def test_malformed(self, data):
        with pytest.raises(PpmFormatError):
            parse_ppm(data)

    def test_encode_needs_rgb(self):
        with pytest.raises(ShapeError):
            encode_ppm(np.zeros((2, 2, 1), dtype=np.uint8))

    def test_directory_sorted_by_name(self, tmp_path):
        for name, level in (("b.ppm", 20), ("a.ppm", 10), ("c.PPM", 30)):
            (tmp_path / name).write_bytes(encode_ppm(np.full((2, 2, 3), level, dtype=np.uint8)))
        (tmp_path / "notes.txt").write_text("skip me")
        ds = load_ppm_dir(str(tmp_path), name="ppms")
        assert ds.images[:, 0, 0, 0].tolist() == [10, 20, 30]

    def test_mixed_sizes_need_resize(self, tmp_path):
        (tmp_path / "a.ppm").write_bytes(encode_ppm(np.zeros((2, 2, 3), dtype=np.uint8)))
        (tmp_path / "b.ppm").write_bytes(encode_ppm(np.zeros((4, 4, 3), dtype=np.uint8)))
        with pytest.raises(ShapeError):
            load_ppm_dir(str(tmp_path))
        assert load_ppm_dir(str(tmp_path), resize_to=(3, 3)).images.shape == (2, 3, 3, 3)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_ppm_dir(str(tmp_path))


class TestTransforms:
    def test_resize_identity(self, rng):
        img = rng.integers(0, 256, size=(2, 5, 5, 1), dtype=np.uint8)
        np.testing.assert_array_equal(resize(img, 5, 5), img)

    def test_resize_preserves_corners_and_range(self, rng):
        img = rng.random((7, 9, 3))
        out = resize(img, 4, 13)
        np.testing.assert_allclose(out[0, 0], img[0, 0])
        np.testing.assert_allclose(out[-1, -1], img[-1, -1])
        assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12

    def test_resize_upsample_midpoint(self):
        img = np.array([[0.0], [1.0]])[None, :, :, None][0]  # (2, 1, 1)
        out = resize(img, 3, 1)
        np.testing.assert_allclose(out[:, 0, 0], [0.0, 0.5, 1.0])

    def test_resize_matches_bilinear_formula(self):
        img = (np.arange(16, dtype=np.float64).reshape(4, 4) * 3 + 1)[..., None]
        out = resize(img, 2, 3)
        expected = np.zeros((2, 3))
        for i in range(2):
            for j in range(3):
                sy, sx = i * 3 / 1, j * 3 / 2
                y0, x0 = int(np.floor(sy)), int(np.floor(sx))
                y1, x1 = min(y0 + 1, 3), min(x0 + 1, 3)
                fy, fx = sy - y0, sx - x0
                top = img[y0, x0, 0] * (1 - fx) + img[y0, x1, 0] * fx
                bot = img[y1, x0, 0] * (1 - fx) + img[y1, x1, 0] * fx
                expected[i, j] = top * (1 - fy) + bot * fy
        np.testing.assert_allclose(out[..., 0], expected, atol=1e-6)

    def test_resize_rejects_non_positive(self):
        with pytest.raises(ShapeError):
            resize(np.zeros((2, 2, 1)), 0, 2)

    def test_channel_adaptation(self):
        gray = np.full((1, 2, 2, 1), 100, dtype=np.uint8)
        rgb = to_rgb(gray)
        assert rgb.shape == (1, 2, 2, 3)
        np.testing.assert_array_equal(to_gray_levels(rgb), gray)

    def test_dataset_is_read_only(self, rng):
        ds = Dataset("x", rng.integers(0, 256, size=(2, 3, 3, 1), dtype=np.uint8))
        with pytest.raises(ValueError):
            ds.images[0, 0, 0, 0] = 1

    def test_dataset_helpers(self, rng):
        ds = Dataset("x", rng.integers(0, 256, size=(4, 6, 6, 1), dtype=np.uint8))
        assert len(ds.head(2)) == 2
        assert ds.head(None) is ds
        assert ds.resized(3, 3).resolution == (3, 3, 1)
        assert ds.with_channels(3).resolution == (6, 6, 3)
        with pytest.raises(ShapeError):
            ds.with_channels(2)


class TestSynthetic:
    def test_noise_is_seeded(self):
        a = synth_ood("noise", 4, (5, 5, 3), seed=7)
        b = synth_ood("noise", 4, (5, 5, 3), seed=7)
        np.testing.assert_array_equal(a.images, b.images)
        assert a.images.shape == (4, 5, 5, 3)

    def test_noise_channel_means_near_midpoint(self):
        ds = synth_ood("noise", 1000, (32, 32, 3), seed=0)
        means = ds.images.reshape(-1, 3).mean(axis=0)
        assert np.all((means >= 120) & (means <= 135))

    def test_constant_images_are_flat(self):
        ds = synth_ood("constant", 10, (4, 4, 1), seed=0)
        for img in ds.images:
            assert np.all(img == img[0, 0, 0])

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            synth_ood("stripes", 2, (2, 2, 1), 0)

    def test_zero_count(self):
        with pytest.raises(EmptyDatasetError):
            synth_ood("noise", 0, (2, 2, 1), 0)


class TestManifest:
    def _write(self, tmp_path, entries):
        uri = tmp_path / "manifest.json"
        uri.write_text(json.dumps({"datasets": entries}))
        return str(uri)

    def test_relative_paths_resolve_against_manifest(self, tmp_path, rng):
        (tmp_path / "data").mkdir()
        imgs = rng.integers(0, 256, size=(5, 4, 4), dtype=np.uint8)
        (tmp_path / "data" / "train-idx3-ubyte").write_bytes(encode_idx(imgs))
        m = load_manifest(self._write(tmp_path, {
            "train": {"kind": "idx", "path": "data/train-idx3-ubyte", "split": "train", "limit": 3},
        }))
        ds = m.load("train")
        assert ds.name == "train" and ds.split == "train" and len(ds) == 3
        assert m.paths(["train"]) == [f"{tmp_path}/data/train-idx3-ubyte"]

    def test_data_dir_env_wins(self, tmp_path, monkeypatch, rng):
        other = tmp_path / "elsewhere"
        other.mkdir()
        (other / "x-idx3-ubyte").write_bytes(encode_idx(rng.integers(0, 256, size=(2, 3, 3), dtype=np.uint8)))
        monkeypatch.setenv("FRL_DATA_DIR", str(other))
        m = load_manifest(self._write(tmp_path, {"x": {"kind": "idx", "path": "x-idx3-ubyte"}}))
        assert len(m.load("x")) == 2

    def test_synthetic_resolution_from_caller(self, tmp_path):
        m = load_manifest(self._write(tmp_path, {"noise": {"kind": "noise", "count": 3, "seed": 1}}))
        assert m.load("noise", (6, 6, 1)).images.shape == (3, 6, 6, 1)
        with pytest.raises(ConfigError):
            m.load("noise")

    def test_entry_adaptations(self, tmp_path):
        m = load_manifest(self._write(tmp_path, {
            "c": {"kind": "constant", "count": 2, "resolution": [8, 8, 1], "resize": [4, 4], "channels": 3},
        }))
        assert m.load("c").images.shape == (2, 4, 4, 3)

    def test_unknown_name_and_kind(self, tmp_path):
        m = load_manifest(self._write(tmp_path, {"bad": {"kind": "jpeg", "path": "x"}}))
        with pytest.raises(ConfigError):
            m.load("missing")
        with pytest.raises(ConfigError):
            m.load("bad")

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(ConfigError):
            load_manifest(self._write(tmp_path, {}))

    def test_toy_fixture_manifest_loads(self, toy_dir):
        m = load_manifest(f"{toy_dir}/toy_manifest.json")
        train = m.load("train")
        assert train.resolution == (16, 16, 1) and len(train) == 256
        assert m.load("noise").resolution == (16, 16, 1)
        assert len(load_idx_labels(f"{toy_dir}/toy-train-labels-idx1-ubyte")) == 256
