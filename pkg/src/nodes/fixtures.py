"""Emit test fixtures: complexity PPM triple, a toy IDX dataset, its manifest and a toy config.

The toy set is 16x16 grayscale images of soft Gaussian blobs, small enough
for a full train / eval / sweep cycle in seconds on a laptop CPU.
"""
import numpy as np
from freqreg import io
from freqreg.config import join
from freqreg.datasets import encode_idx, encode_ppm

TOY_SIZE = 16
TOY_TRAIN = 256
TOY_TEST = 64


def complexity_triple(seed: int = 0, size: int = 32) -> dict[str, np.ndarray]:
    """Constant, low-noise structured and uniform-noise RGB images (uint8)."""
    rng = np.random.default_rng(seed)
    constant = np.full((size, size, 3), 128, dtype=np.uint8)
    ramp = np.linspace(32, 224, size)
    structured = np.stack([
        np.add.outer(ramp, np.zeros(size)),
        np.add.outer(np.zeros(size), ramp),
        np.add.outer(ramp, ramp) / 2,
    ], axis=-1)
    structured = np.clip(structured + rng.integers(-2, 3, size=structured.shape), 0, 255).astype(np.uint8)
    noise = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    return {"constant": constant, "structured": structured, "noise": noise}


def toy_blobs(count: int, seed: int, size: int = TOY_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """(count, size, size) uint8 blob images and their blob-count labels (1 or 2)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = np.zeros((count, size, size), dtype=np.uint8)
    labels = rng.integers(1, 3, size=count).astype(np.uint8)
    for i in range(count):
        img = np.zeros((size, size))
        for _ in range(labels[i]):
            cy, cx = rng.uniform(3, size - 3, size=2)
            s = rng.uniform(1.5, 3.5)
            img += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        images[i] = np.clip(np.floor(255 * np.minimum(img, 1.0) + 0.5), 0, 255)
    return images, labels


def toy_config(output_dir: str) -> dict:
    return {
        "model": {"family": "vae", "latent_dim": 8, "layers": 2, "filters": 8},
        "freq": {"method": "gaussian", "kernel_size": 3},
        "train": {"epochs": 3, "batch_size": 32, "lr": 0.002},
        "eval": {"k": 4, "limit": 32, "bins": 20},
        "data": {
            "manifest": join(output_dir, "toy_manifest.json"),
            "train": "train",
            "test": "test",
            "ood": ["noise", "constant"],
        },
        "scorer": "frl",
        "seed": 0,
        "output_dir": join(output_dir, "toy_run"),
    }


def run(output_dir: str, seed: int = 0) -> dict:
    print(f"Writing fixtures to {output_dir}...")
    written = {}
    for name, img in complexity_triple(seed).items():
        written[f"complexity_{name}"] = io.save_bytes(encode_ppm(img), join(output_dir, "complexity", f"{name}.ppm"))

    for split, count, offset in (("train", TOY_TRAIN, 0), ("test", TOY_TEST, 1)):
        images, labels = toy_blobs(count, seed + offset)
        written[f"toy_{split}_images"] = io.save_bytes(
            encode_idx(images), join(output_dir, f"toy-{split}-images-idx3-ubyte"))
        written[f"toy_{split}_labels"] = io.save_bytes(
            encode_idx(labels), join(output_dir, f"toy-{split}-labels-idx1-ubyte"))

    manifest = {"datasets": {
        "train": {"kind": "idx", "path": "toy-train-images-idx3-ubyte", "split": "train"},
        "test": {"kind": "idx", "path": "toy-test-images-idx3-ubyte", "split": "test"},
        "noise": {"kind": "noise", "count": TOY_TEST, "resolution": [TOY_SIZE, TOY_SIZE, 1], "seed": seed + 2},
        "constant": {"kind": "constant", "count": TOY_TEST, "resolution": [TOY_SIZE, TOY_SIZE, 1], "seed": seed + 3},
    }}
    written["toy_manifest"] = io.save_json(manifest, join(output_dir, "toy_manifest.json"))
    written["toy_config"] = io.save_json(toy_config(output_dir), join(output_dir, "toy_config.json"))
    print(f"  Complete! {len(written)} fixture files")
    return written
