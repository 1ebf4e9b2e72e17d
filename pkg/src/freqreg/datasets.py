"""Dataset loading and synthesis.

Images are uint8 arrays (N, H, W, C). Loaders read through fsspec, so
dataset paths may be local files or any fsspec URI; `.gz` IDX files are
decompressed transparently.

Manifest JSON maps dataset names to sources:

    {"datasets": {
        "fmnist_train": {"kind": "idx", "path": "train-images-idx3-ubyte.gz", "split": "train", "limit": 5000},
        "cifar_ood":    {"kind": "ppm_dir", "path": "ppm/", "resize": [28, 28]},
        "noise":        {"kind": "noise", "count": 1000, "seed": 1},
        "constant":     {"kind": "constant", "count": 1000, "seed": 2}
    }}

Synthetic kinds take their resolution from the requesting model unless the
entry sets "resolution": [H, W, C]. Any entry may set "channels" to force
1 or 3 channels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import io
from .config import get_fs, resolve_data_path
from .errors import ConfigError, EmptyDatasetError, IdxFormatError, PpmFormatError, ShapeError
from .frequency import BT601

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803
_IDX_MAX_ELEMENTS = 2 ** 31 - 1
KINDS = ("idx", "ppm_dir", "noise", "constant")


@dataclass(frozen=True)
class Dataset:
    name: str
    images: np.ndarray = field(repr=False)
    split: str = "test"

    def __post_init__(self):
        imgs = np.asarray(self.images)
        if imgs.ndim != 4:
            raise ShapeError(f"dataset {self.name}: expected (N, H, W, C) images, got {imgs.shape}")
        if imgs.dtype != np.uint8:
            imgs = imgs.astype(np.uint8)
        if imgs.flags.writeable:
            imgs = imgs.copy()
            imgs.flags.writeable = False
        object.__setattr__(self, "images", imgs)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def head(self, limit: int | None) -> "Dataset":
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.name, self.images[:limit], self.split)

    def with_channels(self, channels: int) -> "Dataset":
        c = self.images.shape[-1]
        if c == channels:
            return self
        if c == 1 and channels == 3:
            return Dataset(self.name, to_rgb(self.images), self.split)
        if c == 3 and channels == 1:
            return Dataset(self.name, to_gray_levels(self.images), self.split)
        raise ShapeError(f"dataset {self.name}: cannot adapt {c} channels to {channels}")

    def resized(self, height: int, width: int) -> "Dataset":
        if self.resolution[:2] == (height, width):
            return self
        return Dataset(self.name, resize(self.images, height, width), self.split)


# =============================================================================
# IDX
# =============================================================================

def parse_idx(data: bytes, expected_magic: int | None = None) -> np.ndarray:
    """Decode an unsigned-byte IDX container into an ndarray."""
    if len(data) < 4:
        raise IdxFormatError("IDX file shorter than its magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in (IDX_LABELS, IDX_IMAGES):
        raise IdxFormatError(f"unsupported IDX magic 0x{magic:08x}")
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(f"expected IDX magic 0x{expected_magic:08x}, got 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError("IDX header truncated")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > _IDX_MAX_ELEMENTS:
            raise IdxFormatError(f"IDX dimensions {dims} overflow the element limit")
    if len(data) - header < count:
        raise IdxFormatError(f"IDX payload truncated: need {count} bytes, have {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def load_idx(path: str, name: str | None = None, split: str = "test") -> Dataset:
    """Load an IDX image file (magic 0x803) as an (N, H, W, 1) dataset."""
    images = parse_idx(io.load_bytes(path, compression="infer"), IDX_IMAGES)
    return Dataset(name or _stem(path), images[..., None], split)


def load_idx_labels(path: str) -> np.ndarray:
    return parse_idx(io.load_bytes(path, compression="infer"), IDX_LABELS).copy()


# =============================================================================
# PPM (P6)
# =============================================================================

def parse_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 PPM with maxval 255 into (H, W, 3) uint8."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise PpmFormatError("PPM header truncated")
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise PpmFormatError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise PpmFormatError(f"malformed PPM header {tokens!r}") from e
    if maxval != 255:
        raise PpmFormatError(f"only maxval 255 is supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise PpmFormatError(f"invalid PPM size {width}x{height}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PpmFormatError("PPM header not terminated by whitespace")
    pos += 1
    need = width * height * 3
    if len(data) - pos < need:
        raise PpmFormatError(f"PPM payload truncated: need {need} bytes, have {len(data) - pos}")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ShapeError(f"PPM needs an H x W x 3 image, got {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def load_ppm_dir(path: str, name: str | None = None, split: str = "test",
                 resize_to: tuple[int, int] | None = None) -> Dataset:
    """Load every *.ppm file in a directory, ordered by file name."""
    fs = get_fs(path)
    if not fs.isdir(path):
        raise FileNotFoundError(f"No PPM directory at {path}")
    files = sorted(
        (f for f in fs.ls(path, detail=False) if f.lower().endswith(".ppm")),
        key=lambda f: f.rsplit("/", 1)[-1],
    )
    if not files:
        raise EmptyDatasetError(f"no .ppm files in {path}")
    images = [parse_ppm(io.load_bytes(f)) for f in files]
    if resize_to is not None:
        images = [resize(img, *resize_to) for img in images]
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise ShapeError(f"mixed PPM resolutions {sorted(shapes)} in {path}; set a resize target")
    return Dataset(name or _stem(path), np.stack(images), split)


# =============================================================================
# Transforms
# =============================================================================

def _axis_coords(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corners-aligned sample positions: lower index, upper index, fraction."""
    if dst == 1:
        pos = np.array([(src - 1) / 2.0])
    else:
        pos = np.arange(dst) * ((src - 1) / (dst - 1))
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of (..., H, W, C) with corners aligned.

    Output pixel (i, j) samples source position (i*(H-1)/(H'-1), j*(W-1)/(W'-1));
    a target size of 1 samples the center. uint8 input is rounded back to
    uint8; float input stays float.
    """
    if height <= 0 or width <= 0:
        raise ShapeError(f"resize target must be positive, got {height}x{width}")
    arr = np.asarray(img)
    if arr.ndim < 3:
        raise ShapeError(f"expected (..., H, W, C), got shape {arr.shape}")
    h, w = arr.shape[-3], arr.shape[-2]
    if (h, w) == (height, width):
        return arr.copy()
    x = arr.astype(np.float64)
    y0, y1, fy = _axis_coords(h, height)
    x0, x1, fx = _axis_coords(w, width)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = x[..., y0, :, :][..., :, x0, :] * (1 - fx) + x[..., y0, :, :][..., :, x1, :] * fx
    bot = x[..., y1, :, :][..., :, x0, :] * (1 - fx) + x[..., y1, :, :][..., :, x1, :] * fx
    out = top * (1 - fy) + bot * fy
    if arr.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def to_rgb(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.shape[-1] != 1:
        raise ShapeError(f"to_rgb needs a 1-channel image, got {arr.shape[-1]} channels")
    return np.repeat(arr, 3, axis=-1)


def to_gray_levels(img: np.ndarray) -> np.ndarray:
    """uint8 RGB -> uint8 gray with BT.601 weights."""
    arr = np.asarray(img)
    if arr.shape[-1] != 3:
        raise ShapeError(f"expected 3 channels, got {arr.shape[-1]}")
    return np.clip(np.floor(arr.astype(np.float64) @ BT601 + 0.5), 0, 255).astype(np.uint8)[..., None]


def synth_ood(kind: str, count: int, resolution: tuple[int, int, int], seed: int) -> Dataset:
    """Seeded Noise (uniform levels per pixel-channel) or Constant (one level per image)."""
    if count <= 0:
        raise EmptyDatasetError(f"synth_ood needs count > 0, got {count}")
    rng = np.random.default_rng(seed)
    h, w, c = resolution
    if kind == "noise":
        images = rng.integers(0, 256, size=(count, h, w, c), dtype=np.uint8)
    elif kind == "constant":
        levels = rng.integers(0, 256, size=count, dtype=np.uint8)
        images = np.broadcast_to(levels[:, None, None, None], (count, h, w, c)).copy()
    else:
        raise ConfigError(f"unknown synthetic dataset kind {kind!r}")
    return Dataset(kind, images, "test")


# =============================================================================
# Manifests
# =============================================================================

def _stem(path: str) -> str:
    base = path.rstrip("/").rsplit("/", 1)[-1]
    for suffix in (".gz", "-ubyte", "-idx3", ".ppm"):
        base = base.removesuffix(suffix)
    return base


@dataclass(frozen=True)
class Manifest:
    uri: str
    entries: dict

    @property
    def directory(self) -> str | None:
        return self.uri.rsplit("/", 1)[0] if "/" in self.uri else None

    def paths(self, names) -> list[str]:
        """Resolved file paths of the named file-backed entries (for fail-fast checks)."""
        out = []
        for name in names:
            entry = self._entry(name)
            if entry.get("kind") in ("idx", "ppm_dir"):
                out.append(resolve_data_path(entry["path"], self.directory))
        return out

    def _entry(self, name: str) -> dict:
        try:
            return self.entries[name]
        except KeyError:
            raise ConfigError(f"dataset {name!r} not in manifest {self.uri}; known: {sorted(self.entries)}") from None

    def load(self, name: str, resolution: tuple[int, int, int] | None = None) -> Dataset:
        entry = self._entry(name)
        kind = entry.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"dataset {name!r}: unknown kind {kind!r}; expected one of {KINDS}")
        split = entry.get("split", "test")
        if kind == "idx":
            ds = load_idx(resolve_data_path(entry["path"], self.directory), name, split)
        elif kind == "ppm_dir":
            target = tuple(entry["resize"]) if entry.get("resize") else None
            ds = load_ppm_dir(resolve_data_path(entry["path"], self.directory), name, split, target)
        else:
            res = tuple(entry.get("resolution") or resolution or ())
            if len(res) != 3:
                raise ConfigError(f"dataset {name!r}: synthetic data needs a resolution")
            ds = synth_ood(kind, int(entry.get("count", 1000)), res, int(entry.get("seed", 0)))
            ds = Dataset(name, ds.images, split)
        ds = ds.head(entry.get("limit"))
        if entry.get("resize") and kind != "ppm_dir":
            ds = ds.resized(*entry["resize"][:2])
        if entry.get("channels"):
            ds = ds.with_channels(int(entry["channels"]))
        if len(ds) == 0:
            raise EmptyDatasetError(f"dataset {name!r} is empty")
        return ds


def load_manifest(uri: str) -> Manifest:
    data = io.load_json(uri)
    entries = data.get("datasets", data)
    if not isinstance(entries, dict) or not entries:
        raise ConfigError(f"manifest {uri} has no datasets")
    return Manifest(uri, entries)
