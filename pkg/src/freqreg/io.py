"""Artifact I/O for experiment outputs and run state.

Every read and write goes through fsspec via `get_fs(uri)`, so the same
code handles local directories and remote URIs. Writers print a
`  -> Saved ...` line, record the write for the current task, and append to
the artifact debug log.
"""

import io
import json
from datetime import datetime
from typing import Optional

import pyarrow as pa
import pyarrow.csv as pacsv

from . import debug
from .config import get_fs, join
from .tracking import record_read, record_write


# =============================================================================
# URI dispatch via fsspec
# =============================================================================

def _write_bytes(uri: str, data: bytes) -> None:
    fs = get_fs(uri)
    with fs.open(uri, "wb") as f:
        f.write(data)


def _read_bytes(uri: str, compression: str | None = None) -> Optional[bytes]:
    """Read bytes from a URI. Returns None if not found."""
    fs = get_fs(uri)
    try:
        with fs.open(uri, "rb", compression=compression) as f:
            return f.read()
    except FileNotFoundError:
        return None


def exists(uri: str) -> bool:
    return get_fs(uri).exists(uri)


def _label(uri: str) -> str:
    return uri.rstrip("/").rsplit("/", 1)[-1]


def _saved(uri: str, size: int, detail: str = ""):
    print(f"  -> Saved {_label(uri)}{detail}")
    record_write(uri)
    debug.log_artifact(uri, size, "write")


# =============================================================================
# Bytes
# =============================================================================

def save_bytes(data: bytes, uri: str) -> str:
    _write_bytes(uri, data)
    _saved(uri, len(data))
    return uri


def load_bytes(uri: str, *, compression: str | None = None) -> bytes:
    """Load a file, transparently decompressing when `compression` is set ("infer" allowed)."""
    if compression == "infer":
        compression = "gzip" if uri.endswith(".gz") else None
    data = _read_bytes(uri, compression)
    if data is None:
        raise FileNotFoundError(f"No file at {uri}")
    record_read(uri)
    debug.log_artifact(uri, len(data), "read")
    return data


# =============================================================================
# JSON
# =============================================================================

def save_json(data, uri: str) -> str:
    content = json.dumps(data, indent=2, sort_keys=False).encode("utf-8")
    _write_bytes(uri, content)
    _saved(uri, len(content))
    return uri


def load_json(uri: str):
    return json.loads(load_bytes(uri).decode("utf-8"))


# =============================================================================
# CSV tables
# =============================================================================

def save_csv(table: pa.Table, uri: str) -> str:
    buf = io.BytesIO()
    pacsv.write_csv(table, buf, pacsv.WriteOptions(quoting_style="needed"))
    content = buf.getvalue()
    _write_bytes(uri, content)
    _saved(uri, len(content), f" ({table.num_rows:,} rows)")
    return uri


def load_csv(uri: str) -> pa.Table:
    return pacsv.read_csv(io.BytesIO(load_bytes(uri)))


# =============================================================================
# State files (small JSON, per-asset, under <output_dir>/state/)
# =============================================================================

def _state_uri(output_dir: str, asset: str) -> str:
    return join(output_dir, "state", f"{asset.replace(':', '_')}.json")


def load_state(output_dir: str, asset: str) -> dict:
    """Load state for an asset. Returns empty dict if not found."""
    data = _read_bytes(_state_uri(output_dir, asset))
    if not data:
        return {}
    return json.loads(data.decode("utf-8"))


def save_state(output_dir: str, asset: str, state_data: dict) -> str:
    state_data = {**state_data, "_metadata": {"updated_at": datetime.now().isoformat()}}
    uri = _state_uri(output_dir, asset)
    _write_bytes(uri, json.dumps(state_data, indent=2).encode("utf-8"))
    return uri
