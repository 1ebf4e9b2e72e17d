"""Environment configuration and storage access.

Single source of truth for env-var driven settings. Everything that reads
or writes bytes gets its filesystem from `get_fs(uri)`, so output
directories can be local paths or any fsspec URI.
"""

import os
from pathlib import Path


# =============================================================================
# Environment
# =============================================================================

def _flag(name: str) -> bool:
    return os.environ.get(name, "").lower() == "true"


def get_output_dir(configured: str) -> str:
    """Experiment output directory. FRL_OUT wins over the config value."""
    return os.environ.get("FRL_OUT") or configured


def get_data_dir() -> str | None:
    """Base directory for relative dataset paths in manifests, if set."""
    return os.environ.get("FRL_DATA_DIR") or None


def is_debug_logging() -> bool:
    return _flag("FRL_DEBUG_LOG")


def is_memory_profiling() -> bool:
    return _flag("FRL_PROFILE_MEMORY")


def get_log_dir(output_dir: str) -> str:
    return os.environ.get("FRL_LOG_DIR") or f"{output_dir.rstrip('/')}/logs"


def get_parallelism(requested: int | None = None) -> int:
    """Worker count: explicit request, else FRL_PARALLELISM, else 1."""
    if requested is not None:
        return max(1, int(requested))
    try:
        return max(1, int(os.environ.get("FRL_PARALLELISM", "1")))
    except ValueError:
        return 1


# =============================================================================
# fsspec backend
# =============================================================================

def get_fs(uri: str = ""):
    """fsspec filesystem for a URI. Local paths get auto_mkdir on open."""
    import fsspec
    protocol = uri.split("://", 1)[0] if "://" in uri else "file"
    if protocol == "file":
        return fsspec.filesystem("file", auto_mkdir=True)
    return fsspec.filesystem(protocol)


def join(base: str, *parts: str) -> str:
    """Join path segments for local paths and URIs alike."""
    out = base.rstrip("/")
    for p in parts:
        out = f"{out}/{p.strip('/')}"
    return out


def resolve_data_path(path: str, manifest_dir: str | None) -> str:
    """Resolve a manifest entry path against FRL_DATA_DIR or the manifest's directory."""
    if "://" in path or Path(path).is_absolute():
        return path
    base = get_data_dir() or manifest_dir
    return join(base, path) if base else path


# =============================================================================
# Validation
# =============================================================================

def validate_environment(output_dir: str, required_paths: list[str] = ()) -> None:
    """Fail fast before any compute: inputs exist and the output dir is writable."""
    missing = [p for p in required_paths if not get_fs(p).exists(p)]
    if missing:
        raise FileNotFoundError(f"Missing input paths: {missing}")

    fs = get_fs(output_dir)
    fs.makedirs(output_dir, exist_ok=True)
    probe = join(output_dir, ".write_probe")
    try:
        with fs.open(probe, "wb") as f:
            f.write(b"")
        fs.rm(probe)
    except OSError as e:
        raise PermissionError(f"Output directory {output_dir} is not writable: {e}") from e
