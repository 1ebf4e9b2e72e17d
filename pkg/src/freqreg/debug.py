"""Opt-in CSV debug logs (FRL_DEBUG_LOG=true).

Each helper appends one row to a CSV under the log directory, writing the
header the first time. With logging disabled every helper is a no-op.
"""

import csv
import os
from datetime import datetime
from pathlib import Path

from .config import get_log_dir, is_debug_logging

_log_dir: Path | None = None
_run_id: str | None = None


def configure(output_dir: str, run_id: str | None = None):
    """Point logs at the output directory of the current command."""
    global _log_dir, _run_id
    _log_dir = Path(get_log_dir(output_dir))
    _run_id = run_id or datetime.now().strftime("%Y%m%d-%H%M%S")


def _get_log_dir() -> Path:
    global _log_dir
    if _log_dir is None:
        _log_dir = Path(os.environ.get("FRL_LOG_DIR") or "logs")
    _log_dir.mkdir(parents=True, exist_ok=True)
    return _log_dir


def _append_csv(filename: str, row: dict):
    if not is_debug_logging():
        return
    filepath = _get_log_dir() / filename
    file_exists = filepath.exists()
    row = {"timestamp": datetime.now().isoformat(), "run_id": _run_id or "unknown", **row}
    with open(filepath, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(row))
        if not file_exists:
            writer.writeheader()
        writer.writerow(row)


def log_run_start(command: str):
    _append_csv("runs.csv", {"command": command, "event": "start", "status": "", "error": ""})


def log_run_end(command: str, status: str = "completed", error=None):
    _append_csv("runs.csv", {
        "command": command,
        "event": "end",
        "status": status,
        "error": str(error) if error else "",
    })


def log_train_step(epoch: int, batch: int, loss_bpd: float, lr: float):
    _append_csv("train_steps.csv", {"epoch": epoch, "batch": batch, "loss_bpd": loss_bpd, "lr": lr})


def log_scoring(dataset: str, scorer: str, count: int, seconds: float):
    _append_csv("scoring.csv", {
        "dataset": dataset,
        "scorer": scorer,
        "count": count,
        "seconds": round(seconds, 4),
    })


def log_artifact(path: str, size_bytes: int, operation: str):
    _append_csv("artifacts.csv", {"path": path, "bytes": size_bytes, "operation": operation})
