"""Artifact read/write tracking per task.

The orchestrator sets the current task; io functions record the artifacts
they touch. Sweeps copy the records into run.json, and tests use them to
check that no command writes to its own inputs.
"""

from contextvars import ContextVar
from dataclasses import asdict, dataclass
import threading

# ContextVar so worker threads started with copy_context() keep their task id.
_current_task_id: ContextVar[str | None] = ContextVar("current_task_id", default=None)


@dataclass
class IORecord:
    path: str
    task_id: str | None
    operation: str  # "read" or "write"


_io_records: list[IORecord] = []
_lock = threading.RLock()


def set_current_task(task_id: str | None):
    _current_task_id.set(task_id)


def get_current_task() -> str | None:
    return _current_task_id.get()


def _record(path: str, operation: str):
    with _lock:
        _io_records.append(IORecord(path=path, task_id=_current_task_id.get(), operation=operation))


def record_read(path: str):
    _record(path, "read")


def record_write(path: str):
    _record(path, "write")


def get_reads(task_id: str | None = None) -> list[str]:
    with _lock:
        return [r.path for r in _io_records
                if r.operation == "read" and (task_id is None or r.task_id == task_id)]


def get_writes(task_id: str | None = None) -> list[str]:
    with _lock:
        return [r.path for r in _io_records
                if r.operation == "write" and (task_id is None or r.task_id == task_id)]


def snapshot() -> list[dict]:
    """Picklable copy of all records (sent from forked workers to the supervisor)."""
    with _lock:
        return [asdict(r) for r in _io_records]


def merge(records: list[dict]):
    with _lock:
        _io_records.extend(IORecord(**r) for r in records)


def clear_tracking():
    with _lock:
        _io_records.clear()
