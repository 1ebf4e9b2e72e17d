"""Resident-memory sampling around train and eval runs."""

import csv
import os
import threading
from datetime import datetime
from pathlib import Path

import psutil

_MB = 1024 * 1024


def _tree_memory(process: psutil.Process) -> tuple[float, float]:
    """RSS and VMS in MB of a process plus its live children (forked scorers)."""
    rss, vms = process.memory_info()[:2]
    for child in process.children(recursive=True):
        try:
            c_rss, c_vms = child.memory_info()[:2]
        except (psutil.NoSuchProcess, psutil.AccessDenied):
            continue
        rss += c_rss
        vms += c_vms
    return rss / _MB, vms / _MB


class MemoryProfiler:
    """Track peak RSS of this process tree while the block runs.

    A sample is taken on entry, every `interval` seconds from a daemon
    thread, and on exit, so even a block shorter than one interval reports
    a peak. Given `log_dir`, every sample is also appended to memory.csv.
    """

    def __init__(self, pid: int | None = None, log_dir: Path | str | None = None, interval: float = 0.05):
        self.process = psutil.Process(pid or os.getpid())
        self.log_file = Path(log_dir) / "memory.csv" if log_dir else None
        self.interval = interval
        self.peak_rss_mb = 0.0
        self._done = threading.Event()
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def __enter__(self) -> "MemoryProfiler":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def start(self) -> None:
        if self.log_file:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_file, "w", newline="") as f:
                csv.writer(f).writerow(["timestamp", "rss_mb", "vms_mb"])
        self.sample()
        self._thread = threading.Thread(target=self._poll, name="memory-profiler", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._done.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
        self.sample()

    def sample(self) -> float:
        """Record one sample and return its RSS in MB (0 once the process is gone)."""
        try:
            rss, vms = _tree_memory(self.process)
        except (psutil.NoSuchProcess, psutil.AccessDenied):
            return 0.0
        with self._lock:
            self.peak_rss_mb = max(self.peak_rss_mb, rss)
            if self.log_file:
                with open(self.log_file, "a", newline="") as f:
                    csv.writer(f).writerow([datetime.now().isoformat(), f"{rss:.1f}", f"{vms:.1f}"])
        return rss

    def _poll(self) -> None:
        while not self._done.wait(self.interval):
            self.sample()
