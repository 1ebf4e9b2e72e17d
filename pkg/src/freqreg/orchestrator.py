"""Sweep DAG with run-state persistence and resume.

A sweep is a dict `{task_id: (fn, [dep_ids])}`. Each fn is called with the
results of the tasks finished so far and returns a small JSON-able value
(a sweep row, a checkpoint path). Every task runs in its own forked child,
so a training job's arrays are released when it exits.

run.json is rewritten after each task. When a later invocation finds a
run.json with the same task graph, tasks recorded as done are not rerun and
their results are handed to their dependents as before.
"""

import hashlib
import json
import multiprocessing
import multiprocessing.connection
import os
import pickle
import signal
import sys
import traceback
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from . import tracking
from .config import get_parallelism

TaskFn = Callable[[dict[str, Any]], Any]

_FORK = multiprocessing.get_context("fork")

# A sweep result is a table row, not an array dump.
_RESULT_LIMIT_BYTES = 10 * 1024 * 1024

_FINISHED = ("done", "failed", "skipped")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _graph_digest(tasks: dict[str, tuple[TaskFn, list[str]]]) -> str:
    edges = {task_id: sorted(deps) for task_id, (_, deps) in tasks.items()}
    return hashlib.sha256(json.dumps(edges, sort_keys=True).encode()).hexdigest()[:16]


def _read_run_state(path: Path) -> dict | None:
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError):
        return None


def _write_run_state(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(f".{path.name}.{os.getpid()}.part")
    partial.write_text(json.dumps(payload, indent=2))
    os.replace(partial, path)


def _sweep_child(fn: TaskFn, task_id: str, upstream: dict, conn) -> None:
    """Body of the forked child: run one task and send its outcome back."""
    signal.signal(signal.SIGINT, signal.SIG_DFL)
    signal.signal(signal.SIGTERM, signal.SIG_DFL)
    tracking.clear_tracking()
    tracking.set_current_task(task_id)

    started = datetime.now(timezone.utc)
    outcome: dict = {"started_at": started.isoformat()}
    try:
        outcome["result"] = fn(upstream)
        outcome["status"] = "done"
    except BaseException as e:  # noqa: BLE001
        outcome.update(status="failed", error=str(e) or type(e).__name__, traceback=traceback.format_exc())
    finished = datetime.now(timezone.utc)
    outcome["finished_at"] = finished.isoformat()
    outcome["duration_s"] = (finished - started).total_seconds()
    outcome["tracking"] = tracking.snapshot()
    sys.stdout.flush()
    sys.stderr.flush()

    try:
        conn.send_bytes(_encode_outcome(outcome))
    finally:
        conn.close()


def _encode_outcome(outcome: dict) -> bytes:
    try:
        payload = pickle.dumps(outcome)
    except Exception as e:  # noqa: BLE001
        return pickle.dumps({**outcome, "result": None, "status": "failed", "tracking": [],
                             "error": f"task result is not picklable: {e}", "traceback": ""})
    if len(payload) > _RESULT_LIMIT_BYTES:
        return pickle.dumps({**outcome, "result": None, "status": "failed", "tracking": [],
                             "error": f"task result is {len(payload)} bytes, limit {_RESULT_LIMIT_BYTES}",
                             "traceback": ""})
    return payload


def _death_notice(exitcode: int | None) -> str:
    if exitcode is not None and exitcode < 0:
        try:
            name = signal.Signals(-exitcode).name
        except ValueError:
            name = f"signal {-exitcode}"
        return f"worker killed by {name}; out of memory is the usual cause"
    return f"worker exited with code {exitcode} without reporting"


@dataclass
class _Worker:
    task_id: str
    process: Any
    conn: Any

    def outcome(self) -> dict:
        self.process.join()
        try:
            if self.conn.poll():
                return pickle.loads(self.conn.recv_bytes())
        except (EOFError, OSError, pickle.UnpicklingError):
            pass
        finally:
            self.conn.close()
        stamp = _now()
        return {"status": "failed", "error": _death_notice(self.process.exitcode), "traceback": "",
                "started_at": stamp, "finished_at": stamp, "duration_s": 0.0, "tracking": []}


class DAG:
    def __init__(self, tasks: dict[str, tuple[TaskFn, list[str]]], state_path: str | Path | None = None,
                 name: str = "sweep"):
        for task_id, (_, deps) in tasks.items():
            missing = sorted(set(deps) - set(tasks))
            if missing:
                raise ValueError(f"task {task_id} depends on unknown tasks {missing}")
        self.tasks = tasks
        self.name = name
        self.state_path = Path(state_path) if state_path else None
        self.topology_hash = _graph_digest(tasks)
        self.state: dict[str, dict] = {task_id: self._blank_node(task_id) for task_id in tasks}
        if self.state_path is not None:
            prior = _read_run_state(self.state_path)
            if prior:
                self._resume(prior)

    def _blank_node(self, task_id: str) -> dict:
        return {
            "id": task_id,
            "deps": list(self.tasks[task_id][1]),
            "status": "pending",
            "started_at": None,
            "finished_at": None,
            "duration_s": None,
            "error": None,
            "result": None,
            "reads": [],
            "writes": [],
        }

    def _resume(self, prior: dict) -> None:
        digest = prior.get("topology_hash")
        if digest and digest != self.topology_hash:
            print(f"[DAG] Topology hash mismatch with {self.state_path} ({digest} != {self.topology_hash}); "
                  f"rerunning every task")
            return
        kept = [node for node in prior.get("dag", {}).get("nodes", [])
                if node.get("status") == "done" and node.get("id") in self.state]
        for node in kept:
            self.state[node["id"]] = {**self.state[node["id"]], **node, "resumed": True}
        if kept:
            print(f"[DAG] Reusing {len(kept)} finished tasks from {self.state_path}")

    @property
    def results(self) -> dict[str, Any]:
        return {task_id: node["result"] for task_id, node in self.state.items() if node["status"] == "done"}

    def topological_order(self) -> list[str]:
        """Task ids with every dependency before its dependents."""
        waiting = {task_id: len(set(deps)) for task_id, (_, deps) in self.tasks.items()}
        dependents: dict[str, list[str]] = {task_id: [] for task_id in self.tasks}
        for task_id, (_, deps) in self.tasks.items():
            for dep in set(deps):
                dependents[dep].append(task_id)

        queue = deque(task_id for task_id, n in waiting.items() if n == 0)
        order: list[str] = []
        while queue:
            task_id = queue.popleft()
            order.append(task_id)
            for child in dependents[task_id]:
                waiting[child] -= 1
                if waiting[child] == 0:
                    queue.append(child)

        if len(order) != len(self.tasks):
            stuck = sorted(task_id for task_id, n in waiting.items() if n > 0)
            raise ValueError(f"Cycle detected among tasks {stuck}")
        return order

    def _launch(self, task_id: str) -> _Worker:
        fn, _ = self.tasks[task_id]
        recv, send = _FORK.Pipe(duplex=False)
        proc = _FORK.Process(target=_sweep_child, args=(fn, task_id, self.results, send), name=f"sweep:{task_id}")
        proc.start()
        send.close()
        node = self.state[task_id]
        node["status"] = "running"
        node["started_at"] = _now()
        print(f"[DAG] Running {task_id}...")
        return _Worker(task_id, proc, recv)

    def _record(self, task_id: str, outcome: dict) -> None:
        node = self.state[task_id]
        for key in ("status", "started_at", "finished_at", "duration_s"):
            node[key] = outcome.get(key)
        if outcome["status"] == "done":
            node["result"] = outcome.get("result")
            print(f"[DAG] {task_id} done ({node['duration_s'] or 0.0:.1f}s)")
        else:
            node["error"] = outcome.get("error") or "unknown error"
            node["traceback"] = outcome.get("traceback", "")
            print(f"[DAG] {task_id} failed: {node['error']}")
        records = outcome.get("tracking") or []
        tracking.merge(records)
        node["reads"] = [r["path"] for r in records if r["operation"] == "read"]
        node["writes"] = [r["path"] for r in records if r["operation"] == "write"]

    def _runnable(self, order: list[str]) -> list[str]:
        """Pending tasks whose dependencies are done; dependents of failures become skipped."""
        runnable = []
        for task_id in order:
            node = self.state[task_id]
            if node["status"] != "pending":
                continue
            upstream = {self.state[d]["status"] for d in self.tasks[task_id][1]}
            if upstream & {"failed", "skipped"}:
                node["status"] = "skipped"
                node["error"] = "Upstream dependency did not complete"
            elif upstream <= {"done"}:
                runnable.append(task_id)
        return runnable

    def run(self, parallelism: int | None = None) -> "DAG":
        """Run the pending tasks, at most `parallelism` at once (default FRL_PARALLELISM).

        After a failure nothing new is launched; running workers are waited
        for, run.json is written, and RuntimeError names the failed task.
        """
        slots = get_parallelism(parallelism)
        order = self.topological_order()
        resumed = [task_id for task_id in order if self.state[task_id]["status"] == "done"]
        if resumed:
            print(f"[DAG] Already done: {', '.join(resumed)}")

        failed: str | None = None
        workers: list[_Worker] = []
        while True:
            if failed is None:
                for task_id in self._runnable(order)[: slots - len(workers)]:
                    workers.append(self._launch(task_id))
            if not workers:
                break
            exited = multiprocessing.connection.wait([w.process.sentinel for w in workers], timeout=1.0)
            for worker in [w for w in workers if w.process.sentinel in exited]:
                workers.remove(worker)
                self._record(worker.task_id, worker.outcome())
                if failed is None and self.state[worker.task_id]["status"] == "failed":
                    failed = worker.task_id
                self.save_state()

        self._runnable(order)
        self.save_state()
        if failed is not None:
            raise RuntimeError(f"[DAG] {failed} failed: {self.state[failed]['error']}")
        return self

    def status(self) -> str:
        statuses = {node["status"] for node in self.state.values()}
        if "failed" in statuses:
            return "failed"
        return "done" if statuses <= set(_FINISHED) else "running"

    def to_json(self) -> dict:
        nodes = list(self.state.values())
        starts = [n["started_at"] for n in nodes if n.get("started_at")]
        ends = [n["finished_at"] for n in nodes if n.get("finished_at")]
        return {
            "name": self.name,
            "status": self.status(),
            "topology_hash": self.topology_hash,
            "started_at": min(starts, default=None),
            "finished_at": max(ends, default=None),
            "dag": {
                "nodes": nodes,
                "edges": [{"from": dep, "to": task_id} for task_id, (_, deps) in self.tasks.items() for dep in deps],
                "total_duration_s": sum(n.get("duration_s") or 0.0 for n in nodes),
            },
        }

    def save_state(self) -> None:
        """Write run.json; a DAG without a state path runs unpersisted."""
        if self.state_path is not None:
            _write_run_state(self.state_path, self.to_json())
