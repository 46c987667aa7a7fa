"""Thread-backed job registry for experiment-sized work.

Experiments run for tens of seconds; HTTP handlers enqueue them here and
clients poll.  Results stay in memory for the life of the process, which
matches the tool's single-operator usage.
"""

from __future__ import annotations

import threading
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = "queued"  # queued | running | done | error
    error: str | None = None
    result: object = None
    traceback: str | None = None


class JobManager:
    def __init__(self, workers: int = 2):
        self._executor = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def submit(self, kind: str, fn) -> Job:
        job = Job(job_id=uuid.uuid4().hex[:12], kind=kind)
        with self._lock:
            self._jobs[job.job_id] = job

        def runner():
            job.state = "running"
            try:
                job.result = fn()
                job.state = "done"
            except Exception as exc:  # surfaced via the status endpoint
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "error"
                job.traceback = traceback.format_exc()

        self._executor.submit(runner)
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def shutdown(self):
        self._executor.shutdown(wait=False, cancel_futures=True)
