from __future__ import annotations

import numpy as np
import pytest

from rlstorage.simenv import CompletionRecord
from rlstorage.trace import READ, IoRequest


def make_record(arrival_us: float, offset: int, size: int = 4096, op: str = READ,
                submit_us: float | None = None, complete_us: float | None = None,
                cache_hit: bool = False) -> CompletionRecord:
    """Completion with defaulted timing, for feature/metrics tests."""
    submit = arrival_us if submit_us is None else submit_us
    complete = submit + 100.0 if complete_us is None else complete_us
    req = IoRequest(arrival_us=int(arrival_us), op=op, offset=offset, size=size)
    return CompletionRecord(request=req, submit_us=submit, complete_us=complete,
                            cache_hit=cache_hit)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def api_client():
    from fastapi.testclient import TestClient

    from rlstorage.service import create_app

    with TestClient(create_app()) as client:
        yield client


def poll_job(client, job_id: str, budget_s: float = 300.0) -> dict:
    import time

    deadline = time.monotonic() + budget_s
    while time.monotonic() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "error"):
            return status
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} still running after {budget_s}s")
