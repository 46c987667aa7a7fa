from __future__ import annotations

import base64
import csv
import io

from conftest import poll_job
from rlstorage.agent import load_agent
from rlstorage.harness import METRICS_HEADER, SUMMARY_HEADER
from rlstorage.trace import read_trace

TINY_EXPERIMENT = {
    "name": "svc", "device": "nvme", "workload": "kv-random",
    "agent_kind": "tabular", "baseline_kind": "static",
    "seeds": [1], "train_episodes": 1, "epsilon_decay_steps": 50,
}


def test_health(api_client):
    resp = api_client.get("/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_defaults_returns_parseable_config(api_client):
    from rlstorage.config import parse_config

    resp = api_client.get("/defaults")
    assert resp.status_code == 200
    parse_config(resp.text).validate()


def test_trace_generation_roundtrips(api_client):
    resp = api_client.post("/traces", json={"workload": "scan-sequential", "seed": 2})
    assert resp.status_code == 200
    body = resp.json()
    trace = read_trace(body["trace_text"])
    assert len(trace.requests) == body["requests"]
    assert trace.address_space_bytes == body["address_space_bytes"]


def test_trace_unknown_workload_400(api_client):
    resp = api_client.post("/traces", json={"workload": "nope"})
    assert resp.status_code == 400


def test_simulate_returns_metrics_csv(api_client):
    resp = api_client.post("/simulate", json={
        "device": "nvme", "workload": "kv-random", "window_us": 50_000.0, "seed": 1,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["completions"] == 10_000
    rows = list(csv.reader(io.StringIO(body["metrics_csv"])))
    assert rows[0] == METRICS_HEADER.split(",")
    assert len(rows) == 1 + len(body["windows"])


def test_simulate_accepts_inline_trace(api_client):
    gen = api_client.post("/traces", json={"workload": "kv-random", "seed": 5}).json()
    resp = api_client.post("/simulate", json={
        "device": "sata", "trace_text": gen["trace_text"], "window_us": 100_000.0,
    })
    assert resp.status_code == 200
    assert resp.json()["workload"] == "trace"
    assert resp.json()["completions"] == gen["requests"]


def test_simulate_validation_errors(api_client):
    assert api_client.post("/simulate", json={"device": "floppy",
                                              "workload": "kv-random"}).status_code == 400
    assert api_client.post("/simulate", json={"device": "nvme"}).status_code == 400
    assert api_client.post("/simulate", json={"device": "nvme", "workload": "kv-random",
                                              "window_us": -5}).status_code == 422
    bad_knobs = {"device": "nvme", "workload": "kv-random",
                 "knobs": {"readahead_pages": 3, "queue_depth": 1, "cache_pages": 1}}
    assert api_client.post("/simulate", json=bad_knobs).status_code == 400


def test_config_text_overlay_changes_run(api_client):
    overlay = "workload.kv-random.count = 77\n"
    resp = api_client.post("/simulate", json={
        "device": "nvme", "workload": "kv-random", "config_text": overlay,
    })
    assert resp.status_code == 200
    assert resp.json()["completions"] == 77


def test_bad_config_text_is_400(api_client):
    resp = api_client.post("/simulate", json={
        "device": "nvme", "workload": "kv-random", "config_text": "bogus.key = 1\n",
    })
    assert resp.status_code == 400


def test_experiment_job_lifecycle(api_client):
    sub = api_client.post("/experiments", json=TINY_EXPERIMENT)
    assert sub.status_code == 200
    job_id = sub.json()["job_id"]

    early = api_client.get(f"/jobs/{job_id}/result")
    assert early.status_code in (200, 409)  # may legitimately finish fast

    status = poll_job(api_client, job_id)
    assert status["state"] == "done"

    result = api_client.get(f"/jobs/{job_id}/result").json()
    assert result["kind"] == "experiment"
    assert result["experiment"] == "svc"
    assert [p["policy"] for p in result["policies"]] == ["tabular", "static"]

    summary = api_client.get(f"/jobs/{job_id}/artifact", params={"format": "csv"})
    assert summary.text.splitlines()[0] == SUMMARY_HEADER
    metrics = api_client.get(f"/jobs/{job_id}/artifact", params={"format": "metrics"})
    assert metrics.text.splitlines()[0] == METRICS_HEADER
    text = api_client.get(f"/jobs/{job_id}/artifact", params={"format": "text"})
    assert "tabular" in text.text

    rendered = api_client.post("/reports/render",
                               json={"report": result, "format": "csv"})
    assert rendered.text == summary.text


def test_ablation_job(api_client):
    req = dict(TINY_EXPERIMENT, workload="phase-flip", mode="components")
    sub = api_client.post("/ablations", json=req)
    job_id = sub.json()["job_id"]
    assert poll_job(api_client, job_id)["state"] == "done"
    result = api_client.get(f"/jobs/{job_id}/result").json()
    assert result["kind"] == "ablation"
    assert [r["label"] for r in result["rows"]] == [
        "full", "feedback-off", "collector-off", "both-off"]
    art = api_client.get(f"/jobs/{job_id}/artifact", params={"format": "csv"})
    assert art.status_code == 200


def test_train_job_yields_loadable_agent(api_client):
    sub = api_client.post("/train", json=TINY_EXPERIMENT)
    job_id = sub.json()["job_id"]
    assert poll_job(api_client, job_id)["state"] == "done"
    result = api_client.get(f"/jobs/{job_id}/result").json()
    blob = base64.b64decode(result["agent_b64"])
    assert len(blob) == result["agent_bytes"]
    agent = load_agent(blob)
    assert agent.kind == "tabular"
    assert len(result["episode_reward_sums"]) == 1


def test_unknown_job_404(api_client):
    assert api_client.get("/jobs/ffffffffffff").status_code == 404
    assert api_client.get("/jobs/ffffffffffff/result").status_code == 404
    assert api_client.get("/jobs/ffffffffffff/artifact").status_code == 404


def test_fixture_shortcut_accepted(api_client):
    # fixture name resolves server-side; invalid names fail at submit time
    resp = api_client.post("/experiments", json={"fixture": "no-such-fixture"})
    assert resp.status_code == 400


def test_render_rejects_malformed_report(api_client):
    assert api_client.post("/reports/render",
                           json={"report": {"kind": "weird"},
                                 "format": "csv"}).status_code == 400
    assert api_client.post("/reports/render",
                           json={"report": {"kind": "experiment"},
                                 "format": "csv"}).status_code == 400
