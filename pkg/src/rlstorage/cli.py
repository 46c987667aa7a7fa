"""Command-line client for the storage-tuning service.

Every subcommand except `serve` talks to the HTTP API: by default an
in-process application instance, or a remote server via --server.  Exit
codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
import time
import warnings
from pathlib import Path

import httpx

from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_POLL_S = 0.2


class ClientError(RuntimeError):
    """Any failure reported by the service or the transport."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the documented code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class ServiceClient:
    """Thin wrapper over httpx against a remote server or an in-process app."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

                from .service import create_app

                self._client = TestClient(create_app())

    def close(self):
        self._client.close()

    def _check(self, resp) -> None:
        if resp.status_code < 400:
            return
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise ClientError(f"{resp.request.url.path}: {detail}")

    def get_json(self, path: str, **params) -> dict:
        resp = self._client.get(path, params=params or None)
        self._check(resp)
        return resp.json()

    def get_text(self, path: str, **params) -> str:
        resp = self._client.get(path, params=params or None)
        self._check(resp)
        return resp.text

    def post_json(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        self._check(resp)
        return resp.json()

    def post_text(self, path: str, payload: dict) -> str:
        resp = self._client.post(path, json=payload)
        self._check(resp)
        return resp.text

    def run_job(self, path: str, payload: dict) -> str:
        """Submit a job and poll until it finishes; returns the job id."""
        job_id = self.post_json(path, payload)["job_id"]
        while True:
            status = self.get_json(f"/jobs/{job_id}")
            if status["state"] == "done":
                return job_id
            if status["state"] == "error":
                raise ClientError(status.get("error") or "job failed")
            time.sleep(_POLL_S)


# -- argument plumbing --------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}") from None


def _add_experiment_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--fixture", help="bundled experiment fixture name")
    sub.add_argument("--name", default="adhoc")
    sub.add_argument("--device", default="nvme")
    sub.add_argument("--workload", default="kv-random")
    sub.add_argument("--agent", default="tabular", dest="agent_kind",
                     choices=("tabular", "dqn", "none"))
    sub.add_argument("--baseline", default="static", dest="baseline_kind",
                     choices=("static", "heuristic", "none"))
    sub.add_argument("--seeds", type=_int_list, default=None,
                     help="comma-separated list, e.g. 1,2,3")
    sub.add_argument("--episodes", type=int, default=None, dest="train_episodes")
    sub.add_argument("--eval-episodes", type=int, default=None)
    sub.add_argument("--decay", type=int, default=None, dest="epsilon_decay_steps",
                     help="epsilon schedule decay steps")
    sub.add_argument("--depth", type=int, default=None, dest="dqn_depth",
                     help="weight-layer count for the dqn agent")
    _add_knob_args(sub)


def _add_knob_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--readahead", type=int, default=None, dest="readahead_pages")
    sub.add_argument("--queue-depth", type=int, default=None)
    sub.add_argument("--cache-pages", type=int, default=None)


def _build_parser() -> _Parser:
    parser = _Parser(prog="rlstorage",
                     description="storage-stack simulator with an RL auto-tuner")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
    parser.add_argument("--config", default=None, help="config file path")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    cmds = parser.add_subparsers(dest="command", metavar="command")

    serve = cmds.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    cmds.add_parser("defaults", help="print the default config text")

    trace = cmds.add_parser("trace", help="generate a workload trace file")
    trace.add_argument("--workload", default="kv-random")
    trace.add_argument("--out-file", default=None,
                       help="destination file (default <out>/<workload>.trace)")

    sim = cmds.add_parser("simulate", help="run one fixed-config simulation")
    sim.add_argument("--device", default="nvme")
    sim.add_argument("--workload", default=None)
    sim.add_argument("--trace", default=None, help="replay a trace file")
    sim.add_argument("--window-us", type=float, default=None)
    _add_knob_args(sim)

    train = cmds.add_parser("train", help="train an agent and save it")
    _add_experiment_args(train)
    train.add_argument("--agent-out", default=None,
                       help="agent file destination (default <out>/agent.bin)")

    evaluate = cmds.add_parser("evaluate",
                               help="train, evaluate vs baseline, write reports")
    _add_experiment_args(evaluate)

    ablate = cmds.add_parser("ablate", help="run the ablation matrix")
    _add_experiment_args(ablate)
    ablate.add_argument("--mode", default="components",
                        choices=("components", "depths"))
    ablate.add_argument("--depths", type=_int_list, default=[3, 4, 5],
                        help="comma-separated dqn depths for --mode depths")

    rep = cmds.add_parser("report", help="re-render a saved report.json")
    rep.add_argument("--input", required=True, help="report.json path")
    rep.add_argument("--format", default="text",
                     choices=("csv", "text", "plotdata", "metrics"))
    rep.add_argument("--out-file", default=None,
                     help="write here instead of stdout")
    return parser


def _experiment_payload(args, config_text: str | None) -> dict:
    payload: dict = {"config_text": config_text}
    if args.fixture:
        payload["fixture"] = args.fixture
    else:
        payload.update(name=args.name, device=args.device, workload=args.workload,
                       agent_kind=args.agent_kind, baseline_kind=args.baseline_kind)
    if args.seeds is not None:
        payload["seeds"] = args.seeds
    if args.train_episodes is not None:
        payload["train_episodes"] = args.train_episodes
    if args.eval_episodes is not None:
        payload["eval_episodes"] = args.eval_episodes
    if args.epsilon_decay_steps is not None:
        payload["epsilon_decay_steps"] = args.epsilon_decay_steps
    if args.dqn_depth is not None:
        payload["dqn_depth"] = args.dqn_depth
    knobs = _knob_payload(args)
    if knobs:
        payload["knobs"] = knobs
    return payload


def _knob_payload(args) -> dict | None:
    given = {}
    if args.readahead_pages is not None:
        given["readahead_pages"] = args.readahead_pages
    if args.queue_depth is not None:
        given["queue_depth"] = args.queue_depth
    if args.cache_pages is not None:
        given["cache_pages"] = args.cache_pages
    if not given:
        return None
    defaults = {"readahead_pages": 8, "queue_depth": 32, "cache_pages": 4096}
    defaults.update(given)
    return defaults


def _out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


# -- subcommand bodies --------------------------------------------------------

def _cmd_serve(args, config_text: str | None) -> int:
    import uvicorn

    from .config import default_config, parse_config
    from .service import create_app

    settings = parse_config(config_text) if config_text else default_config()
    uvicorn.run(create_app(settings), host=args.host, port=args.port)
    return EXIT_OK


def _cmd_defaults(client: ServiceClient, args) -> int:
    sys.stdout.write(client.get_text("/defaults"))
    return EXIT_OK


def _cmd_trace(client: ServiceClient, args, config_text) -> int:
    resp = client.post_json("/traces", {
        "workload": args.workload, "seed": args.seed, "config_text": config_text,
    })
    dest = Path(args.out_file) if args.out_file else _out_dir(args) / f"{args.workload}.trace"
    dest.parent.mkdir(parents=True, exist_ok=True)
    _write(dest, resp["trace_text"])
    print(f"{resp['requests']} requests over {resp['duration_us']} us, "
          f"read fraction {resp['read_fraction']:.3f}")
    return EXIT_OK


def _cmd_simulate(client: ServiceClient, args, config_text) -> int:
    payload: dict = {
        "device": args.device, "seed": args.seed, "config_text": config_text,
    }
    if args.trace:
        payload["trace_text"] = Path(args.trace).read_text(encoding="utf-8")
    elif args.workload:
        payload["workload"] = args.workload
    else:
        payload["workload"] = "kv-random"
    if args.window_us is not None:
        payload["window_us"] = args.window_us
    knobs = _knob_payload(args)
    if knobs:
        payload["knobs"] = knobs
    resp = client.post_json("/simulate", payload)
    _write(_out_dir(args) / "metrics.csv", resp["metrics_csv"])
    mean = resp["mean_latency_us"]
    p99 = resp["p99_latency_us"]
    hit = resp["cache_hit_rate"]
    print(f"{resp['completions']} completions in {resp['duration_us'] / 1e3:.1f} ms, "
          f"{resp['throughput_bytes_per_s'] / 1e6:.2f} MB/s")
    print(f"latency mean {mean:.1f} us, p99 {p99:.1f} us, hit rate {hit:.4f}"
          if resp["completions"] else "no completions")
    return EXIT_OK


def _cmd_train(client: ServiceClient, args, config_text) -> int:
    job_id = client.run_job("/train", _experiment_payload(args, config_text))
    result = client.get_json(f"/jobs/{job_id}/result")
    dest = Path(args.agent_out) if args.agent_out else _out_dir(args) / "agent.bin"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_bytes(base64.b64decode(result["agent_b64"]))
    print(f"wrote {dest} ({result['agent_bytes']} bytes, {result['agent_kind']})")
    sums = result["episode_reward_sums"]
    if sums:
        print(f"{len(sums)} episodes, reward sum first {sums[0]:.3f} last {sums[-1]:.3f}")
    return EXIT_OK


def _cmd_evaluate(client: ServiceClient, args, config_text) -> int:
    job_id = client.run_job("/experiments", _experiment_payload(args, config_text))
    out = _out_dir(args)
    report = client.get_json(f"/jobs/{job_id}/result")
    _write(out / "report.json", json.dumps(report, indent=2) + "\n")
    _write(out / "summary.csv", client.get_text(f"/jobs/{job_id}/artifact", format="csv"))
    _write(out / "metrics.csv", client.get_text(f"/jobs/{job_id}/artifact", format="metrics"))
    text = client.get_text(f"/jobs/{job_id}/artifact", format="text")
    _write(out / "report.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_ablate(client: ServiceClient, args, config_text) -> int:
    payload = _experiment_payload(args, config_text)
    payload["mode"] = args.mode
    payload["depths"] = args.depths
    job_id = client.run_job("/ablations", payload)
    out = _out_dir(args)
    report = client.get_json(f"/jobs/{job_id}/result")
    _write(out / "ablation.json", json.dumps(report, indent=2) + "\n")
    _write(out / "ablation.csv", client.get_text(f"/jobs/{job_id}/artifact", format="csv"))
    text = client.get_text(f"/jobs/{job_id}/artifact", format="text")
    _write(out / "ablation.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_report(client: ServiceClient, args) -> int:
    report = json.loads(Path(args.input).read_text(encoding="utf-8"))
    rendered = client.post_text("/reports/render",
                                {"report": report, "format": args.format})
    if args.out_file:
        _write(Path(args.out_file), rendered)
    else:
        sys.stdout.write(rendered)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # raised by --help (0) and _Parser.error (1)
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        config_text = Path(args.config).read_text(encoding="utf-8") if args.config else None
        if config_text is not None:
            # reject bad files before any request; requests carry the raw text
            from .config import Config, default_config, parse_config

            merged = dict(default_config().values)
            merged.update(parse_config(config_text).values)
            Config(merged).validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "serve":
        try:
            return _cmd_serve(args, config_text)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    client = ServiceClient(args.server)
    try:
        if args.command == "defaults":
            return _cmd_defaults(client, args)
        if args.command == "trace":
            return _cmd_trace(client, args, config_text)
        if args.command == "simulate":
            return _cmd_simulate(client, args, config_text)
        if args.command == "train":
            return _cmd_train(client, args, config_text)
        if args.command == "evaluate":
            return _cmd_evaluate(client, args, config_text)
        if args.command == "ablate":
            return _cmd_ablate(client, args, config_text)
        if args.command == "report":
            return _cmd_report(client, args)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError, httpx.HTTPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
