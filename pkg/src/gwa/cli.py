"""Command-line operations: run the service, replay or inspect a run
log, and hold a minimal terminal chat with a live agent.

The config path comes from --config or the GWA_CONFIG environment
variable. `replay` and `inspect` are offline (no backend, no engine);
`ask` talks to an already-running service over HTTP.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading

import httpx

from .backend import OpenAIChatClient, ScriptedBackend
from .config import AppConfig, load_config
from .engine import Engine, format_tick, load_run_log
from .errors import GwaError, StartupError
from .service import serve

DEFAULT_SERVICE_URL = "http://127.0.0.1:8600"


def _resolve_config(path: str | None) -> AppConfig:
    resolved = path or os.environ.get("GWA_CONFIG")
    if resolved is None:
        return AppConfig()
    return load_config(resolved)


def _build_backend(config: AppConfig, script_override: str | None):
    backend_cfg = config.backend
    if script_override is not None:
        return ScriptedBackend.from_file(
            script_override, embed_dimension=backend_cfg.embed_dimension
        )
    if backend_cfg.kind == "scripted":
        if backend_cfg.script_path:
            return ScriptedBackend.from_file(
                backend_cfg.script_path, embed_dimension=backend_cfg.embed_dimension
            )
        return ScriptedBackend(
            default_response=backend_cfg.default_response,
            embed_dimension=backend_cfg.embed_dimension,
        )
    return OpenAIChatClient(
        base_url=backend_cfg.base_url,
        role_models=backend_cfg.role_models,
        embed_model=backend_cfg.embed_model,
        embed_dimension=backend_cfg.embed_dimension,
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = _resolve_config(args.config)
    backend = _build_backend(config, args.scripted)
    engine = Engine(config, backend)
    stop = threading.Event()
    try:
        serve(engine, config.service.bind_addr, stop)
    except KeyboardInterrupt:
        stop.set()
    finally:
        engine.close()
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    records = load_run_log(args.log)
    for record in records:
        print(format_tick(record))
        print()
    ticks = sum(1 for r in records if r.get("type") == "tick")
    aborted = sum(1 for r in records if r.get("type") == "error")
    print(f"{ticks} committed ticks, {aborted} aborted attempts")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    records = load_run_log(args.log)
    matches = [r for r in records if r.get("tick") == args.tick]
    if not matches:
        print(f"no record for tick {args.tick} in {args.log}", file=sys.stderr)
        return 1
    for record in matches:
        print(json.dumps(record, indent=2, ensure_ascii=False))
    return 0


def cmd_ask(args: argparse.Namespace) -> int:
    """Post one message and block until the agent dispatches its reply.

    Subscribes to the event stream before posting so the reply cannot
    slip past between the post and the subscription.
    """
    base = args.url.rstrip("/")
    try:
        with httpx.Client(timeout=httpx.Timeout(args.timeout, read=args.timeout)) as client:
            with client.stream("GET", f"{base}/api/events") as stream:
                post = client.post(
                    f"{base}/api/input", json={"source": "cli", "text": args.text}
                )
                if post.status_code >= 300:
                    print(f"service rejected input: {post.text}", file=sys.stderr)
                    return 1
                for line in stream.iter_lines():
                    if not line.startswith("data:"):
                        continue
                    event = json.loads(line[len("data:") :].strip())
                    if event.get("kind") == "output_dispatched":
                        print(event["payload"]["text"])
                        return 0
    except httpx.HTTPError as exc:
        print(f"cannot reach service at {base}: {exc}", file=sys.stderr)
        return 1
    print("event stream ended before a reply was dispatched", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwa", description="workspace agent runtime"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start the engine and HTTP service")
    run.add_argument("--config", help="path to the YAML config (or set GWA_CONFIG)")
    run.add_argument("--scripted", help="scripted-backend rule file, overriding config")
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="re-render a committed run log")
    replay.add_argument("--log", required=True, help="run-log JSONL path")
    replay.set_defaults(func=cmd_replay)

    inspect = sub.add_parser("inspect", help="pretty-print one tick record")
    inspect.add_argument("--log", required=True, help="run-log JSONL path")
    inspect.add_argument("--tick", required=True, type=int, help="tick number")
    inspect.set_defaults(func=cmd_inspect)

    ask = sub.add_parser("ask", help="send a message and print the reply")
    ask.add_argument("--text", required=True, help="message text")
    ask.add_argument("--url", default=DEFAULT_SERVICE_URL, help="service base URL")
    ask.add_argument("--timeout", type=float, default=120.0, help="seconds to wait")
    ask.set_defaults(func=cmd_ask)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StartupError, GwaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
