"""The operational surface: HTTP endpoints and the live event stream.

Starts the service in-process on a spare port, stages a message over
HTTP, follows the event stream until the reply is dispatched, then
shows the state snapshot and the committed tick log.
"""

import json
import threading
import time

import httpx
import uvicorn

from gwa.backend import ScriptedBackend, ScriptedRule
from gwa.config import AppConfig
from gwa.engine import Engine
from gwa.service import build_app

PORT = 8650
BASE = f"http://127.0.0.1:{PORT}"

rules = [
    ScriptedRule(role="critic", response="1. Score: 3 | Critique: direct and sufficient."),
    ScriptedRule(
        role="meta",
        response="WINNING THOUGHT: 1\nTRANSITION: [RESPONSE]\nRATIONALE: Nothing left to weigh.",
    ),
    ScriptedRule(role="response", response="Hello back; the loop is alive."),
]

engine = Engine(AppConfig(), ScriptedBackend(rules=rules))
stop = threading.Event()
threading.Thread(target=engine.run_loop, args=(stop,), daemon=True).start()

server = uvicorn.Server(uvicorn.Config(build_app(engine), host="127.0.0.1", port=PORT, log_level="warning"))
threading.Thread(target=server.run, daemon=True).start()
while True:
    try:
        httpx.get(f"{BASE}/api/health", timeout=1.0)
        break
    except httpx.TransportError:
        time.sleep(0.05)

print("health:", httpx.get(f"{BASE}/api/health").json())

with httpx.stream("GET", f"{BASE}/api/events", timeout=30.0) as stream:
    posted = httpx.post(f"{BASE}/api/input", json={"source": "demo", "text": "hello in there"})
    print("staged:", posted.json())
    print()
    for line in stream.iter_lines():
        if not line.startswith("data:"):
            continue
        event = json.loads(line[len("data:"):].strip())
        if event["kind"] == "phase_completed":
            print(f"  phase done: {event['payload']['phase']}")
        elif event["kind"] == "tick_committed":
            print(f"  tick {event['tick']} committed")
        elif event["kind"] == "output_dispatched":
            print(f"  reply: {event['payload']['text']}")
            break

print()
state = httpx.get(f"{BASE}/api/state").json()
print(f"snapshot: tick {state['tick']}, entropy {state['entropy']:.3f}, "
      f"pending {state['input_pending']}")
ticks = httpx.get(f"{BASE}/api/ticks").json()
print(f"committed ticks on record: {len(ticks)}")

stop.set()
server.should_exit = True
time.sleep(0.3)
