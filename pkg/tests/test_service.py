"""HTTP surface: staging, snapshots, paging, health, and live events."""

import json
import threading
import time

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient

from gwa.backend import ScriptedBackend
from gwa.config import AppConfig, EngineConfig
from gwa.engine import ApiEvent, Engine
from gwa.service import EventBus, _OVERFLOW, _split_addr, build_app

from support import basic_rules

SERVICE_PORT = 8641
OVERFLOW_PORT = 8643

RESPONSE_TICK_KINDS = [
    "tick_started",
    "phase_completed",
    "phase_completed",
    "phase_completed",
    "phase_completed",
    "tick_committed",
    "output_dispatched",
]


def make_engine(transition: str = "THINK_MORE") -> Engine:
    backend = ScriptedBackend(rules=basic_rules(transition=transition))
    return Engine(AppConfig(), backend)


def start_server(app, port: int) -> uvicorn.Server:
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    threading.Thread(target=server.run, daemon=True).start()
    deadline = time.time() + 10
    while time.time() < deadline:
        try:
            httpx.get(f"http://127.0.0.1:{port}/api/health", timeout=1.0)
            return server
        except httpx.TransportError:
            time.sleep(0.05)
    raise RuntimeError("server did not come up")


def read_events(lines, count: int) -> list[dict]:
    """Pull the next `count` SSE data payloads from a line iterator."""
    collected = []
    for line in lines:
        if line.startswith("data:"):
            collected.append(json.loads(line[len("data:"):].strip()))
            if len(collected) >= count:
                break
    return collected


class TestEndpoints:
    def test_input_staging_positions(self):
        client = TestClient(build_app(make_engine()))
        first = client.post("/api/input", json={"source": "user", "text": "hello"})
        assert first.status_code == 200
        assert first.json() == {"accepted": True, "staged_position": 1}
        second = client.post("/api/input", json={"text": "again"})
        assert second.json()["staged_position"] == 2

    def test_blank_input_rejected(self):
        client = TestClient(build_app(make_engine()))
        assert client.post("/api/input", json={"text": "   "}).status_code == 422
        assert client.post("/api/input", json={"source": "user"}).status_code == 422

    def test_state_reflects_committed_ticks(self):
        engine = make_engine()
        client = TestClient(build_app(engine))
        before = client.get("/api/state").json()
        assert before["tick"] == 0
        assert set(before) == {
            "tick",
            "stm_rendered",
            "input_pending",
            "entropy",
            "temperature",
            "ltm_size",
            "cluster_count",
        }
        engine.run_tick()
        after = client.get("/api/state").json()
        assert after["tick"] == 1
        assert after["cluster_count"] >= 1

    def test_ticks_empty_before_any_commit(self):
        client = TestClient(build_app(make_engine()))
        assert client.get("/api/ticks").json() == []

    def test_ticks_pagination_and_no_durations(self):
        engine = make_engine()
        client = TestClient(build_app(engine))
        for _ in range(3):
            engine.run_tick()
        full = client.get("/api/ticks").json()
        assert [r["tick"] for r in full] == [0, 1, 2]
        assert all("durations" not in r for r in full)
        page = client.get("/api/ticks", params={"from": 1, "limit": 1}).json()
        assert [r["tick"] for r in page] == [1]
        assert client.get("/api/ticks", params={"from": 9}).json() == []

    def test_ticks_query_validation(self):
        client = TestClient(build_app(make_engine()))
        assert client.get("/api/ticks", params={"from": -1}).status_code == 422
        assert client.get("/api/ticks", params={"limit": 0}).status_code == 422
        assert client.get("/api/ticks", params={"limit": 1001}).status_code == 422

    def test_health(self):
        engine = make_engine()
        client = TestClient(build_app(engine))
        engine.run_tick()
        body = client.get("/api/health").json()
        assert body == {"status": "ok", "tick": 1, "ltm_size": 0}


class TestEventBus:
    def _event(self, seq: int) -> ApiEvent:
        return ApiEvent(seq=seq, kind="tick_started", tick=0, payload={})

    def test_delivery_preserves_order(self):
        bus = EventBus()
        q = bus.subscribe()
        for i in range(3):
            bus.publish(self._event(i))
        assert [q.get_nowait().seq for i in range(3)] == [0, 1, 2]

    def test_every_subscriber_sees_every_event(self):
        bus = EventBus()
        a, b = bus.subscribe(), bus.subscribe()
        for i in range(2):
            bus.publish(self._event(i))
        assert [a.get_nowait().seq for _ in range(2)] == [0, 1]
        assert [b.get_nowait().seq for _ in range(2)] == [0, 1]

    def test_unsubscribed_queue_goes_quiet(self):
        bus = EventBus()
        q = bus.subscribe()
        bus.unsubscribe(q)
        bus.publish(self._event(0))
        assert q.empty()

    def test_slow_subscriber_dropped_with_terminal_marker(self):
        bus = EventBus(buffer_size=2)
        slow = bus.subscribe()
        keeper = bus.subscribe()
        kept = []
        for i in range(5):
            bus.publish(self._event(i))
            kept.append(keeper.get_nowait().seq)
        drained = []
        while not slow.empty():
            drained.append(slow.get_nowait())
        # one event was evicted to make room for the marker
        assert drained[-1] is _OVERFLOW
        assert [e.seq for e in drained[:-1]] == [1]
        # a subscriber that keeps pace is unaffected
        assert kept == [0, 1, 2, 3, 4]


class TestSplitAddr:
    def test_parses_host_and_port(self):
        assert _split_addr("127.0.0.1:8600") == ("127.0.0.1", 8600)

    def test_rejects_missing_port(self):
        with pytest.raises(ValueError):
            _split_addr("localhost")


@pytest.fixture(scope="module")
def live():
    engine = make_engine(transition="RESPONSE")
    stop = threading.Event()
    app = build_app(engine)
    loop_thread = threading.Thread(target=engine.run_loop, args=(stop,), daemon=True)
    loop_thread.start()
    server = start_server(app, SERVICE_PORT)
    yield f"http://127.0.0.1:{SERVICE_PORT}"
    stop.set()
    server.should_exit = True
    loop_thread.join(timeout=5)


class TestLiveEvents:
    def test_stream_carries_one_full_tick(self, live):
        with httpx.stream("GET", f"{live}/api/events", timeout=15.0) as stream:
            httpx.post(f"{live}/api/input", json={"text": "ping"}, timeout=5.0)
            events = read_events(stream.iter_lines(), len(RESPONSE_TICK_KINDS))
        assert [e["kind"] for e in events] == RESPONSE_TICK_KINDS
        assert events[-1]["payload"]["text"] == "A scripted reply."
        ticks = [e["tick"] for e in events]
        assert len(set(ticks)) == 1

    def test_two_subscribers_see_identical_streams(self, live):
        url = f"{live}/api/events"
        with httpx.stream("GET", url, timeout=15.0) as a:
            with httpx.stream("GET", url, timeout=15.0) as b:
                httpx.post(f"{live}/api/input", json={"text": "pong"}, timeout=5.0)
                events_a = read_events(a.iter_lines(), len(RESPONSE_TICK_KINDS))
                events_b = read_events(b.iter_lines(), len(RESPONSE_TICK_KINDS))
        assert events_a == events_b

    def test_seq_strictly_increases_across_ticks(self, live):
        with httpx.stream("GET", f"{live}/api/events", timeout=15.0) as stream:
            lines = stream.iter_lines()
            httpx.post(f"{live}/api/input", json={"text": "one"}, timeout=5.0)
            events = read_events(lines, len(RESPONSE_TICK_KINDS))
            httpx.post(f"{live}/api/input", json={"text": "two"}, timeout=5.0)
            events += read_events(lines, len(RESPONSE_TICK_KINDS))
        seqs = [e["seq"] for e in events]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs)


class TestOverflowOverHttp:
    def test_slow_consumer_gets_terminal_overflow_event(self):
        engine = make_engine()
        bus = EventBus(buffer_size=8)
        app = build_app(engine, bus=bus)
        server = start_server(app, OVERFLOW_PORT)
        try:
            url = f"http://127.0.0.1:{OVERFLOW_PORT}/api/events"
            with httpx.stream("GET", url, timeout=30.0) as stream:
                # a burst no consumer thread can relay in time
                for i in range(5000):
                    bus.publish(ApiEvent(seq=i, kind="tick_started", tick=i, payload={"pad": "x" * 512}))
                received = [
                    json.loads(line[len("data:"):].strip())
                    for line in stream.iter_lines()
                    if line.startswith("data:")
                ]
            assert received, "expected at least the overflow marker"
            assert received[-1]["kind"] == "overflow"
            assert all(e["kind"] == "tick_started" for e in received[:-1])
        finally:
            server.should_exit = True
            time.sleep(0.2)
