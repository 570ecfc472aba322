"""HTTP operational surface over a running engine.

Endpoints: stage a message, read the committed-state snapshot, page
through the run log, stream live events, and probe health. Handlers
never touch engine internals beyond the staging queue and read-only
snapshots; the event stream fans out through bounded per-subscriber
queues so one stalled consumer cannot block the tick loop.
"""

from __future__ import annotations

import json
import queue
import threading
from typing import Iterator

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .engine import ApiEvent, Engine

SUBSCRIBER_BUFFER = 1024
KEEPALIVE_SECONDS = 15.0

_OVERFLOW = object()  # sentinel queued when a subscriber falls behind


class EventBus:
    """Fan-out of engine events to bounded per-subscriber queues.

    The source never blocks: when a subscriber's queue is full it
    receives a terminal overflow marker and is dropped. Events reach
    every live subscriber in emission order.
    """

    def __init__(self, buffer_size: int = SUBSCRIBER_BUFFER) -> None:
        self._buffer_size = buffer_size
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def attach(self, engine: Engine) -> None:
        engine.subscribe(self.publish)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(self._buffer_size)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: ApiEvent) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            try:
                q.put_nowait(event)
            except queue.Full:
                with self._lock:
                    if q in self._subscribers:
                        self._subscribers.remove(q)
                try:
                    q.get_nowait()  # make room so the terminal marker fits
                except queue.Empty:
                    pass
                try:
                    q.put_nowait(_OVERFLOW)
                except queue.Full:
                    pass


class InputBody(BaseModel):
    source: str = "user"
    text: str


def build_app(engine: Engine, bus: EventBus | None = None) -> FastAPI:
    """Assemble the HTTP app around one engine instance."""
    app = FastAPI(title="workspace agent service", docs_url=None, redoc_url=None)
    # the console may be served from a different origin than the API
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    bus = bus or EventBus()
    bus.attach(engine)
    app.state.engine = engine
    app.state.bus = bus

    @app.post("/api/input")
    def post_input(body: InputBody) -> dict:
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="text must be nonempty")
        position = engine.stage_input(body.source, body.text)
        return {"accepted": True, "staged_position": position}

    @app.get("/api/state")
    def get_state() -> dict:
        return engine.snapshot().to_dict()

    @app.get("/api/ticks")
    def get_ticks(
        start: int = Query(0, alias="from", ge=0),
        limit: int = Query(100, ge=1, le=1000),
    ) -> list[dict]:
        return [
            {k: v for k, v in record.items() if k != "durations"}
            for record in engine.committed_ticks(start=start, limit=limit)
        ]

    @app.get("/api/health")
    def get_health() -> dict:
        snap = engine.snapshot()
        return {"status": "ok", "tick": snap.tick, "ltm_size": snap.ltm_size}

    @app.get("/api/events")
    def get_events() -> StreamingResponse:
        subscriber = bus.subscribe()

        def stream() -> Iterator[str]:
            try:
                while True:
                    try:
                        item = subscriber.get(timeout=KEEPALIVE_SECONDS)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if item is _OVERFLOW:
                        payload = json.dumps(
                            {"kind": "overflow", "detail": "subscriber too slow, disconnected"}
                        )
                        yield f"event: overflow\ndata: {payload}\n\n"
                        return
                    data = json.dumps(item.to_dict(), ensure_ascii=False)
                    yield f"event: {item.kind}\ndata: {data}\n\n"
            finally:
                bus.unsubscribe(subscriber)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "Connection": "keep-alive"},
        )

    return app


def serve(engine: Engine, bind_addr: str, stop: threading.Event) -> None:
    """Run the tick loop and the HTTP server until stop is set.

    The engine loop runs in a background thread; uvicorn owns the main
    thread so signal handling stays conventional.
    """
    import uvicorn

    host, port = _split_addr(bind_addr)
    app = build_app(engine)
    loop_thread = threading.Thread(
        target=engine.run_loop, args=(stop,), name="engine-loop", daemon=True
    )
    loop_thread.start()
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run()
    finally:
        stop.set()
        loop_thread.join(timeout=5.0)


def _split_addr(bind_addr: str) -> tuple[str, int]:
    host, sep, port = bind_addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {bind_addr!r}")
    return host, int(port)
