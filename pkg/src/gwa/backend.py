"""Language-model and embedding backends.

Two interchangeable implementations: a deterministic scripted backend
for tests and replayable demos, and an OpenAI-compatible HTTP client
for live runs. Both expose the same two methods (chat, embed) so the
engine never knows which one it is driving.

The scripted backend doubles as a recorder: every chat call is appended
to call_log and every embed call to embed_log, so tests can assert on
the exact request sequence a scenario produced.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from .errors import BackendRejected, BackendUnavailable

DEFAULT_EMBED_DIM = 256


@dataclass(frozen=True)
class ChatRequest:
    """One completion request, tagged with the node role that issued it."""

    system: str
    user: str
    temperature: float
    role_tag: str
    max_output_tokens: int = 1024
    tick: int | None = None

    def __post_init__(self) -> None:
        if not self.system or not self.user:
            raise ValueError("system and user texts must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class CallRecord:
    request: ChatRequest
    response: str
    latency_s: float
    prompt_tokens: int
    completion_tokens: int


class Backend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...

    def embed(self, text: str) -> np.ndarray: ...

    @property
    def embedding_dimension(self) -> int: ...


def hash_embedding(text: str, dimension: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Deterministic unit vector derived from the text's sha256.

    Equal texts map to equal vectors and distinct texts are nearly
    orthogonal in high dimension, which is all the scripted pipeline
    needs from an embedding space.
    """
    if not text:
        raise ValueError("cannot embed empty text")
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    vector = rng.standard_normal(dimension)
    return vector / np.linalg.norm(vector)


@dataclass(frozen=True)
class ScriptedRule:
    """First-match-wins response rule.

    Every non-None field must match the request: role equality,
    substring containment in the user text, tick equality.
    """

    response: str
    role: str | None = None
    contains: str | None = None
    tick: int | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.role is not None and request.role_tag != self.role:
            return False
        if self.contains is not None and self.contains not in request.user:
            return False
        if self.tick is not None and request.tick != self.tick:
            return False
        return True


class ScriptedBackend:
    """Rule table over requests with a synchronized audit trail."""

    def __init__(
        self,
        rules: list[ScriptedRule] | None = None,
        default_response: str = "1. I should continue reflecting on the current situation.",
        embed_dimension: int = DEFAULT_EMBED_DIM,
    ) -> None:
        self._rules = list(rules or [])
        self._default = default_response
        self._dim = embed_dimension
        self._lock = threading.Lock()
        self.call_log: list[CallRecord] = []
        self.embed_log: list[str] = []

    @classmethod
    def from_file(cls, path: Path | str, **kwargs: object) -> ScriptedBackend:
        """Load rules from a JSONL file, one rule object per line."""
        rules = []
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            unknown = set(obj) - {"response", "role", "contains", "tick"}
            if unknown:
                raise ValueError(f"{path}:{line_no}: unknown rule keys {sorted(unknown)}")
            if "response" not in obj:
                raise ValueError(f"{path}:{line_no}: rule missing 'response'")
            rules.append(
                ScriptedRule(
                    response=obj["response"],
                    role=obj.get("role"),
                    contains=obj.get("contains"),
                    tick=obj.get("tick"),
                )
            )
        return cls(rules=rules, **kwargs)  # type: ignore[arg-type]

    @property
    def embedding_dimension(self) -> int:
        return self._dim

    def chat(self, request: ChatRequest) -> str:
        response = self._default
        for rule in self._rules:
            if rule.matches(request):
                response = rule.response
                break
        record = CallRecord(
            request=request,
            response=response,
            latency_s=0.0,
            prompt_tokens=(len(request.system) + len(request.user)) // 4,
            completion_tokens=len(response) // 4,
        )
        with self._lock:
            self.call_log.append(record)
        return response

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        with self._lock:
            self.embed_log.append(text)
        return hash_embedding(text, self._dim)

    def calls_for_role(self, role: str) -> list[CallRecord]:
        with self._lock:
            return [r for r in self.call_log if r.request.role_tag == role]


class OpenAIChatClient:
    """Client for any server speaking the OpenAI chat/embeddings API.

    The API key comes from the GWA_API_KEY environment variable; an
    explicit argument overrides it. role_models maps a node role tag to
    the model name used for that role, with "default" as fallback.

    Transport errors become BackendUnavailable (retryable upstream);
    non-2xx responses become BackendRejected (not retryable, the server
    understood us and said no).
    """

    def __init__(
        self,
        base_url: str,
        role_models: dict[str, str] | None = None,
        api_key: str | None = None,
        embed_model: str = "text-embedding-3-small",
        embed_dimension: int = DEFAULT_EMBED_DIM,
        timeout_s: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._role_models = dict(role_models or {})
        if "default" not in self._role_models:
            self._role_models["default"] = "gpt-4o-mini"
        self._embed_model = embed_model
        self._dim = embed_dimension
        key = api_key if api_key is not None else os.environ.get("GWA_API_KEY", "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            headers=headers, timeout=timeout_s, transport=transport
        )

    @property
    def embedding_dimension(self) -> int:
        return self._dim

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self._base_url}{path}"
        try:
            response = self._client.post(url, json=payload)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"POST {url} failed: {exc}") from exc
        if response.status_code < 200 or response.status_code >= 300:
            raise BackendRejected(response.status_code, response.text)
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise BackendRejected(response.status_code, f"non-JSON body: {response.text[:200]}") from exc

    def chat(self, request: ChatRequest) -> str:
        model = self._role_models.get(request.role_tag, self._role_models["default"])
        payload = {
            "model": model,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        body = self._post("/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendRejected(200, f"malformed completion body: {body}") from exc
        if not isinstance(content, str):
            raise BackendRejected(200, f"non-string completion content: {content!r}")
        return content

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        payload = {"model": self._embed_model, "input": text}
        body = self._post("/embeddings", payload)
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendRejected(200, f"malformed embedding body: {body}") from exc
        vector = np.asarray(values, dtype=np.float64)
        if vector.ndim != 1:
            raise BackendRejected(200, f"embedding is not a vector: shape {vector.shape}")
        if vector.shape[0] != self._dim:
            raise BackendRejected(
                200, f"embedding dimension {vector.shape[0]} != configured {self._dim}"
            )
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise BackendRejected(200, "zero-norm embedding")
        return vector / norm


class FlakyBackend:
    """Wrapper that fails the first N chat calls with a transport error.

    Exists for tests exercising the engine's retry-with-backoff path.
    """

    def __init__(self, inner: Backend, failures: int) -> None:
        self._inner = inner
        self._remaining = failures
        self.attempts = 0

    @property
    def embedding_dimension(self) -> int:
        return self._inner.embedding_dimension

    def chat(self, request: ChatRequest) -> str:
        self.attempts += 1
        if self._remaining > 0:
            self._remaining -= 1
            raise BackendUnavailable("simulated transport failure")
        return self._inner.chat(request)

    def embed(self, text: str) -> np.ndarray:
        return self._inner.embed(text)
