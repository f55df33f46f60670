"""Chat-completion and embedding gateway with transcript record/replay.

Three modes:

* ``live``   - HTTP round-trips to ``<endpoint>/chat`` and ``<endpoint>/embed``.
* ``record`` - as live, and every response is appended to the transcript.
* ``replay`` - responses come from the transcript only; no sockets are opened.

Transcript lookups are keyed by the SHA-256 of the canonical request JSON
(sorted keys, no insignificant whitespace), so replays are stable across
runs and platforms.
"""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import random
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import AuthMissing, DimensionMismatch, EndpointError, TranscriptMiss

logger = logging.getLogger(__name__)

API_KEY_ENV = "PULSE_API_KEY"
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


class Mode(str, enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def payload(self) -> dict:
        return {
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(kind: str, payload: dict) -> str:
    body = canonical_json({"kind": kind, "request": payload})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class Transcript:
    """Digest -> response map persisted as JSON lines ``{"digest", "response"}``."""

    def __init__(self, path: str | Path | None = None, entries: dict[str, Any] | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, Any] = dict(entries or {})
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        entries: dict[str, Any] = {}
        p = Path(path)
        if p.exists():
            for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    entries[rec["digest"]] = rec["response"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValueError(f"{p}:{lineno}: malformed transcript line") from exc
        return cls(p, entries)

    def lookup(self, digest: str) -> Any:
        try:
            return self.entries[digest]
        except KeyError:
            raise TranscriptMiss(f"no transcript entry for request {digest[:12]}") from None

    def append(self, digest: str, response: Any) -> None:
        with self._lock:
            if digest in self.entries:
                return
            self.entries[digest] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical_json({"digest": digest, "response": response}) + "\n")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self.entries


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    jitter: float = 0.10
    seed: int = 0

    def delays(self) -> list[float]:
        """Backoff before retry n (n = 0, 1, ...): 0.5 * 2**n, +/-10% seeded jitter."""
        rng = random.Random(self.seed)
        return [
            self.base_delay * 2**n * (1 + rng.uniform(-self.jitter, self.jitter))
            for n in range(self.attempts - 1)
        ]


@dataclass
class BackendStats:
    requests: int = 0
    network_calls: int = 0
    last_attempts: int = 0
    transcript_hits: int = 0


@dataclass
class Backend:
    mode: Mode = Mode.REPLAY
    endpoint: str | None = None
    transcript: Transcript | None = None
    models: dict[str, str] = field(default_factory=dict)
    parallelism: int = 4
    timeout: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key: str | None = None
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.stats = BackendStats()
        self._slots = threading.BoundedSemaphore(max(1, self.parallelism))
        self._stats_lock = threading.Lock()
        if self.mode is not Mode.LIVE and self.transcript is None:
            self.transcript = Transcript()
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)

    def model_for(self, agent: str) -> str:
        return self.models.get(agent) or self.models.get("default") or "default"

    def complete(self, request: ChatRequest) -> str:
        response = self._call("chat", request.payload())
        if not isinstance(response, str):
            raise EndpointError("chat response is not text")
        return response

    def chat(self, agent: str, messages: list[tuple[str, str]], max_tokens: int = 1024) -> str:
        """Convenience wrapper: build a temperature-0 request for ``agent``'s model."""
        req = ChatRequest(
            messages=tuple(Message(r, c) for r, c in messages),
            model=self.model_for(agent),
            max_tokens=max_tokens,
        )
        return self.complete(req)

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        payload = {"model": self.model_for("embed"), "texts": list(texts)}
        vectors = self._call("embed", payload)
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise DimensionMismatch(
                f"expected {len(texts)} vectors, got {len(vectors) if isinstance(vectors, list) else 'none'}"
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1 or 0 in dims:
            raise DimensionMismatch(f"inconsistent embedding dimensions {sorted(dims)}")
        out = [[float(x) for x in v] for v in vectors]
        if not all(math.isfinite(x) for v in out for x in v):
            raise DimensionMismatch("embedding contains non-finite components")
        return out

    def _call(self, kind: str, payload: dict) -> Any:
        digest = request_digest(kind, payload)
        with self._stats_lock:
            self.stats.requests += 1
        if self.mode is Mode.REPLAY:
            response = self.transcript.lookup(digest)
            with self._stats_lock:
                self.stats.transcript_hits += 1
            return response
        with self._slots:
            response = self._http(kind, payload)
        if self.mode is Mode.RECORD:
            self.transcript.append(digest, response)
        return response

    def _http(self, kind: str, payload: dict) -> Any:
        if not self.endpoint:
            raise EndpointError("no endpoint configured")
        if not self.api_key:
            raise AuthMissing(f"set {API_KEY_ENV} for live backend calls")
        url = f"{self.endpoint.rstrip('/')}/{kind}"
        body = json.dumps(payload).encode("utf-8")
        delays = self.retry.delays()
        status = None
        for attempt in range(1, self.retry.attempts + 1):
            req = urllib.request.Request(
                url,
                data=body,
                method="POST",
                headers={
                    "Content-Type": "application/json",
                    "Authorization": f"Bearer {self.api_key}",
                },
            )
            with self._stats_lock:
                self.stats.network_calls += 1
                self.stats.last_attempts = attempt
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    data = json.loads(resp.read().decode("utf-8"))
                return data["text"] if kind == "chat" else data["vectors"]
            except urllib.error.HTTPError as exc:
                status = exc.code
                if status not in RETRY_STATUSES:
                    raise EndpointError(f"{url}: HTTP {status}", status, attempt) from exc
            except urllib.error.URLError as exc:
                raise EndpointError(f"{url}: {exc.reason}", None, attempt) from exc
            except (KeyError, json.JSONDecodeError) as exc:
                raise EndpointError(f"{url}: malformed response body", None, attempt) from exc
            if attempt < self.retry.attempts:
                logger.warning("%s returned %s, retrying (attempt %d)", url, status, attempt)
                self.sleep(delays[attempt - 1])
        raise EndpointError(f"{url}: retries exhausted (last status {status})", status, self.retry.attempts)
