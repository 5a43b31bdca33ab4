"""Text-completion backends with a deterministic record/replay cache.

Every pipeline stage talks to a `complete(request) -> str` interface. The
replay store keys responses by a stable request digest, so a pipeline run
over a populated store is bit-deterministic and needs no network.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import BackendError, MissingReplayEntry, RemoteError

_RETRY_ATTEMPTS = 3
_RETRY_BASE_SECONDS = 0.5


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int = 1024
    temperature: float = 0.0
    backend_id: str = "default"

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def request_digest(request: CompletionRequest) -> str:
    """Stable hash of the canonicalized request. Newlines are normalized so
    whitespace drift in long prompt templates does not invalidate caches."""
    canonical = json.dumps(
        [
            request.backend_id,
            _normalize_newlines(request.prompt),
            request.temperature,
            request.max_output_tokens,
        ],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRecord:
    digest: str
    response: str
    backend_id: str = ""
    latency_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "digest": self.digest,
            "response": self.response,
            "backend_id": self.backend_id,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompletionRecord":
        return cls(
            digest=data["digest"],
            response=data["response"],
            backend_id=data.get("backend_id", ""),
            latency_ms=float(data.get("latency_ms", 0.0)),
        )


class ReplayStore:
    """Append-only JSONL store of completion records.

    Single writer, shared readers: appends are serialized by a lock, and the
    in-memory index is the source of truth for lookups.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, CompletionRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        record = CompletionRecord.from_dict(json.loads(line))
                        self._records[record.digest] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, digest: str) -> bool:
        return digest in self._records

    def get(self, digest: str) -> CompletionRecord | None:
        return self._records.get(digest)

    def put(self, record: CompletionRecord) -> None:
        """Store a record; identical digests collapse to a single entry."""
        with self._lock:
            if record.digest in self._records:
                return
            self._records[record.digest] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                    fh.flush()


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> str:
        ...


class ReplayBackend:
    """Serves responses from a replay store; never touches the network."""

    def __init__(self, store: ReplayStore):
        self.store = store

    def complete(self, request: CompletionRequest) -> str:
        record = self.store.get(request_digest(request))
        if record is None:
            raise MissingReplayEntry(request_digest(request))
        return record.response


class RecordingBackend:
    """Wraps a live backend and persists every response; repeated requests
    hit the stored record instead of the remote."""

    def __init__(self, inner: Backend, store: ReplayStore):
        self.inner = inner
        self.store = store

    def complete(self, request: CompletionRequest) -> str:
        digest = request_digest(request)
        record = self.store.get(digest)
        if record is not None:
            return record.response
        start = time.monotonic()
        response = self.inner.complete(request)
        latency_ms = (time.monotonic() - start) * 1000.0
        self.store.put(
            CompletionRecord(
                digest=digest,
                response=response,
                backend_id=request.backend_id,
                latency_ms=latency_ms,
            )
        )
        return response


class ScriptedBackend:
    """Deterministic backend driven by a callable; used to build fixtures
    and replay stores without a remote."""

    def __init__(self, respond: Callable[[CompletionRequest], str]):
        self._respond = respond

    def complete(self, request: CompletionRequest) -> str:
        return self._respond(request)


def _env_name(backend_id: str, suffix: str) -> str:
    safe = "".join(ch if ch.isalnum() else "_" for ch in backend_id.upper())
    return f"CLAIMTREE_{safe}_{suffix}"


class HttpBackend:
    """Generic remote completion endpoint.

    Configuration comes from the environment, named per backend id:
    CLAIMTREE_<ID>_URL (required) and CLAIMTREE_<ID>_KEY (optional bearer
    token). The wire format is POST {prompt, max_output_tokens, temperature}
    returning {"text": ...}. Retries with exponential backoff; failures
    surface as RemoteError with the attempt count.
    """

    def __init__(self, backend_id: str, url: str | None = None, timeout: float = 120.0):
        self.backend_id = backend_id
        self.url = url or os.environ.get(_env_name(backend_id, "URL"))
        self.api_key = os.environ.get(_env_name(backend_id, "KEY"))
        self.timeout = timeout
        if not self.url:
            raise RemoteError(
                f"backend {backend_id!r} has no endpoint; set {_env_name(backend_id, 'URL')}"
            )

    def complete(self, request: CompletionRequest) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "prompt": request.prompt,
            "max_output_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(1, _RETRY_ATTEMPTS + 1):
            try:
                response = httpx.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                return response.json()["text"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < _RETRY_ATTEMPTS:
                    time.sleep(_RETRY_BASE_SECONDS * 2 ** (attempt - 1))
        raise RemoteError(str(last_error), attempts=_RETRY_ATTEMPTS)


def complete_many(
    backend: Backend,
    requests: Sequence[CompletionRequest],
    max_in_flight: int = 4,
) -> list[str | BackendError]:
    """Complete a batch concurrently; results align positionally with the
    inputs, and per-request failures come back as error values rather than
    aborting the batch."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")

    def run_one(request: CompletionRequest) -> str | BackendError:
        try:
            return backend.complete(request)
        except BackendError as exc:
            return exc

    if not requests:
        return []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run_one, requests))
