"""Chat-completion and embedding clients with retry and an audit log.

Two transports are provided: :class:`HttpTransport` speaks the common
``/chat/completions`` + ``/embeddings`` JSON protocol, and
:class:`ScriptedTransport` answers from a local table or a Python callable
so that whole pipelines can run offline and reproducibly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, TypeVar

import httpx
import numpy as np

from .errors import ConfigError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = ""
    model_name: str = "scripted"
    api_key_env: str | None = None
    temperature: float = 0.0
    max_attempts_per_call: int = 3
    timeout: float = 60.0
    request_seed: int | None = None
    backoff_base: float = 0.5
    embedding_dim: int | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_attempts_per_call < 1:
            raise ValueError("max_attempts_per_call must be >= 1")


@dataclass(frozen=True)
class ChatExchange:
    call_index: int
    request_text: str
    response_text: str
    kind: str = "chat"
    temperature: float | None = None
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "call_index": self.call_index,
            "kind": self.kind,
            "temperature": self.temperature,
            "request_sha256": text_digest(self.request_text),
            "request_text": self.request_text,
            "response_text": self.response_text,
            "error": self.error,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ProtocolError("embedding vector is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ProtocolError("embedding vector has non-finite values")

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class AuditLog:
    """Append-only record of every physical endpoint call."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: list[ChatExchange] = []

    def append(self, **fields) -> ChatExchange:
        with self._lock:
            entry = ChatExchange(call_index=len(self._entries), **fields)
            self._entries.append(entry)
            return entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self.entries())

    def entries(self) -> list[ChatExchange]:
        with self._lock:
            return list(self._entries)

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for entry in self.entries():
                fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")


class Transport(Protocol):
    def chat(self, config: BackendConfig, prompt: str, temperature: float) -> str: ...

    def embed(self, config: BackendConfig, texts: Sequence[str]) -> list[list[float]]: ...


class HttpTransport:
    """OpenAI-compatible HTTP transport."""

    def __init__(self, client: httpx.Client | None = None) -> None:
        self._client = client or httpx.Client()

    def _headers(self, config: BackendConfig) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if key is None:
                raise ConfigError(f"environment variable {config.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, config: BackendConfig, path: str, body: dict) -> dict:
        url = config.base_url.rstrip("/") + path
        try:
            resp = self._client.post(url, json=body, headers=self._headers(config), timeout=config.timeout)
        except httpx.HTTPError as exc:
            raise TransportError(f"{url}: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(f"{url}: HTTP {resp.status_code}", status=resp.status_code)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url}: response is not JSON") from exc

    def chat(self, config: BackendConfig, prompt: str, temperature: float) -> str:
        body = {
            "model": config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        if config.request_seed is not None:
            body["seed"] = config.request_seed
        data = self._post(config, "/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("chat response lacks choices[0].message.content") from exc
        return content or ""

    def embed(self, config: BackendConfig, texts: Sequence[str]) -> list[list[float]]:
        data = self._post(config, "/embeddings", {"model": config.model_name, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda row: row.get("index", 0))
            return [list(row["embedding"]) for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProtocolError("embedding response lacks data[].embedding") from exc


Responder = Callable[[str, float], str]
Embedder = Callable[[str], Sequence[float]]


class ScriptedTransport:
    """Offline transport answering from tables and/or callables.

    ``chat`` maps a prompt digest (see :func:`text_digest`) to a list of
    responses consumed in order; an entry ``{"error": 503}`` simulates a
    failed call. Prompts missing from the table fall through to
    ``responder(prompt, temperature)``. Embeddings work the same way with
    ``embeddings`` keyed by text digest and an ``embedder`` fallback.
    """

    def __init__(
        self,
        chat: dict[str, list] | None = None,
        embeddings: dict[str, Sequence[float]] | None = None,
        responder: Responder | None = None,
        embedder: Embedder | None = None,
    ) -> None:
        self._chat = {k: list(v) for k, v in (chat or {}).items()}
        self._embeddings = dict(embeddings or {})
        self._responder = responder
        self._embedder = embedder
        self._consumed: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScriptedTransport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(chat=data.get("chat"), embeddings=data.get("embeddings"), **kwargs)

    @staticmethod
    def record(exchanges: Iterable[ChatExchange]) -> dict:
        """Turn an audit log into a script that replays it exactly."""
        chat: dict[str, list] = defaultdict(list)
        embeddings: dict[str, list[float]] = {}
        for ex in sorted(exchanges, key=lambda e: e.call_index):
            key = text_digest(ex.request_text)
            if ex.kind == "chat":
                if ex.error:
                    chat[key].append({"error": int(ex.error) if ex.error.isdigit() else ex.error})
                else:
                    chat[key].append(ex.response_text)
            elif ex.kind == "embedding" and not ex.error:
                embeddings[key] = json.loads(ex.response_text)
        return {"chat": dict(chat), "embeddings": embeddings}

    def chat(self, config: BackendConfig, prompt: str, temperature: float) -> str:
        key = text_digest(prompt)
        with self._lock:
            queue = self._chat.get(key)
            if queue is not None and self._consumed[key] < len(queue):
                entry = queue[self._consumed[key]]
                self._consumed[key] += 1
            elif self._responder is not None:
                entry = None
            else:
                raise ProtocolError(f"no scripted response left for prompt {key[:12]}")
        if entry is None:
            entry = self._responder(prompt, temperature)
        if isinstance(entry, dict):
            status = entry.get("error")
            raise TransportError(f"scripted failure {status}", status=status if isinstance(status, int) else None)
        return entry

    def embed(self, config: BackendConfig, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            key = text_digest(text)
            if key in self._embeddings:
                out.append(list(self._embeddings[key]))
            elif self._embedder is not None:
                out.append(list(self._embedder(text)))
            else:
                raise ProtocolError(f"no scripted embedding for text {key[:12]}")
        return out


class Client:
    """A model endpoint bound to one :class:`BackendConfig`.

    Shareable between threads; every physical call, including failed and
    retried ones, lands in ``audit``.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Transport | None = None,
        *,
        audit: AuditLog | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.transport = transport if transport is not None else HttpTransport()
        self.audit = audit if audit is not None else AuditLog()
        self._sleep = sleep

    def _with_retry(self, call: Callable[[], T], *, request: str, kind: str, temperature: float | None) -> T:
        last: TransportError | None = None
        for attempt in range(self.config.max_attempts_per_call):
            if attempt:
                self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                result = call()
            except TransportError as exc:
                self.audit.append(
                    request_text=request, response_text="", kind=kind, temperature=temperature,
                    error=str(exc.status or exc),
                )
                logger.warning("%s call failed (attempt %d/%d): %s", kind, attempt + 1,
                               self.config.max_attempts_per_call, exc)
                last = exc
                if exc.status is not None and exc.status not in RETRYABLE_STATUS:
                    break
                continue
            return result
        raise TransportError(
            f"{kind} call failed after {self.config.max_attempts_per_call} attempt(s): {last}",
            status=last.status if last else None,
        )

    def chat(self, prompt: str, temperature: float | None = None) -> ChatExchange:
        """Like :meth:`chat_complete` but returns the logged exchange."""
        temp = self.config.temperature if temperature is None else float(temperature)
        if not math.isfinite(temp) or temp < 0:
            raise ValueError(f"invalid temperature {temp}")

        def call() -> ChatExchange:
            text = self.transport.chat(self.config, prompt, temp)
            return self.audit.append(request_text=prompt, response_text=text, kind="chat", temperature=temp)

        exchange = self._with_retry(call, request=prompt, kind="chat", temperature=temp)
        if not exchange.response_text or not exchange.response_text.strip():
            raise ProtocolError("empty response body")
        return exchange

    def chat_complete(self, prompt: str, temperature: float | None = None) -> str:
        """Send one user message and return the raw response text."""
        return self.chat(prompt, temperature).response_text

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        for text in texts:
            if not isinstance(text, str) or not text:
                raise ValueError("embedding input must be a non-empty string")
        request = json.dumps(list(texts), ensure_ascii=False)

        def call() -> list[list[float]]:
            rows = self.transport.embed(self.config, texts)
            for text, row in zip(texts, rows):
                self.audit.append(request_text=text, response_text=json.dumps(row), kind="embedding")
            return rows

        rows = self._with_retry(call, request=request, kind="embedding", temperature=None)
        if len(rows) != len(texts):
            raise ProtocolError(f"asked for {len(texts)} embeddings, got {len(rows)}")
        vectors = [EmbeddingVector(tuple(float(v) for v in row)) for row in rows]
        dims = {v.dimension for v in vectors}
        if self.config.embedding_dim is not None:
            dims.add(self.config.embedding_dim)
        if len(dims) != 1:
            raise ProtocolError(f"embedding dimension mismatch: {sorted(dims)}")
        return vectors

    def embed_text(self, text: str) -> EmbeddingVector:
        return self.embed_texts([text])[0]


def fan_out(fn: Callable[[T], R], items: Sequence[T], width: int = 8) -> list[R]:
    """Apply ``fn`` with bounded parallelism; results follow input order."""
    if width <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=width) as pool:
        return list(pool.map(fn, items))


@dataclass
class ClientSet:
    """Named clients sharing one audit log (ranker, teacher, validity, ...)."""

    clients: dict[str, Client] = field(default_factory=dict)
    audit: AuditLog = field(default_factory=AuditLog)

    def __getitem__(self, name: str) -> Client:
        try:
            return self.clients[name]
        except KeyError:
            raise KeyError(f"no backend named {name!r} configured") from None

    def __contains__(self, name: str) -> bool:
        return name in self.clients
