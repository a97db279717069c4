"""External-world contracts: LLM completion, grounded search, the scholarly
index, rate limiting, and a deterministic record/replay fixture layer.

Every request is keyed by a content hash of (model, prompt, attachment
digests, temperature). In record mode live responses are persisted one file
per key; in replay mode the store is the only source and an unrecorded request
is a hard failure that names the offending prompt hash. The limiter and the
grounded-call semaphore guard the network transport, so replaying recorded
sessions is both offline and fast.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable

from .errors import IndexLookupError, ProviderFailure

logger = logging.getLogger(__name__)

MODE_LIVE = "live"
MODE_RECORD = "record"
MODE_REPLAY = "replay"

DEFAULT_GENERATION_TEMPERATURE = 0.75
DEFAULT_JUDGE_TEMPERATURE = 0.0
GROUNDED_CONCURRENCY = 10
INDEX_MIN_INTERVAL_S = 1.0
RETRY_ATTEMPTS = 3
INDEX_TOP_K = 10

ENV_LLM_API_KEY = "ORCH_LLM_API_KEY"
ENV_INDEX_API_KEY = "ORCH_INDEX_API_KEY"
ENV_FIXTURE_DIR = "ORCH_FIXTURE_DIR"
ENV_MODE = "ORCH_MODE"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    attachments: tuple[tuple[str, bytes], ...] = ()
    temperature: float | None = None
    model: str = ""
    tags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if isinstance(self.attachments, list):
            object.__setattr__(self, "attachments", tuple(tuple(a) for a in self.attachments))


@dataclass(frozen=True)
class IndexRecord:
    entity_id: str
    title: str
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    abstract: str | None = None
    citation_count: int = 0
    publication_date: date | None = None

    def __post_init__(self):
        if not self.entity_id:
            raise ValueError("entity_id must be non-empty")


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def fixture_key(req: CompletionRequest) -> str:
    """Stable content hash; unrelated pipeline refactors don't invalidate it."""
    payload = {
        "model": req.model,
        "prompt_sha256": prompt_digest(req.prompt),
        "attachments": [
            [media, hashlib.sha256(data).hexdigest()] for media, data in req.attachments
        ],
        "temperature": req.temperature,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class ReplayStore:
    """One fixture file per key: a JSON header line, then the response body.

    Concurrent readers are safe; record mode takes a lock for writes.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._write_lock = threading.Lock()

    def _path(self, namespace: str, key: str) -> Path:
        return self.root / namespace / f"{key}.fixture"

    def load(self, namespace: str, key: str) -> bytes | None:
        path = self._path(namespace, key)
        if not path.is_file():
            return None
        raw = path.read_bytes()
        _, _, body = raw.partition(b"\n")
        return body

    def save(self, namespace: str, key: str, header: dict, body: bytes) -> bool:
        """Write the fixture if absent; returns True when a file was created."""
        path = self._path(namespace, key)
        with self._write_lock:
            if path.exists():
                return False
            path.parent.mkdir(parents=True, exist_ok=True)
            head = json.dumps({"key": key, **header}, sort_keys=True).encode("utf-8")
            path.write_bytes(head + b"\n" + body)
            return True

    def verify(self) -> list[str]:
        """Names of fixture files whose header key disagrees with the filename."""
        problems = []
        if not self.root.is_dir():
            return problems
        for path in sorted(self.root.rglob("*.fixture")):
            raw = path.read_bytes()
            head, _, _ = raw.partition(b"\n")
            try:
                header = json.loads(head)
            except json.JSONDecodeError:
                problems.append(f"{path}: unreadable header")
                continue
            if header.get("key") != path.stem:
                problems.append(f"{path}: header key {header.get('key')!r} != filename")
        return problems

    def count(self) -> int:
        if not self.root.is_dir():
            return 0
        return sum(1 for _ in self.root.rglob("*.fixture"))


class RateLimiter:
    """FIFO min-interval limiter: no two permits within ``min_interval`` seconds."""

    def __init__(self, min_interval: float = INDEX_MIN_INTERVAL_S, *, clock=time.monotonic, sleeper=time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleeper
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> float:
        """Block until a permit is available; returns the permit timestamp."""
        while True:
            with self._lock:
                now = self._clock()
                if now >= self._next_free:
                    self._next_free = now + self.min_interval
                    return now
                wait = self._next_free - now
            self._sleep(wait)


class CallLedger:
    """Thread-safe per-agent call counter (provider boundary bookkeeping)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def record(self, agent: str) -> None:
        with self._lock:
            self._counts[agent] = self._counts.get(agent, 0) + 1

    def counts(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self._counts.items()))

    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())


@dataclass
class ProviderConfig:
    mode: str = MODE_REPLAY
    fixture_dir: str = ""
    llm_api_key: str = ""
    index_api_key: str = ""
    llm_base_url: str = "https://api.openai.com/v1"
    index_base_url: str = "https://api.semanticscholar.org/graph/v1"
    writing_model: str = "writing-default"
    grounded_model: str = "grounded-default"
    judge_model: str = "judge-default"
    generation_temperature: float = DEFAULT_GENERATION_TEMPERATURE
    judge_temperature: float = DEFAULT_JUDGE_TEMPERATURE

    @classmethod
    def from_env(cls, overrides: dict | None = None, config_file: Path | str | None = None) -> "ProviderConfig":
        """Precedence: explicit overrides > environment > config file > defaults."""
        values: dict = {}
        if config_file:
            values.update(json.loads(Path(config_file).read_text(encoding="utf-8")))
        env_map = {
            "mode": os.environ.get(ENV_MODE),
            "fixture_dir": os.environ.get(ENV_FIXTURE_DIR),
            "llm_api_key": os.environ.get(ENV_LLM_API_KEY),
            "index_api_key": os.environ.get(ENV_INDEX_API_KEY),
        }
        values.update({k: v for k, v in env_map.items() if v})
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        return cls(**{k: v for k, v in values.items() if k in known})


def _retrying(call: Callable[[], "object"], *, attempts: int = RETRY_ATTEMPTS, base_delay: float = 0.5,
              sleeper=time.sleep):
    """Bounded retries with exponential backoff; auth failures never retry."""
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return call()
        except ProviderFailure as exc:
            if exc.kind == "auth":
                raise
            last = exc
            if attempt < attempts - 1:
                sleeper(base_delay * (2**attempt))
    raise ProviderFailure("transient-exhausted", str(last))


def _http_llm_transport(config: ProviderConfig, *, grounded: bool):
    """OpenAI-style chat-completions POST; swapped out entirely in tests."""
    import requests

    def transport(req: CompletionRequest) -> str:
        model = req.model or (config.grounded_model if grounded else config.writing_model)
        content: object = req.prompt
        if req.attachments:
            parts: list[dict] = [{"type": "text", "text": req.prompt}]
            for media, data in req.attachments:
                parts.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{media};base64,{base64.b64encode(data).decode()}"},
                    }
                )
            content = parts
        payload: dict = {"model": model, "messages": [{"role": "user", "content": content}]}
        if req.temperature is not None:
            payload["temperature"] = req.temperature
        if grounded:
            payload["tools"] = [{"type": "web_search"}]

        def attempt() -> str:
            response = requests.post(
                f"{config.llm_base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {config.llm_api_key}"},
                timeout=120,
            )
            if response.status_code in (401, 403):
                raise ProviderFailure("auth", f"HTTP {response.status_code}")
            if response.status_code == 429:
                raise ProviderFailure("quota", "HTTP 429")
            if response.status_code >= 500:
                raise ProviderFailure("transient-exhausted", f"HTTP {response.status_code}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise ProviderFailure("malformed", f"unexpected response shape: {exc}") from exc

        return _retrying(attempt)

    return transport


def _scrub_secrets(text: str, config: ProviderConfig) -> str:
    # Responses never persist echoed credentials.
    for secret in (config.llm_api_key, config.index_api_key):
        if secret:
            text = text.replace(secret, "[redacted]")
    return text


class LlmClient:
    """Plain and search-grounded completion with record/replay and auditing."""

    def __init__(
        self,
        config: ProviderConfig,
        *,
        store: ReplayStore | None = None,
        transport: Callable[[CompletionRequest], str] | None = None,
        grounded_transport: Callable[[CompletionRequest], str] | None = None,
        ledger: CallLedger | None = None,
        prompt_audit: Callable[[CompletionRequest], None] | None = None,
        grounded_concurrency: int = GROUNDED_CONCURRENCY,
    ):
        self.config = config
        self.mode = config.mode
        if self.mode not in (MODE_LIVE, MODE_RECORD, MODE_REPLAY):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.mode in (MODE_RECORD, MODE_REPLAY) and store is None:
            if not config.fixture_dir:
                raise ValueError(f"mode {self.mode} requires a fixture dir")
            store = ReplayStore(config.fixture_dir)
        self.store = store
        self._transport = transport
        self._grounded_transport = grounded_transport
        self.ledger = ledger or CallLedger()
        self._audit = prompt_audit
        self._grounded_gate = threading.BoundedSemaphore(grounded_concurrency)

    def set_prompt_audit(self, audit: Callable[[CompletionRequest], None] | None) -> None:
        self._audit = audit

    def _dispatch(self, req: CompletionRequest, *, grounded: bool) -> str:
        namespace = "grounded" if grounded else "complete"
        if self._audit is not None:
            self._audit(req)
        self.ledger.record(req.tags.get("agent", namespace))
        key = fixture_key(req)
        if self.mode == MODE_REPLAY:
            body = self.store.load(namespace, key)
            if body is None:
                raise ProviderFailure(
                    "malformed",
                    f"no recorded fixture for prompt sha256={prompt_digest(req.prompt)} ({namespace})",
                )
            return body.decode("utf-8")
        transport = self._grounded_transport if grounded else self._transport
        if transport is None:
            transport = _http_llm_transport(self.config, grounded=grounded)
            if grounded:
                self._grounded_transport = transport
            else:
                self._transport = transport
        if grounded:
            with self._grounded_gate:
                text = transport(req)
        else:
            text = transport(req)
        text = _scrub_secrets(text, self.config)
        if self.mode == MODE_RECORD:
            header = {
                "namespace": namespace,
                "model": req.model,
                "temperature": req.temperature,
                "prompt_sha256": prompt_digest(req.prompt),
                "attachments": [
                    [media, hashlib.sha256(data).hexdigest()] for media, data in req.attachments
                ],
            }
            self.store.save(namespace, key, header, text.encode("utf-8"))
        return text

    def complete(self, req: CompletionRequest) -> str:
        return self._dispatch(req, grounded=False)

    def search_grounded_complete(self, req: CompletionRequest) -> str:
        return self._dispatch(req, grounded=True)


def _record_from_dict(item: dict) -> IndexRecord:
    pub = item.get("publicationDate") or item.get("publication_date")
    pub_date = None
    if pub:
        try:
            parts = [int(x) for x in str(pub).split("-")[:3]]
            pub_date = date(*parts) if len(parts) == 3 else None
        except ValueError:
            pub_date = None
    venue = item.get("venue")
    return IndexRecord(
        entity_id=str(item.get("paperId") or item.get("entity_id") or ""),
        title=str(item.get("title") or ""),
        authors=tuple(
            a.get("name", "") if isinstance(a, dict) else str(a) for a in item.get("authors") or ()
        ),
        year=item.get("year"),
        venue=str(venue) if venue else None,
        abstract=item.get("abstract"),
        citation_count=int(item.get("citationCount") or item.get("citation_count") or 0),
        publication_date=pub_date,
    )


def _record_to_dict(record: IndexRecord) -> dict:
    return {
        "entity_id": record.entity_id,
        "title": record.title,
        "authors": list(record.authors),
        "year": record.year,
        "venue": record.venue,
        "abstract": record.abstract,
        "citation_count": record.citation_count,
        "publication_date": record.publication_date.isoformat() if record.publication_date else None,
    }


class IndexClient:
    """Title search against the scholarly index, serialized by the limiter.

    The limiter guards the network transport only; replay reads are local and
    unthrottled.
    """

    def __init__(
        self,
        config: ProviderConfig,
        *,
        store: ReplayStore | None = None,
        transport: Callable[[str], list[IndexRecord]] | None = None,
        limiter: RateLimiter | None = None,
        ledger: CallLedger | None = None,
        top_k: int = INDEX_TOP_K,
    ):
        self.config = config
        self.mode = config.mode
        if self.mode in (MODE_RECORD, MODE_REPLAY) and store is None:
            if not config.fixture_dir:
                raise ValueError(f"mode {self.mode} requires a fixture dir")
            store = ReplayStore(config.fixture_dir)
        self.store = store
        self._transport = transport
        self.limiter = limiter or RateLimiter()
        self.ledger = ledger or CallLedger()
        self.top_k = top_k

    def _key(self, title: str) -> str:
        return hashlib.sha256(f"index:{title}:{self.top_k}".encode("utf-8")).hexdigest()

    def _http_transport(self) -> Callable[[str], list[IndexRecord]]:
        import requests

        fields = "title,abstract,year,venue,authors,citationCount,publicationDate,paperId"

        def transport(title: str) -> list[IndexRecord]:
            def attempt() -> list[IndexRecord]:
                response = requests.get(
                    f"{self.config.index_base_url}/paper/search",
                    params={"query": title, "limit": self.top_k, "fields": fields},
                    headers={"x-api-key": self.config.index_api_key}
                    if self.config.index_api_key
                    else {},
                    timeout=30,
                )
                if response.status_code in (401, 403):
                    raise ProviderFailure("auth", f"HTTP {response.status_code}")
                if response.status_code >= 400:
                    raise ProviderFailure("transient-exhausted", f"HTTP {response.status_code}")
                data = response.json().get("data") or []
                return [_record_from_dict(item) for item in data]

            return _retrying(attempt)

        return transport

    def search(self, title: str) -> list[IndexRecord]:
        if not title.strip():
            raise ValueError("title must be non-empty")
        self.ledger.record("index-search")
        key = self._key(title)
        if self.mode == MODE_REPLAY:
            body = self.store.load("index", key)
            if body is None:
                raise IndexLookupError(f"no recorded index fixture for query {title!r}")
            return [_record_from_dict(item) for item in json.loads(body)]
        transport = self._transport or self._http_transport()
        self.limiter.acquire()
        try:
            records = transport(title)
        except ProviderFailure as exc:
            raise IndexLookupError(str(exc)) from exc
        if self.mode == MODE_RECORD:
            body = json.dumps([_record_to_dict(r) for r in records], sort_keys=True).encode("utf-8")
            self.store.save("index", key, {"namespace": "index", "query": title}, body)
        return records
