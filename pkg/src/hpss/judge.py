"""OpenAI-compatible judge client with a content-addressed response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from .errors import BackendError, ConfigError, ExtractionError
from .metrics import extract_preference, extract_rating

log = logging.getLogger(__name__)

API_BASE_ENV = "HPSS_API_BASE"
API_KEY_ENV = "HPSS_API_KEY"

RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class Decode:
    mode: str = "greedy"
    n: int = 1

    def __post_init__(self):
        if self.mode not in ("greedy", "self_consistency"):
            raise ConfigError(f"unknown decode mode {self.mode!r}")
        if self.mode == "greedy" and self.n != 1:
            raise ConfigError("greedy decoding produces one completion")
        if self.n < 1:
            raise ConfigError("n must be >= 1")

    @property
    def temperature(self) -> float:
        return 0.0 if self.mode == "greedy" else 1.0

    @classmethod
    def parse(cls, text: str) -> "Decode":
        """``greedy`` or ``sc:<n>``."""
        if text == "greedy":
            return cls()
        if text.startswith("sc:"):
            return cls("self_consistency", int(text[3:]))
        raise ConfigError(f"decode must be 'greedy' or 'sc:<n>', got {text!r}")

    def label(self) -> str:
        return "greedy" if self.mode == "greedy" else f"sc:{self.n}"


GREEDY = Decode()


class ChatClient:
    """Minimal chat-completions client with capped exponential backoff."""

    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        backoff_cap: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        base_url = base_url or os.environ.get(API_BASE_ENV)
        if not base_url:
            raise ConfigError(f"judge endpoint not configured; set {API_BASE_ENV}")
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._http = httpx.Client(base_url=base_url.rstrip("/") + "/", headers=headers, timeout=timeout, transport=transport)
        self._lock = threading.Lock()
        self.request_count = 0

    def close(self):
        self._http.close()

    def complete(self, prompt: str, temperature: float, n: int = 1) -> list[str]:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        }
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(min(self.backoff_cap, self.backoff * 2 ** (attempt - 1)))
            with self._lock:
                self.request_count += 1
            try:
                resp = self._http.post("chat/completions", json=payload)
            except httpx.TransportError as e:
                last = e
                log.warning("judge request failed (%s), attempt %d", e, attempt + 1)
                continue
            if resp.status_code in RETRY_STATUS:
                last = BackendError(f"HTTP {resp.status_code}")
                log.warning("judge returned HTTP %d, attempt %d", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"judge returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return [c["message"]["content"] or "" for c in resp.json()["choices"]]
            except (KeyError, TypeError, ValueError) as e:
                raise BackendError(f"malformed chat-completions response: {e!r}") from None
        raise BackendError(f"judge unreachable after {self.max_retries + 1} attempts: {last}")


class ResponseCache:
    """One JSON file per request hash; writes are atomic renames."""

    def __init__(self, root: str | Path | None):
        self.root = None if root is None else Path(root)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(prompt: str, model: str, decode: Decode) -> str:
        blob = json.dumps({"prompt": prompt, "model": model, "decode": decode.label()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def get(self, key: str) -> list[str] | None:
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        if self.root is None:
            return None
        path = self.root / f"{key}.json"
        if not path.exists():
            return None
        texts = json.loads(path.read_text())["responses"]
        with self._lock:
            self._mem[key] = texts
        return texts

    def put(self, key: str, prompt: str, texts: list[str]) -> None:
        with self._lock:
            self._mem[key] = texts
        if self.root is None:
            return
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump({"prompt": prompt, "responses": texts}, fh)
        os.replace(tmp, self.root / f"{key}.json")


class Judge:
    def __init__(self, client: ChatClient, cache: ResponseCache | None = None):
        self.client = client
        self.cache = cache if cache is not None else ResponseCache(None)

    def generate(self, prompt: str, decode: Decode = GREEDY) -> tuple[list[str], str]:
        """Completions for ``prompt`` and their cache key; cache hits make no request."""
        key = ResponseCache.key(prompt, self.client.model, decode)
        texts = self.cache.get(key)
        if texts is None:
            texts = self.client.complete(prompt, decode.temperature, decode.n)
            self.cache.put(key, prompt, texts)
        return texts, key


@dataclass
class Judgment:
    score: float
    responses: list[str]
    failures: int
    cache_key: str


def score_responses(texts: list[str], scale_max: int | None) -> tuple[float, int]:
    """Mean of the successfully extracted ratings and the failure count."""
    values, failures = [], 0
    for t in texts:
        try:
            values.append(extract_preference(t) if scale_max is None else extract_rating(t, scale_max))
        except ExtractionError:
            failures += 1
    if not values:
        raise ExtractionError(f"no rating in any of {len(texts)} completions")
    if failures:
        log.info("rating extraction failed for %d of %d completions", failures, len(texts))
    return sum(values) / len(values), failures


def judge_call(judge: Judge, prompt: str, decode: Decode = GREEDY, scale_max: int | None = None) -> Judgment:
    """Ask the judge and extract a rating (or a 0/1 verdict when ``scale_max`` is None)."""
    texts, key = judge.generate(prompt, decode)
    score, failures = score_responses(texts, scale_max)
    return Judgment(score, texts, failures, key)
