"""LLM provider clients shared by extraction and answer generation."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, TypeVar

import httpx

T = TypeVar("T")


class ProviderError(Exception):
    """A provider call failed.

    ``retryable`` marks transport-level or server-side failures; ``attempts``
    is filled in by :func:`call_with_retries` once retries are exhausted.
    """

    def __init__(self, message: str, *, retryable: bool = True, attempts: int = 1) -> None:
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


@dataclass(frozen=True)
class Completion:
    text: str
    model: str
    latency_s: float


class LLMProvider(Protocol):
    model_id: str

    def complete(self, prompt: str, max_output_units: int | None = None, system: str | None = None) -> Completion: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def call_with_retries(fn: Callable[[], T], retries: int, backoff_s: float = 0.0) -> tuple[T, int]:
    """Call ``fn`` up to ``retries + 1`` times. Returns ``(result, attempts)``."""
    attempt = 0
    while True:
        attempt += 1
        try:
            return fn(), attempt
        except ProviderError as exc:
            if not exc.retryable or attempt > retries:
                exc.attempts = attempt
                raise
            if backoff_s:
                time.sleep(backoff_s * 2 ** (attempt - 1))


class MockLLM:
    """Deterministic provider for tests and offline runs.

    Responses are looked up by the SHA-256 of the full prompt in ``fixtures``;
    ``responder`` (if given) handles misses, then ``default``. ``fail_when``
    injects failures: a predicate on the prompt that makes the call raise.
    """

    model_id = "mock-llm"

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        default: str | None = "",
        responder: Callable[[str], str] | None = None,
        fail_when: Callable[[str], bool] | None = None,
    ) -> None:
        self.fixtures = dict(fixtures or {})
        self.default = default
        self.responder = responder
        self.fail_when = fail_when
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path, default: str | None = "") -> "MockLLM":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(fixtures={str(k): str(v) for k, v in data.items()}, default=default)

    def complete(self, prompt: str, max_output_units: int | None = None, system: str | None = None) -> Completion:
        with self._lock:
            self.calls += 1
        if self.fail_when is not None and self.fail_when(prompt):
            raise ProviderError("injected failure")
        key = prompt_hash(prompt if system is None else f"{system}\n{prompt}")
        if key in self.fixtures:
            text = self.fixtures[key]
        elif self.responder is not None:
            text = self.responder(prompt)
        elif self.default is not None:
            text = self.default
        else:
            raise ProviderError(f"no fixture for prompt {key[:12]}", retryable=False)
        return Completion(text, self.model_id, 0.0)


class OpenAIChatLLM:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    One HTTP attempt per call; retry policy belongs to the caller. The
    underlying ``httpx.Client`` is thread-safe, so one instance can serve
    concurrent requests.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout_s: float = 60.0,
        temperature: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model_id = model
        self.temperature = temperature
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout_s, transport=transport)

    def complete(self, prompt: str, max_output_units: int | None = None, system: str | None = None) -> Completion:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        body: dict = {"model": self.model_id, "messages": messages, "temperature": self.temperature}
        if max_output_units is not None:
            body["max_tokens"] = max_output_units
        started = time.perf_counter()
        try:
            resp = self._client.post("/chat/completions", json=body)
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider rejected request: HTTP {resp.status_code}: {resp.text[:200]}", retryable=False)
        try:
            text = resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}", retryable=False) from exc
        return Completion(text, self.model_id, time.perf_counter() - started)

    def close(self) -> None:
        self._client.close()
