"""Completion clients: fixture replay, chat-completion over HTTP, and a null client."""

from __future__ import annotations

import hashlib
import os
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol

import httpx

ENV_ENDPOINT = "MAPVERIFY_LLM_ENDPOINT"
ENV_MODEL = "MAPVERIFY_LLM_MODEL"
ENV_API_KEY = "MAPVERIFY_LLM_API_KEY"


class CompletionError(RuntimeError):
    pass


class CompletionClient(Protocol):
    def complete(self, prompt: str, request_id: str) -> str: ...


def request_id_for(prompt: str) -> str:
    return "req-" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


def fixture_dir() -> Path:
    return Path(str(resources.files("mapverify").joinpath("synthesis", "fixtures")))


class ReplayClient:
    """Returns the stored response for a request id; the prompt is not consulted."""

    def __init__(self, fixtures: str | Path | Mapping[str, str] | None = None):
        if fixtures is None:
            fixtures = fixture_dir()
        self._table = dict(fixtures) if isinstance(fixtures, Mapping) else None
        self._dir = None if isinstance(fixtures, Mapping) else Path(fixtures)

    def complete(self, prompt: str, request_id: str) -> str:
        if self._table is not None:
            if request_id not in self._table:
                raise CompletionError(f"no replay fixture for request {request_id!r}")
            return self._table[request_id]
        path = self._dir / f"{request_id}.txt"
        if not path.is_file():
            raise CompletionError(f"no replay fixture {path}")
        return path.read_text(encoding="utf-8")


class NullClient:
    def complete(self, prompt: str, request_id: str) -> str:
        raise CompletionError("no completion backend configured (use a replay fixture or --live)")


class HttpClient:
    """Chat-completion POST: one user message, temperature 0, no retries."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 120.0, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kwargs) -> HttpClient:
        env = os.environ if env is None else env
        endpoint, model = env.get(ENV_ENDPOINT), env.get(ENV_MODEL)
        if not endpoint or not model:
            raise CompletionError(f"{ENV_ENDPOINT} and {ENV_MODEL} must be set for live completion")
        return cls(endpoint, model, env.get(ENV_API_KEY), **kwargs)

    def payload(self, prompt: str) -> dict:
        return {"model": self.model, "messages": [{"role": "user", "content": prompt}], "temperature": 0}

    def complete(self, prompt: str, request_id: str) -> str:
        headers = {"Content-Type": "application/json", "X-Request-Id": request_id}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.endpoint, json=self.payload(prompt), headers=headers)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise CompletionError(f"completion request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise CompletionError(f"unexpected completion response shape: {exc}") from exc
