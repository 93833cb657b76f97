from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from ..errors import BackendUnavailable, FixtureMissing
from ..retry import check_status, raise_for_transport


class ChatBackend(Protocol):
    id: str

    def complete(self, request) -> str:
        """Return the completion text or raise TransientBackendError/BackendUnavailable."""
        ...


def fixture_key(rendered_prompt: str) -> str:
    return hashlib.sha256(rendered_prompt.encode("utf-8")).hexdigest()


class FixtureBackend:
    """Canned responses keyed by the SHA-256 of the rendered prompt."""

    def __init__(self, responses: Mapping[str, str], id: str = "fixture") -> None:
        self.responses = dict(responses)
        self.id = id

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "FixtureBackend":
        responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    responses[row["key"]] = row["response"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad fixture line: {exc}") from exc
        return cls(responses, id=f"fixture:{Path(path).name}")

    def complete(self, request) -> str:
        key = fixture_key(request.rendered_prompt)
        try:
            return self.responses[key]
        except KeyError:
            raise FixtureMissing(
                f"no fixture for {request.template_id} prompt {key[:12]}"
            ) from None


class CallableBackend:
    """Adapts a plain ``request -> text`` function; handy for scripted tests."""

    def __init__(self, fn: Callable[..., str], id: str = "callable") -> None:
        self.fn = fn
        self.id = id

    def complete(self, request) -> str:
        return self.fn(request)


class RecordingBackend:
    """Passes calls through and appends every answer to a fixture file."""

    def __init__(self, inner: ChatBackend, path: str | os.PathLike) -> None:
        self.inner = inner
        self.id = inner.id
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self.path.exists():
            self._seen = set(FixtureBackend.from_file(self.path).responses)

    def complete(self, request) -> str:
        text = self.inner.complete(request)
        key = fixture_key(request.rendered_prompt)
        with self._lock:
            if key not in self._seen:
                self._seen.add(key)
                row = {
                    "key": key,
                    "template_id": request.template_id,
                    "prompt": request.rendered_prompt,
                    "response": text,
                }
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return text


class RemoteChatBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    ``model_overrides`` maps template ids to alternative model names, which is
    how fine-tuned refactoring/discriminator models are plugged in.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        model_overrides: Mapping[str, str] | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.model_overrides = dict(model_overrides or {})
        self.id = f"remote:{model}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteChatBackend":
        base_url = os.environ.get("RAPO_LLM_BASE_URL", "").strip()
        if not base_url:
            raise BackendUnavailable("RAPO_LLM_BASE_URL is not set")
        overrides = {}
        if os.environ.get("RAPO_REFACTOR_MODEL"):
            overrides["refactor"] = os.environ["RAPO_REFACTOR_MODEL"]
        if os.environ.get("RAPO_DISCRIMINATOR_MODEL"):
            overrides["select"] = os.environ["RAPO_DISCRIMINATOR_MODEL"]
        return cls(
            base_url=base_url,
            model=os.environ.get("RAPO_LLM_MODEL", "gpt-4"),
            api_key=os.environ.get("RAPO_LLM_API_KEY", ""),
            model_overrides=overrides,
            **kwargs,
        )

    def complete(self, request) -> str:
        payload = {
            "model": self.model_overrides.get(request.template_id, self.model),
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        with raise_for_transport():
            resp = self._client.post(f"{self.base_url}/chat/completions", json=payload)
        check_status(resp)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed chat response: {exc}") from exc
        return content or ""
