"""The single path every LLM call takes: render, call, retry, validate, log."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from ..errors import BackendUnavailable, ResponseRejected, UnknownTemplate
from ..retry import BACKOFF_BASE_S, call_with_retry
from .backends import ChatBackend
from .templates import TEMPLATE_IDS, TemplateRegistry

logger = logging.getLogger(__name__)

Validator = Callable[[str], str]


@dataclass(frozen=True)
class LlmRequest:
    template_id: str
    rendered_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 256
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.template_id not in TEMPLATE_IDS:
            raise UnknownTemplate(self.template_id)
        if not self.rendered_prompt:
            raise ValueError("rendered_prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    backend_id: str
    latency_ms: int
    attempt: int


class Gateway:
    """Shareable front door to one chat backend.

    In-flight calls are capped by ``concurrency``; transcript writes are
    serialized. ``clock`` feeds transcript timestamps and latencies, so a
    frozen clock plus a fixture backend yields byte-identical transcripts.
    """

    def __init__(
        self,
        backend: ChatBackend,
        templates: TemplateRegistry | None = None,
        max_attempts: int = 3,
        concurrency: int = 8,
        transcript_path: str | os.PathLike | None = None,
        clock: Callable[[], float] = time.time,
        sleep: Callable[[float], None] | None = None,
        backoff_base: float = BACKOFF_BASE_S,
    ) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.backend = backend
        self.templates = templates or TemplateRegistry()
        self.max_attempts = max_attempts
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self._slots = threading.BoundedSemaphore(concurrency)
        self._transcript_lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep
        self._backoff_base = backoff_base

    def request(
        self, template_id: str, bindings: Mapping[str, str], metadata: Mapping[str, str] | None = None
    ) -> LlmRequest:
        template = self.templates.get(template_id)
        return LlmRequest(
            template_id=template_id,
            rendered_prompt=template.render(bindings),
            temperature=template.temperature,
            max_output_tokens=template.max_output_tokens,
            metadata=dict(metadata or {}),
        )

    def complete(self, request: LlmRequest) -> LlmResponse:
        start = self._clock()
        try:
            with self._slots:
                text, attempt = call_with_retry(
                    lambda: self.backend.complete(request),
                    self.max_attempts,
                    base_delay=self._backoff_base,
                    sleep=self._sleep,
                )
        except BackendUnavailable as exc:
            self._log(request, start, error=str(exc))
            raise
        resp = LlmResponse(
            text=text,
            backend_id=self.backend.id,
            latency_ms=max(0, int(round((self._clock() - start) * 1000))),
            attempt=attempt,
        )
        self._log(request, start, response=resp)
        return resp

    def ask(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        validate: Validator | None = None,
        reasks: int = 1,
        metadata: Mapping[str, str] | None = None,
    ) -> str:
        """Render, complete and validate, re-asking up to ``reasks`` times.

        ``validate`` returns the cleaned text or raises ValueError. After the
        last rejection a ResponseRejected is raised.
        """
        req = self.request(template_id, bindings, metadata)
        last = None
        reason = ""
        for _ in range(reasks + 1):
            text = self.complete(req).text
            last = text
            if validate is None:
                return text
            try:
                return validate(text)
            except ValueError as exc:
                reason = str(exc)
                logger.info("%s response rejected: %s", template_id, reason)
        raise ResponseRejected(template_id, reason, last)

    def _log(self, request: LlmRequest, start: float, response: LlmResponse | None = None, error: str | None = None) -> None:
        if self.transcript_path is None:
            return
        row: dict = {
            "ts": start,
            "template_id": request.template_id,
            "prompt": request.rendered_prompt,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
            "metadata": dict(request.metadata),
        }
        if response is not None:
            row.update(
                response=response.text,
                backend=response.backend_id,
                attempt=response.attempt,
                latency_ms=response.latency_ms,
            )
        else:
            row["error"] = error
        line = json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n"
        with self._transcript_lock:
            with self.transcript_path.open("a", encoding="utf-8") as fh:
                fh.write(line)
