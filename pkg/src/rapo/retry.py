from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from typing import Callable, TypeVar

import httpx

from .errors import BackendUnavailable, TransientBackendError

logger = logging.getLogger(__name__)

T = TypeVar("T")

BACKOFF_BASE_S = 0.5


def call_with_retry(
    fn: Callable[[], T],
    max_attempts: int = 3,
    base_delay: float = BACKOFF_BASE_S,
    sleep: Callable[[float], None] | None = None,
) -> tuple[T, int]:
    """Run ``fn`` retrying on TransientBackendError with exponential backoff.

    Returns ``(result, attempt)`` where attempt is 1-based. Raises
    BackendUnavailable once ``max_attempts`` transient failures have occurred.
    """
    sleep = time.sleep if sleep is None else sleep
    last: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            return fn(), attempt
        except TransientBackendError as exc:
            last = exc
            logger.warning("attempt %d/%d failed: %s", attempt, max_attempts, exc)
            if attempt < max_attempts:
                sleep(base_delay * 2 ** (attempt - 1))
    raise BackendUnavailable(f"gave up after {max_attempts} attempts: {last}")


@contextmanager
def raise_for_transport():
    try:
        yield
    except (httpx.TransportError, httpx.TimeoutException) as exc:
        raise TransientBackendError(repr(exc)) from exc


def check_status(resp: httpx.Response) -> None:
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    if resp.status_code >= 400:
        raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
