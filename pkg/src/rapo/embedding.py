"""Sentence embedding backends.

Every backend exposes ``id``, ``dim`` and ``embed(text) -> np.ndarray`` returning
a float64 unit vector. The graph header records ``id``/``dim`` so that a graph is
only ever queried with the backend that built it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import BackendUnavailable, DimensionMismatch
from .retry import call_with_retry, check_status, raise_for_transport

logger = logging.getLogger(__name__)

LOCAL_DIM = 384
LOCAL_BACKEND_ID = "local-hash-384/v1"
_LOCAL_KEY = b"rapo-local-embed"
_TOKEN = re.compile(r"[^\W_]+")

DEFAULT_REMOTE_MODEL = "all-MiniLM-L6-v2"


@runtime_checkable
class EmbeddingBackend(Protocol):
    id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _token_slot(token: str) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, key=_LOCAL_KEY).digest()
    bucket = int.from_bytes(digest[:8], "little") % LOCAL_DIM
    sign = -1.0 if digest[8] & 1 else 1.0
    return bucket, sign


def local_embed(text: str) -> np.ndarray:
    """Signed feature hashing of alphanumeric tokens into 384 buckets.

    Bucket comes from the first 8 bytes of a keyed BLAKE2b digest of the token
    (little-endian, mod 384); the sign from the lowest bit of byte 8. Texts with
    no tokens map to the basis vector e_0.
    """
    vec = np.zeros(LOCAL_DIM, dtype=np.float64)
    for token in tokenize(text):
        bucket, sign = _token_slot(token)
        vec[bucket] += sign
    norm = float(np.sqrt(np.dot(vec, vec)))
    if norm == 0.0:
        vec[:] = 0.0
        vec[0] = 1.0
        return vec
    return vec / norm


class LocalHashEmbedder:
    """Offline deterministic stand-in for a sentence encoder."""

    id = LOCAL_BACKEND_ID
    dim = LOCAL_DIM

    def embed(self, text: str) -> np.ndarray:
        return local_embed(text)


def unit(values, dim: int | None = None) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if dim is not None and vec.shape != (dim,):
        raise DimensionMismatch(f"expected dimension {dim}, got {vec.shape}")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise BackendUnavailable("embedding endpoint returned a zero vector")
    return vec / norm


class RemoteEmbedder:
    """OpenAI-compatible ``/embeddings`` client.

    Configured from ``RAPO_EMBED_BASE_URL``, ``RAPO_EMBED_API_KEY``,
    ``RAPO_EMBED_MODEL`` and ``RAPO_EMBED_DIM`` when not passed explicitly.
    """

    def __init__(
        self,
        base_url: str,
        model: str = DEFAULT_REMOTE_MODEL,
        dim: int = 384,
        api_key: str = "",
        timeout: float = 30.0,
        max_attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
        sleep=None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.id = f"remote:{model}"
        self.max_attempts = max_attempts
        self._sleep = sleep
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteEmbedder":
        base_url = os.environ.get("RAPO_EMBED_BASE_URL", "").strip()
        if not base_url:
            raise BackendUnavailable("RAPO_EMBED_BASE_URL is not set")
        return cls(
            base_url=base_url,
            model=os.environ.get("RAPO_EMBED_MODEL", DEFAULT_REMOTE_MODEL),
            dim=int(os.environ.get("RAPO_EMBED_DIM", "384")),
            api_key=os.environ.get("RAPO_EMBED_API_KEY", ""),
            **kwargs,
        )

    def _request(self, text: str) -> np.ndarray:
        with raise_for_transport():
            resp = self._client.post(
                f"{self.base_url}/embeddings", json={"model": self.model, "input": [text]}
            )
        check_status(resp)
        try:
            values = resp.json()["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed embedding response: {exc}") from exc
        return unit(values, self.dim)

    def embed(self, text: str) -> np.ndarray:
        vec, _ = call_with_retry(lambda: self._request(text), self.max_attempts, sleep=self._sleep)
        return vec


class CachedEmbedder:
    """Wraps a backend with a persistent append-only text -> vector cache file."""

    def __init__(self, inner: EmbeddingBackend, path: str | os.PathLike) -> None:
        self.inner = inner
        self.id = inner.id
        self.dim = inner.dim
        self.path = Path(path)
        self._lock = threading.Lock()
        self._cache: dict[str, np.ndarray] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    if row.get("backend") == self.id:
                        self._cache[row["text"]] = np.asarray(row["embedding"], dtype=np.float64)

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit.copy()
        vec = self.inner.embed(text)
        with self._lock:
            if text not in self._cache:
                self._cache[text] = vec
                with self.path.open("a", encoding="utf-8") as fh:
                    row = {"backend": self.id, "text": text, "embedding": [float(v) for v in vec]}
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return vec.copy()

    def __len__(self) -> int:
        return len(self._cache)
