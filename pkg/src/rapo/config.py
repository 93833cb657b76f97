from __future__ import annotations

import os
from dataclasses import dataclass

from .embedding import LOCAL_BACKEND_ID, CachedEmbedder, EmbeddingBackend, LocalHashEmbedder, RemoteEmbedder
from .errors import BackendUnavailable
from .llm.backends import FixtureBackend, RemoteChatBackend
from .llm.gateway import Gateway
from .llm.templates import DEFAULT_MERGE_EXAMPLES, TemplateRegistry, load_merge_examples
from .pipeline import DEFAULT_K_MODIFIERS, DEFAULT_K_SCENES, DEFAULT_MAX_REFACTOR_WORDS


@dataclass
class RunConfig:
    graph_path: str | None = None
    k_scenes: int = DEFAULT_K_SCENES
    k_modifiers: int = DEFAULT_K_MODIFIERS
    fixture_path: str | None = None
    examples_path: str | None = None
    rewrite_instruction_path: str | None = None
    stats_path: str | None = None
    worker_limit: int = 1
    concurrency: int = 8
    transcript: str | None = None
    max_refactor_words: int = DEFAULT_MAX_REFACTOR_WORDS
    embed_cache: str | None = None

    def __post_init__(self) -> None:
        if self.k_scenes < 0 or self.k_modifiers < 0:
            raise ValueError("k values must be >= 0")
        if self.worker_limit < 1:
            raise ValueError("worker limit must be >= 1")

    def gateway(self) -> Gateway:
        """Fixture backend when a fixture file is given, else the env-configured remote."""
        if self.fixture_path:
            backend = FixtureBackend.from_file(self.fixture_path)
        elif os.environ.get("RAPO_LLM_BASE_URL"):
            backend = RemoteChatBackend.from_env()
        else:
            raise BackendUnavailable(
                "no LLM backend: pass --fixtures or set RAPO_LLM_BASE_URL"
            )
        templates = TemplateRegistry()
        if self.rewrite_instruction_path:
            templates.override_from_file("rewrite", self.rewrite_instruction_path)
        return Gateway(
            backend,
            templates=templates,
            concurrency=self.concurrency,
            transcript_path=self.transcript,
        )

    def merge_examples(self):
        if self.examples_path:
            return load_merge_examples(self.examples_path)
        return DEFAULT_MERGE_EXAMPLES


def embedder_for(backend_id: str, cache_path: str | None = None) -> EmbeddingBackend:
    """The embedding backend matching a graph header id."""
    if backend_id == LOCAL_BACKEND_ID:
        return LocalHashEmbedder()
    embedder: EmbeddingBackend = RemoteEmbedder.from_env()
    if cache_path:
        embedder = CachedEmbedder(embedder, cache_path)
    return embedder
