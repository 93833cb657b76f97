from __future__ import annotations

import pytest

from helpers import EXTRACTIONS, scripted_backend
from rapo.embedding import LocalHashEmbedder
from rapo.graph import build_graph
from rapo.llm import Gateway, llm_extractor


@pytest.fixture
def embedder() -> LocalHashEmbedder:
    return LocalHashEmbedder()


@pytest.fixture
def gateway() -> Gateway:
    """Gateway over the scripted fake LLM, with retries that never sleep."""
    return Gateway(scripted_backend(), sleep=lambda s: None)


@pytest.fixture
def corpus() -> list[str]:
    return list(EXTRACTIONS)


@pytest.fixture
def graph(corpus, gateway, embedder):
    return build_graph(corpus, llm_extractor(gateway), embedder)
