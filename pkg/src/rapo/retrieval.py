"""Exact top-k retrieval over scene and modifier embeddings.

Scores are dot products of unit vectors (i.e. cosine similarity). Ranking is
descending score with ascending node id breaking ties. A vectorised pass narrows
the field, then the survivors are rescored with ``math.fsum`` so the ordering
is the correctly-rounded one and does not depend on BLAS summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import EmbeddingBackend
from .errors import DimensionMismatch, UnknownSceneId, ZeroVector
from .graph import RelationGraph

# Upper bound on |numpy dot - exact dot| for unit vectors; the true bound for
# d <= 4096 is ~1e-12, this leaves plenty of room.
_SCORE_SLACK = 1e-9


@dataclass(frozen=True)
class ScoredItem:
    node_id: str
    score: float
    text: str

    def as_dict(self) -> dict:
        return {"id": self.node_id, "text": self.text, "score": self.score}


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"{va.shape} vs {vb.shape}")
    na = math.sqrt(math.fsum(x * x for x in va.tolist()))
    nb = math.sqrt(math.fsum(x * x for x in vb.tolist()))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    dot = math.fsum(x * y for x, y in zip(va.tolist(), vb.tolist()))
    return max(-1.0, min(1.0, dot / (na * nb)))


def exact_dot(row: np.ndarray, query: np.ndarray) -> float:
    return math.fsum((row * query).tolist())


def _top_k(
    ids: Sequence[str],
    texts: Sequence[str],
    matrix: np.ndarray,
    query: np.ndarray,
    k: int,
    dedup_text: bool = False,
) -> list[ScoredItem]:
    n = len(ids)
    if k <= 0 or n == 0:
        return []
    approx = (matrix * query).sum(axis=1)
    if dedup_text:
        best: dict[str, float] = {}
        for text, s in zip(texts, approx.tolist()):
            if s > best.get(text, -math.inf):
                best[text] = s
        heads = np.fromiter(best.values(), dtype=np.float64, count=len(best))
    else:
        heads = approx
    if k < len(heads):
        kth = float(np.partition(heads, len(heads) - k)[len(heads) - k])
        keep = np.flatnonzero(approx >= kth - 4 * _SCORE_SLACK)
    else:
        keep = np.arange(n)

    scored = [
        ScoredItem(ids[i], exact_dot(matrix[i], query), texts[i]) for i in keep.tolist()
    ]
    scored.sort(key=lambda it: (-it.score, it.node_id))
    if dedup_text:
        seen: set[str] = set()
        unique = []
        for item in scored:
            if item.text not in seen:
                seen.add(item.text)
                unique.append(item)
        scored = unique
    return [
        ScoredItem(it.node_id, max(-1.0, min(1.0, it.score)), it.text) for it in scored[:k]
    ]


def retrieve_scenes(
    graph: RelationGraph, query: str, k: int, embedder: EmbeddingBackend
) -> list[ScoredItem]:
    graph.check_backend(embedder)
    q = np.asarray(embedder.embed(query), dtype=np.float64)
    ids, matrix = graph.scene_matrix()
    texts = [graph.scenes[i].text for i in ids]
    return _top_k(ids, texts, matrix, q, k)


def retrieve_modifiers(
    graph: RelationGraph,
    scene_hits: Sequence[ScoredItem],
    query: str,
    k: int,
    embedder: EmbeddingBackend,
) -> list[ScoredItem]:
    """Top-k modifiers attached to the hit scenes, one entry per distinct text."""
    graph.check_backend(embedder)
    pool: list[str] = []
    for hit in scene_hits:
        scene = graph.scenes.get(hit.node_id)
        if scene is None:
            raise UnknownSceneId(hit.node_id)
        pool.extend(scene.modifier_ids)
    if not pool or k <= 0:
        return []
    pool = list(dict.fromkeys(pool))
    index, full = graph.modifier_matrix()
    matrix = full[[index[mid] for mid in pool]]
    texts = [graph.modifiers[mid].text for mid in pool]
    q = np.asarray(embedder.embed(query), dtype=np.float64)
    return _top_k(pool, texts, matrix, q, k, dedup_text=True)
