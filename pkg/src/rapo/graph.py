"""Scene/modifier relation graph.

Scenes are core nodes keyed by their normalized text; each scene owns subject,
action and atmosphere modifier sub-nodes. Identical modifier strings under two
different scenes are two different nodes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .embedding import EmbeddingBackend
from .errors import (
    CorruptRecord,
    EmbeddingBackendMismatch,
    FixtureMissing,
    FormatVersionMismatch,
    GraphIntegrityError,
    ParseError,
    ResponseRejected,
)
from .text import normalize_text

logger = logging.getLogger(__name__)

FORMAT_VERSION = "rapo-graph/1"
CATEGORIES = ("subject", "action", "atmosphere")
NORM_TOL = 1e-6


def _dedup(items: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for item in items:
        norm = normalize_text(item)
        if norm:
            seen.setdefault(norm, None)
    return list(seen)


@dataclass(frozen=True)
class ExtractionRecord:
    source_prompt: str
    scene: str
    subjects: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    atmospheres: tuple[str, ...] = ()

    @classmethod
    def create(
        cls,
        scene: str,
        subjects: Iterable[str] = (),
        actions: Iterable[str] = (),
        atmospheres: Iterable[str] = (),
        source_prompt: str = "",
    ) -> "ExtractionRecord":
        """Build a record with every field normalized and empty modifiers dropped."""
        norm_scene = normalize_text(scene)
        if not norm_scene:
            raise ValueError("scene is empty after normalization")
        return cls(
            source_prompt=source_prompt,
            scene=norm_scene,
            subjects=tuple(_dedup(subjects)),
            actions=tuple(_dedup(actions)),
            atmospheres=tuple(_dedup(atmospheres)),
        )

    def modifiers(self) -> Iterator[tuple[str, str]]:
        for category, items in zip(CATEGORIES, (self.subjects, self.actions, self.atmospheres)):
            for text in items:
                yield category, text


@dataclass
class SceneNode:
    id: str
    text: str
    embedding: tuple[float, ...]
    modifier_ids: list[str] = field(default_factory=list)


@dataclass
class ModifierNode:
    id: str
    scene_id: str
    category: str
    text: str
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class UpdateSummary:
    scene_created: bool
    modifiers_added: int


@dataclass
class BuildReport:
    prompts_seen: int = 0
    prompts_filtered: int = 0
    prompts_failed: int = 0
    prompts_ingested: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def scene_id_for(text: str) -> str:
    return hashlib.sha256(f"scene\x1f{text}".encode("utf-8")).hexdigest()[:16]


def modifier_id_for(scene_text: str, category: str, text: str) -> str:
    key = f"modifier\x1f{scene_text}\x1f{category}\x1f{text}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass(eq=False)
class RelationGraph:
    embedding_backend_id: str
    embedding_dim: int
    version: str = FORMAT_VERSION
    scenes: dict[str, SceneNode] = field(default_factory=dict)
    modifiers: dict[str, ModifierNode] = field(default_factory=dict)
    source_prompt_count: int = 0
    report: BuildReport | None = None

    def __post_init__(self) -> None:
        self._by_text = {s.text: s.id for s in self.scenes.values()}
        self._lock = threading.RLock()
        self._cache: dict[str, object] = {}

    @classmethod
    def empty_for(cls, embedder: EmbeddingBackend) -> "RelationGraph":
        return cls(embedding_backend_id=embedder.id, embedding_dim=embedder.dim)

    # structural equality: everything persisted, nothing cached
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelationGraph):
            return NotImplemented
        return (
            self.version == other.version
            and self.embedding_backend_id == other.embedding_backend_id
            and self.embedding_dim == other.embedding_dim
            and self.source_prompt_count == other.source_prompt_count
            and self.scenes == other.scenes
            and self.modifiers == other.modifiers
        )

    @property
    def stats(self) -> dict[str, int]:
        return {
            "scene_count": len(self.scenes),
            "modifier_count": len(self.modifiers),
            "source_prompt_count": self.source_prompt_count,
        }

    def scene_by_text(self, text: str) -> SceneNode | None:
        sid = self._by_text.get(normalize_text(text))
        return None if sid is None else self.scenes[sid]

    def content(self) -> tuple[frozenset[str], frozenset[tuple[str, str, str]]]:
        """Id-free view of the graph: scene texts and (scene, category, text) triples."""
        scenes = frozenset(s.text for s in self.scenes.values())
        mods = frozenset(
            (self.scenes[m.scene_id].text, m.category, m.text) for m in self.modifiers.values()
        )
        return scenes, mods

    def check_backend(self, embedder: EmbeddingBackend) -> None:
        if embedder.id != self.embedding_backend_id or embedder.dim != self.embedding_dim:
            raise EmbeddingBackendMismatch(
                f"graph built with {self.embedding_backend_id!r} (dim {self.embedding_dim}), "
                f"active backend is {embedder.id!r} (dim {embedder.dim})"
            )

    def validate(self) -> None:
        """Raise GraphIntegrityError on any referential or embedding violation."""
        problems = list(_integrity_problems(self))
        if problems:
            raise GraphIntegrityError("; ".join(msg for _, msg in problems))

    # cached dense views used by retrieval

    def scene_matrix(self) -> tuple[list[str], np.ndarray]:
        with self._lock:
            hit = self._cache.get("scenes")
            if hit is None:
                ids = list(self.scenes)
                mat = np.array(
                    [self.scenes[i].embedding for i in ids], dtype=np.float64
                ).reshape(len(ids), self.embedding_dim)
                hit = self._cache["scenes"] = (ids, mat)
            return hit  # type: ignore[return-value]

    def modifier_matrix(self) -> tuple[dict[str, int], np.ndarray]:
        with self._lock:
            hit = self._cache.get("modifiers")
            if hit is None:
                index = {mid: row for row, mid in enumerate(self.modifiers)}
                mat = np.array(
                    [m.embedding for m in self.modifiers.values()], dtype=np.float64
                ).reshape(len(index), self.embedding_dim)
                hit = self._cache["modifiers"] = (index, mat)
            return hit  # type: ignore[return-value]

    def _invalidate(self) -> None:
        self._cache.clear()


def _embed(embedder: EmbeddingBackend, text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in embedder.embed(text))


def add_record(
    graph: RelationGraph, record: ExtractionRecord, embedder: EmbeddingBackend
) -> UpdateSummary:
    """Attach one extraction to the graph, creating its scene node if needed."""
    graph.check_backend(embedder)
    scene_text = normalize_text(record.scene)
    if not scene_text:
        raise ValueError("record has an empty scene")
    with graph._lock:
        created = False
        sid = graph._by_text.get(scene_text)
        if sid is None:
            sid = scene_id_for(scene_text)
            graph.scenes[sid] = SceneNode(sid, scene_text, _embed(embedder, scene_text))
            graph._by_text[scene_text] = sid
            created = True
        scene = graph.scenes[sid]
        added = 0
        for category, raw in record.modifiers():
            text = normalize_text(raw)
            if not text:
                continue
            mid = modifier_id_for(scene_text, category, text)
            if mid in graph.modifiers:
                continue
            graph.modifiers[mid] = ModifierNode(mid, sid, category, text, _embed(embedder, text))
            scene.modifier_ids.append(mid)
            added += 1
        if created or added:
            graph._invalidate()
    return UpdateSummary(scene_created=created, modifiers_added=added)


ExtractionFn = Callable[[str], ExtractionRecord]
CorpusFilter = Callable[[str], bool]

# per-prompt failures; anything else (BackendUnavailable proper) aborts the build
_SKIPPABLE = (ParseError, ResponseRejected, FixtureMissing, ValueError)


def nonempty_filter(prompt: str) -> bool:
    return bool(normalize_text(prompt))


def build_graph(
    corpus: Iterable[str],
    extractor: ExtractionFn,
    embedder: EmbeddingBackend,
    corpus_filter: CorpusFilter = nonempty_filter,
    workers: int = 1,
    limit: int | None = None,
) -> RelationGraph:
    """Left-fold ``add_record`` over successful extractions in corpus order.

    Extraction may run on ``workers`` threads; graph mutation stays on the
    calling thread so the result does not depend on the worker count.
    """
    graph = RelationGraph.empty_for(embedder)
    report = BuildReport()

    def accepted() -> Iterator[str]:
        taken = 0
        for prompt in corpus:
            if limit is not None and taken >= limit:
                return
            report.prompts_seen += 1
            if not corpus_filter(prompt):
                report.prompts_filtered += 1
                continue
            taken += 1
            yield prompt

    def extract(prompt: str) -> ExtractionRecord | None:
        try:
            return extractor(prompt)
        except _SKIPPABLE as exc:
            logger.info("extraction skipped for %r: %s", prompt[:60], exc)
            return None

    def fold(records: Iterable[ExtractionRecord | None]) -> None:
        for record in records:
            if record is None:
                report.prompts_failed += 1
                continue
            add_record(graph, record, embedder)
            report.prompts_ingested += 1

    stream = accepted()
    if workers <= 1:
        fold(extract(p) for p in stream)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            while chunk := list(itertools.islice(stream, workers * 16)):
                fold(pool.map(extract, chunk))

    graph.source_prompt_count = report.prompts_ingested
    graph.report = report
    return graph


# persistence


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def save_graph(graph: RelationGraph, path: str | os.PathLike) -> None:
    header = {
        "type": "header",
        "version": graph.version,
        "embedding_backend": graph.embedding_backend_id,
        "dim": graph.embedding_dim,
        "stats": graph.stats,
    }
    tmp = Path(f"{path}.tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump(header) + "\n")
        for scene in graph.scenes.values():
            fh.write(
                _dump(
                    {
                        "type": "scene",
                        "id": scene.id,
                        "text": scene.text,
                        "modifier_ids": scene.modifier_ids,
                        "embedding": list(scene.embedding),
                    }
                )
                + "\n"
            )
            for mid in scene.modifier_ids:
                mod = graph.modifiers[mid]
                fh.write(
                    _dump(
                        {
                            "type": "modifier",
                            "id": mod.id,
                            "scene_id": mod.scene_id,
                            "category": mod.category,
                            "text": mod.text,
                            "embedding": list(mod.embedding),
                        }
                    )
                    + "\n"
                )
    os.replace(tmp, path)


def _integrity_problems(
    graph: RelationGraph, lines: dict[str, int] | None = None
) -> Iterator[tuple[int, str]]:
    lines = lines or {}
    dim = graph.embedding_dim
    seen_text: set[str] = set()

    def check_vec(node_id: str, vec: tuple[float, ...]) -> Iterator[tuple[int, str]]:
        if len(vec) != dim:
            yield lines.get(node_id, 0), f"{node_id}: embedding length {len(vec)} != {dim}"
        elif abs(float(np.linalg.norm(vec)) - 1.0) > NORM_TOL:
            yield lines.get(node_id, 0), f"{node_id}: embedding is not unit norm"

    for sid, scene in graph.scenes.items():
        if scene.text in seen_text:
            yield lines.get(sid, 0), f"duplicate scene text {scene.text!r}"
        seen_text.add(scene.text)
        yield from check_vec(sid, scene.embedding)
        for mid in scene.modifier_ids:
            mod = graph.modifiers.get(mid)
            if mod is None:
                yield lines.get(sid, 0), f"scene {sid} lists unknown modifier {mid}"
            elif mod.scene_id != sid:
                yield lines.get(sid, 0), f"modifier {mid} does not point back to scene {sid}"
    seen_key: set[tuple[str, str, str]] = set()
    for mid, mod in graph.modifiers.items():
        scene = graph.scenes.get(mod.scene_id)
        if scene is None:
            yield lines.get(mid, 0), f"modifier {mid} has dangling scene_id {mod.scene_id}"
            continue
        if mid not in scene.modifier_ids:
            yield lines.get(mid, 0), f"modifier {mid} is not listed by scene {mod.scene_id}"
        if mod.category not in CATEGORIES:
            yield lines.get(mid, 0), f"modifier {mid} has unknown category {mod.category!r}"
        key = (mod.scene_id, mod.category, mod.text)
        if key in seen_key:
            yield lines.get(mid, 0), f"duplicate modifier {key}"
        seen_key.add(key)
        yield from check_vec(mid, mod.embedding)


def load_graph(path: str | os.PathLike) -> RelationGraph:
    scenes: dict[str, SceneNode] = {}
    modifiers: dict[str, ModifierNode] = {}
    lines: dict[str, int] = {}
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(lineno, f"invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise CorruptRecord(lineno, "record is not an object")
            kind = rec.get("type")
            if header is None:
                if kind != "header":
                    raise CorruptRecord(lineno, "first record must be the header")
                if rec.get("version") != FORMAT_VERSION:
                    raise FormatVersionMismatch(
                        f"unsupported graph version {rec.get('version')!r}, expected {FORMAT_VERSION}"
                    )
                if not isinstance(rec.get("dim"), int) or rec["dim"] <= 0:
                    raise CorruptRecord(lineno, "header dim must be a positive integer")
                header = rec
                continue
            try:
                if kind == "scene":
                    node = SceneNode(
                        id=str(rec["id"]),
                        text=str(rec["text"]),
                        embedding=tuple(float(v) for v in rec["embedding"]),
                        modifier_ids=[str(m) for m in rec["modifier_ids"]],
                    )
                    if node.id in scenes:
                        raise CorruptRecord(lineno, f"duplicate scene id {node.id}")
                    scenes[node.id] = node
                elif kind == "modifier":
                    mod = ModifierNode(
                        id=str(rec["id"]),
                        scene_id=str(rec["scene_id"]),
                        category=str(rec["category"]),
                        text=str(rec["text"]),
                        embedding=tuple(float(v) for v in rec["embedding"]),
                    )
                    if mod.id in modifiers:
                        raise CorruptRecord(lineno, f"duplicate modifier id {mod.id}")
                    modifiers[mod.id] = mod
                else:
                    raise CorruptRecord(lineno, f"unknown record type {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptRecord(lineno, f"malformed {kind} record: {exc}") from exc
            lines[str(rec["id"])] = lineno
    if header is None:
        raise CorruptRecord(1, "missing header")

    graph = RelationGraph(
        embedding_backend_id=str(header.get("embedding_backend", "")),
        embedding_dim=header["dim"],
        version=header["version"],
        scenes=scenes,
        modifiers=modifiers,
        source_prompt_count=int(header.get("stats", {}).get("source_prompt_count", 0)),
    )
    for lineno, message in _integrity_problems(graph, lines):
        raise CorruptRecord(lineno, message)
    stats = header.get("stats")
    if stats and (
        stats.get("scene_count") != len(scenes) or stats.get("modifier_count") != len(modifiers)
    ):
        raise CorruptRecord(1, "header stats disagree with record counts")
    return graph
