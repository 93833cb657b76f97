"""Two-branch prompt optimization.

Branch one retrieves modifiers from the relation graph, folds them into the
prompt one merge call at a time and refactors the result into training-prompt
form. Branch two rewrites the prompt directly. A discriminator call then picks
one of the two candidates.
"""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .analytics import DEFAULT_MEDIAN_WORDS, word_count
from .embedding import EmbeddingBackend
from .errors import (
    BackendUnavailable,
    MergeRejected,
    RefactorRejected,
    ResponseRejected,
    RewriteRejected,
)
from .graph import RelationGraph
from .llm.gateway import Gateway
from .llm.templates import DEFAULT_MERGE_EXAMPLES, MergeExample, format_examples
from .retrieval import ScoredItem, retrieve_modifiers, retrieve_scenes
from .text import squash_whitespace

logger = logging.getLogger(__name__)

DEFAULT_K_SCENES = 3
DEFAULT_K_MODIFIERS = 5
DEFAULT_MAX_REFACTOR_WORDS = 120

STAGES = (
    "input_x_i",
    "augmented_x_m",
    "word_augmented_final",
    "refactored_x_r",
    "rewritten_x_n",
    "selected",
)


@dataclass(frozen=True)
class PromptCandidate:
    text: str
    stage: str
    parent: "PromptCandidate | None" = None
    applied_modifier: str | None = None

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class MergeStep:
    modifier: str
    before: str
    after: str
    status: str = "merged"
    error: str | None = None

    def as_dict(self) -> dict:
        row = {"modifier": self.modifier, "before": self.before, "after": self.after, "status": self.status}
        if self.error:
            row["error"] = self.error
        return row


@dataclass
class OptimizationResult:
    input: str
    x_r: str | None
    x_n: str | None
    chosen: str | None
    chosen_text: str | None
    rationale: str
    word_augmented: str | None = None
    merge_trace: list[MergeStep] = field(default_factory=list)
    scene_hits: list[ScoredItem] = field(default_factory=list)
    modifier_hits: list[ScoredItem] = field(default_factory=list)
    branch_errors: dict[str, str] = field(default_factory=dict)
    warning: str | None = None
    id: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def as_dict(self, include_timings: bool = False) -> dict:
        row = {
            "id": self.id,
            "input": self.input,
            "x_r": self.x_r,
            "x_n": self.x_n,
            "chosen": self.chosen,
            "chosen_text": self.chosen_text,
            "rationale": self.rationale,
            "warning": self.warning,
            "word_augmented": self.word_augmented,
            "merge_trace": [s.as_dict() for s in self.merge_trace],
            "retrieval_trace": {
                "scenes": [h.as_dict() for h in self.scene_hits],
                "modifiers": [h.as_dict() for h in self.modifier_hits],
            },
            "branch_errors": dict(sorted(self.branch_errors.items())),
        }
        if include_timings:
            row["timings"] = self.timings
        return row

    def candidates(self) -> list[PromptCandidate]:
        """Provenance chain of every prompt produced for this input."""
        root = PromptCandidate(self.input, "input_x_i")
        out = [root]
        node = root
        for step in self.merge_trace:
            if step.status == "merged":
                node = PromptCandidate(step.after, "augmented_x_m", node, step.modifier)
                out.append(node)
        refactored = rewritten = None
        if self.word_augmented is not None:
            node = PromptCandidate(self.word_augmented, "word_augmented_final", node)
            out.append(node)
            if self.x_r is not None:
                refactored = PromptCandidate(self.x_r, "refactored_x_r", node)
                out.append(refactored)
        if self.x_n is not None:
            rewritten = PromptCandidate(self.x_n, "rewritten_x_n", root)
            out.append(rewritten)
        picked = {"x_r": refactored, "x_n": rewritten}.get(self.chosen or "")
        if picked is not None:
            out.append(PromptCandidate(picked.text, "selected", picked))
        return out


def _nonempty(text: str) -> str:
    cleaned = squash_whitespace(text)
    if not cleaned:
        raise ValueError("empty output")
    return cleaned


def merge_step(
    gateway: Gateway,
    x_m: str,
    p_m: str,
    examples: Sequence[MergeExample] = DEFAULT_MERGE_EXAMPLES,
) -> str:
    if not x_m.strip() or not p_m.strip():
        raise ValueError("merge_step needs a non-empty prompt and modifier")
    bindings = {"body": x_m, "modifier": p_m, "examples": format_examples(examples)}
    try:
        return gateway.ask("merge", bindings, validate=_nonempty, reasks=0)
    except ResponseRejected as exc:
        raise MergeRejected(f"empty merge for modifier {p_m!r}") from exc


def refactor(gateway: Gateway, w: str, max_words: int = DEFAULT_MAX_REFACTOR_WORDS) -> str:
    if not w.strip():
        raise ValueError("refactor needs a non-empty prompt")

    def validate(text: str) -> str:
        cleaned = _nonempty(text)
        n = word_count(cleaned)
        if n > max_words:
            raise ValueError(f"{n} words exceeds limit of {max_words}")
        return cleaned

    try:
        return gateway.ask("refactor", {"w": w}, validate=validate)
    except ResponseRejected as exc:
        raise RefactorRejected(exc.reason) from exc


def rewrite(gateway: Gateway, x_i: str) -> str:
    if not x_i.strip():
        raise ValueError("rewrite needs a non-empty prompt")
    try:
        return gateway.ask("rewrite", {"x_i": x_i}, validate=_nonempty)
    except (ResponseRejected, BackendUnavailable) as exc:
        raise RewriteRejected(str(exc)) from exc


_LABEL = re.compile(r"^\W*(?:x[_\s]?)?([rn])\b", re.IGNORECASE)


def parse_label(text: str) -> str | None:
    m = _LABEL.match(text.strip())
    return m.group(1).lower() if m else None


def length_proximity_label(x_r: str, x_n: str, median_words: float = DEFAULT_MEDIAN_WORDS) -> str:
    """``r`` unless x_n's word count is strictly closer to the median."""
    dr = abs(word_count(x_r) - median_words)
    dn = abs(word_count(x_n) - median_words)
    return "n" if dn < dr else "r"


def select(
    gateway: Gateway,
    x_i: str,
    x_r: str,
    x_n: str,
    median_words: float = DEFAULT_MEDIAN_WORDS,
) -> tuple[str, str]:
    """Pick ``"r"`` or ``"n"``; never raises on a bad or missing discriminator answer."""
    if x_r == x_n:
        return "r", "candidates identical"

    def validate(text: str) -> str:
        label = parse_label(text)
        if label is None:
            raise ValueError(f"unparseable label {text[:40]!r}")
        return label

    try:
        return gateway.ask("select", {"x_i": x_i, "x_r": x_r, "x_n": x_n}, validate=validate), "discriminator"
    except (ResponseRejected, BackendUnavailable) as exc:
        logger.info("discriminator unavailable, using length fallback: %s", exc)
    label = length_proximity_label(x_r, x_n, median_words)
    return label, f"length fallback (median {median_words:g} words)"


@dataclass
class Optimizer:
    graph: RelationGraph
    embedder: EmbeddingBackend
    gateway: Gateway
    k_scenes: int = DEFAULT_K_SCENES
    k_modifiers: int = DEFAULT_K_MODIFIERS
    max_refactor_words: int = DEFAULT_MAX_REFACTOR_WORDS
    median_words: float = DEFAULT_MEDIAN_WORDS
    merge_examples: Sequence[MergeExample] = DEFAULT_MERGE_EXAMPLES

    def __post_init__(self) -> None:
        if self.k_scenes < 0 or self.k_modifiers < 0:
            raise ValueError("k values must be >= 0")
        self.graph.check_backend(self.embedder)

    def retrieve(self, x_i: str) -> tuple[list[ScoredItem], list[ScoredItem]]:
        scenes = retrieve_scenes(self.graph, x_i, self.k_scenes, self.embedder)
        mods = retrieve_modifiers(self.graph, scenes, x_i, self.k_modifiers, self.embedder)
        return scenes, mods

    def augment(self, x_i: str) -> tuple[str, list[MergeStep], list[ScoredItem], list[ScoredItem]]:
        """Fold retrieved modifiers into ``x_i`` in descending score order."""
        scenes, mods = self.retrieve(x_i)
        current = x_i
        trace: list[MergeStep] = []
        for hit in mods:
            try:
                merged = merge_step(self.gateway, current, hit.text, self.merge_examples)
            except (MergeRejected, ResponseRejected, BackendUnavailable) as exc:
                trace.append(MergeStep(hit.text, current, current, "skipped", str(exc)))
                continue
            trace.append(MergeStep(hit.text, current, merged))
            current = merged
        return current, trace, scenes, mods

    def refactor(self, w: str) -> str:
        return refactor(self.gateway, w, self.max_refactor_words)

    def rewrite(self, x_i: str) -> str:
        return rewrite(self.gateway, x_i)

    def select(self, x_i: str, x_r: str, x_n: str) -> tuple[str, str]:
        return select(self.gateway, x_i, x_r, x_n, self.median_words)

    def branches(self, x_i: str, result: OptimizationResult) -> None:
        t0 = time.perf_counter()
        try:
            w, trace, scenes, mods = self.augment(x_i)
            result.word_augmented = w
            result.merge_trace = trace
            result.scene_hits = scenes
            result.modifier_hits = mods
            result.x_r = self.refactor(w)
        except Exception as exc:  # noqa: BLE001 - a branch failure must not sink the other branch
            result.branch_errors["refactor_branch"] = f"{type(exc).__name__}: {exc}"
        t1 = time.perf_counter()
        try:
            result.x_n = self.rewrite(x_i)
        except Exception as exc:  # noqa: BLE001
            result.branch_errors["rewrite_branch"] = f"{type(exc).__name__}: {exc}"
        result.timings.update(refactor_branch_s=t1 - t0, rewrite_branch_s=time.perf_counter() - t1)

    def optimize(self, x_i: str, id: str | None = None, no_select: bool = False) -> OptimizationResult:
        x_i = squash_whitespace(x_i)
        if not x_i:
            raise ValueError("prompt is empty")
        result = OptimizationResult(
            input=x_i, x_r=None, x_n=None, chosen=None, chosen_text=None, rationale="", id=id
        )
        self.branches(x_i, result)
        if no_select:
            result.rationale = "selection disabled"
            if result.x_r is None and result.x_n is None:
                result.warning = "both branches failed"
            return result
        t0 = time.perf_counter()
        if result.x_r is not None and result.x_n is not None:
            label, why = self.select(x_i, result.x_r, result.x_n)
            result.chosen = f"x_{label}"
            result.rationale = why
        elif result.x_r is not None:
            result.chosen, result.rationale = "x_r", "branch failure"
        elif result.x_n is not None:
            result.chosen, result.rationale = "x_n", "branch failure"
        else:
            result.chosen, result.rationale = "x_i", "branch failure"
            result.warning = "both branches failed"
        result.chosen_text = {"x_r": result.x_r, "x_n": result.x_n, "x_i": x_i}[result.chosen]
        result.timings["select_s"] = time.perf_counter() - t0
        return result

    def optimize_batch(
        self,
        prompts: Iterable[tuple[str | None, str]],
        workers: int = 1,
        no_select: bool = False,
    ) -> list[OptimizationResult]:
        """Optimize ``(id, text)`` pairs; results come back in input order."""
        items = list(prompts)

        def run(item: tuple[str | None, str]) -> OptimizationResult:
            return self.optimize(item[1], id=item[0], no_select=no_select)

        if workers <= 1:
            return [run(it) for it in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, items))
