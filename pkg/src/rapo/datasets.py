"""Instruction-tuning datasets for the refactoring model and the discriminator.

Both exports are line-delimited ``{"instruction", "input", "output"}`` objects.
Refactoring rows put the fully rendered refactor instruction in
``instruction`` (exactly what the refactor call sends at inference time) and
the training prompt in ``output``. Discriminator rows carry the fixed
selection instruction, the three prompts in ``input`` and the label in
``output``, plus ``id`` and ``dimension`` keys.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .analytics import DEFAULT_MEDIAN_WORDS
from .errors import BackendUnavailable, DegradeRejected, ResponseRejected
from .llm.gateway import Gateway
from .llm.templates import SELECT_INSTRUCTION, invert_refactor, render
from .pipeline import Optimizer, length_proximity_label
from .text import normalize_text, squash_whitespace

logger = logging.getLogger(__name__)

DIMENSIONS = (
    "temporal_flickering",
    "imaging_quality",
    "human_action",
    "object_class",
    "multiple_objects",
    "spatial_relationship",
    "other",
)


@dataclass(frozen=True)
class RefactorPair:
    w_i: str
    c_i: str

    def __post_init__(self) -> None:
        if not self.w_i.strip() or not self.c_i.strip():
            raise ValueError("refactor pair fields must be non-empty")
        if normalize_text(self.w_i) == normalize_text(self.c_i):
            raise ValueError("w_i must differ from c_i")

    def to_row(self) -> dict:
        return {"instruction": render("refactor", {"w": self.w_i}), "input": "", "output": self.c_i}

    @classmethod
    def from_row(cls, row: Mapping) -> "RefactorPair":
        return cls(w_i=invert_refactor(row["instruction"]), c_i=row["output"])


@dataclass(frozen=True)
class DiscriminatorTriple:
    x_i: str
    x_r: str
    x_n: str
    y_d: str
    dimension: str = "other"
    id: str | None = None

    def __post_init__(self) -> None:
        if self.y_d not in ("r", "n"):
            raise ValueError(f"y_d must be 'r' or 'n', got {self.y_d!r}")
        for name in ("x_i", "x_r", "x_n"):
            value = getattr(self, name)
            if "\n" in value or not value.strip():
                raise ValueError(f"{name} must be a non-empty single line")

    def to_row(self) -> dict:
        return {
            "id": self.id,
            "instruction": SELECT_INSTRUCTION,
            "input": f"x_i: {self.x_i}\nx_r: {self.x_r}\nx_n: {self.x_n}",
            "output": self.y_d,
            "dimension": self.dimension,
        }

    @classmethod
    def from_row(cls, row: Mapping) -> "DiscriminatorTriple":
        if row["instruction"] != SELECT_INSTRUCTION:
            raise ValueError("row does not carry the selection instruction")
        fields = {}
        for line in row["input"].split("\n"):
            key, _, value = line.partition(": ")
            fields[key] = value
        return cls(
            x_i=fields["x_i"],
            x_r=fields["x_r"],
            x_n=fields["x_n"],
            y_d=row["output"],
            dimension=row.get("dimension", "other"),
            id=row.get("id"),
        )


def read_rows(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_rows(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# refactoring pairs


def degrade(gateway: Gateway, c_i: str) -> str:
    """Reword a training prompt out of its native format; rejects unchanged text."""
    if not c_i.strip():
        raise ValueError("degrade needs a non-empty prompt")
    target = normalize_text(c_i)

    def validate(text: str) -> str:
        cleaned = squash_whitespace(text)
        if not cleaned:
            raise ValueError("empty output")
        if normalize_text(cleaned) == target:
            raise ValueError("output equals the source prompt")
        return cleaned

    try:
        return gateway.ask("pair_degrade", {"c": c_i}, validate=validate)
    except ResponseRejected as exc:
        raise DegradeRejected(exc.reason) from exc


@dataclass
class RefactorSummary:
    requested: int = 0
    written: int = 0
    rejected: int = 0
    failed: int = 0

    def as_dict(self) -> dict:
        return {"dataset": "refactor", **self.__dict__}


def build_refactor_dataset(
    corpus: Iterable[str],
    out_path: str | os.PathLike,
    gateway: Gateway,
    limit: int | None = None,
    workers: int = 1,
) -> RefactorSummary:
    """Degrade up to ``limit`` training prompts into pairs and export them in input order."""
    summary = RefactorSummary()
    prompts = []
    for prompt in corpus:
        if limit is not None and len(prompts) >= limit:
            break
        if prompt.strip():
            prompts.append(prompt)
    summary.requested = len(prompts)

    def make(c_i: str) -> RefactorPair | str:
        try:
            return RefactorPair(degrade(gateway, c_i), c_i)
        except DegradeRejected:
            return "rejected"
        except BackendUnavailable as exc:
            logger.warning("degrade failed for %r: %s", c_i[:60], exc)
            return "failed"

    if workers <= 1:
        outcomes = [make(p) for p in prompts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(make, prompts))

    rows = []
    for outcome in outcomes:
        if outcome == "rejected":
            summary.rejected += 1
        elif outcome == "failed":
            summary.failed += 1
        else:
            rows.append(outcome.to_row())
    _write_rows(out_path, rows)
    summary.written = len(rows)
    return summary


def read_refactor_dataset(path: str | os.PathLike) -> list[RefactorPair]:
    return [RefactorPair.from_row(row) for row in read_rows(path)]


# simulated user prompts and dimension routing


@dataclass
class SimulationResult:
    prompts: list[tuple[str, str]] = field(default_factory=list)
    shortfall: int = 0


def _schedule(n: int, dimensions: Sequence[str], quotas: Mapping[str, int] | None) -> list[str]:
    if quotas:
        out: list[str] = []
        for dim, count in quotas.items():
            out.extend([dim] * count)
        return out
    return [dimensions[i % len(dimensions)] for i in range(n)]


def simulate_user_prompts(
    gateway: Gateway,
    n: int,
    dimensions: Sequence[str] = DIMENSIONS[:-1],
    seed_prompts: Sequence[str] = (),
    quotas: Mapping[str, int] | None = None,
) -> SimulationResult:
    """Generate ``n`` short user-style prompts, round-robin over ``dimensions``.

    ``quotas`` overrides the round-robin with explicit per-dimension counts.
    Duplicates (case-insensitive) and failed calls count toward the shortfall.
    """
    if n <= 0 and not quotas:
        raise ValueError("n must be positive")
    if not dimensions:
        raise ValueError("at least one dimension is required")
    plan = _schedule(n, dimensions, quotas)
    seeds = "\n".join(f"- {s}" for s in seed_prompts) or "- (none)"
    result = SimulationResult()
    seen: set[str] = set()
    for index, dim in enumerate(plan):
        try:
            text = gateway.ask(
                "simulate_user",
                {"dimension": dim, "seeds": seeds, "index": str(index)},
                validate=lambda t: _single_line(t),
            )
        except (ResponseRejected, BackendUnavailable) as exc:
            logger.info("simulate_user #%d failed: %s", index, exc)
            continue
        key = normalize_text(text)
        if key in seen:
            continue
        seen.add(key)
        result.prompts.append((text, dim))
    result.shortfall = len(plan) - len(result.prompts)
    return result


def _single_line(text: str) -> str:
    cleaned = squash_whitespace(text).strip("\"'")
    if not cleaned:
        raise ValueError("empty output")
    return cleaned


def parse_dimension(text: str, dimensions: Sequence[str] = DIMENSIONS) -> str:
    token = normalize_text(text).strip(" .'\"`")
    token = token.replace("-", "_").replace(" ", "_")
    return token if token in dimensions else "other"


def route_dimension(gateway: Gateway, prompt: str, dimensions: Sequence[str] = DIMENSIONS) -> str:
    if not prompt.strip():
        raise ValueError("route_dimension needs a non-empty prompt")
    try:
        text = gateway.ask(
            "dimension_route", {"prompt": prompt, "dimensions": ", ".join(dimensions)}, reasks=0
        )
    except (ResponseRejected, BackendUnavailable) as exc:
        logger.info("dimension routing failed: %s", exc)
        return "other"
    return parse_dimension(text, dimensions)


# discriminator triples


@dataclass
class DiscriminatorSummary:
    prompts: int = 0
    written: int = 0
    skipped_missing_label: int = 0
    failed: int = 0

    def as_dict(self) -> dict:
        return {"dataset": "discriminator", **self.__dict__}


def load_labels(path: str | os.PathLike) -> dict[str, str]:
    labels = {}
    for row in read_rows(path):
        y = str(row["y_d"]).strip().lower()
        if y not in ("r", "n"):
            raise ValueError(f"label for {row['id']!r} must be 'r' or 'n', got {row['y_d']!r}")
        labels[str(row["id"])] = y
    return labels


def build_discriminator_dataset(
    user_prompts: Iterable[tuple[str, str]],
    optimizer: Optimizer,
    out_path: str | os.PathLike,
    labels: Mapping[str, str] | None = None,
    median_words: float = DEFAULT_MEDIAN_WORDS,
    dimensions: Sequence[str] = DIMENSIONS,
    workers: int = 1,
) -> DiscriminatorSummary:
    """Run both branches per ``(id, prompt)`` and label the pair.

    ``labels=None`` selects the heuristic (length-proximity) labelling;
    otherwise prompts whose id is absent from ``labels`` are skipped.
    """
    items = list(user_prompts)
    summary = DiscriminatorSummary(prompts=len(items))

    def make(item: tuple[str, str]) -> DiscriminatorTriple | str:
        pid, x_i = item
        if labels is not None and pid not in labels:
            return "missing"
        x_i = squash_whitespace(x_i)
        try:
            w, *_ = optimizer.augment(x_i)
            x_r = optimizer.refactor(w)
            x_n = optimizer.rewrite(x_i)
        except Exception as exc:  # noqa: BLE001 - per-item failure is counted, not fatal
            logger.warning("branches failed for %s: %s", pid, exc)
            return "failed"
        y_d = labels[pid] if labels is not None else length_proximity_label(x_r, x_n, median_words)
        dim = route_dimension(optimizer.gateway, x_i, dimensions)
        return DiscriminatorTriple(x_i=x_i, x_r=x_r, x_n=x_n, y_d=y_d, dimension=dim, id=pid)

    if workers <= 1:
        outcomes = [make(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(make, items))

    rows = []
    for outcome in outcomes:
        if outcome == "missing":
            summary.skipped_missing_label += 1
        elif outcome == "failed":
            summary.failed += 1
        else:
            rows.append(outcome.to_row())
    _write_rows(out_path, rows)
    summary.written = len(rows)
    return summary


def read_discriminator_dataset(path: str | os.PathLike) -> list[DiscriminatorTriple]:
    return [DiscriminatorTriple.from_row(row) for row in read_rows(path)]
