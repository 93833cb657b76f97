"""Prompt templates for every LLM call the toolkit makes.

Placeholders are ``{name}`` tokens. Substitution is a single left-to-right pass,
so bound values containing ``{...}`` are never re-expanded.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import MissingPlaceholder, UnknownTemplate

_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

TEMPLATE_IDS = (
    "extract",
    "merge",
    "rewrite",
    "refactor",
    "select",
    "simulate_user",
    "dimension_route",
    "pair_degrade",
)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    temperature: float = 0.0
    max_output_tokens: int = 256
    required_placeholders: frozenset[str] = field(default=frozenset())

    def __post_init__(self) -> None:
        if not self.required_placeholders:
            names = frozenset(_PLACEHOLDER.findall(self.body))
            object.__setattr__(self, "required_placeholders", names)

    def render(self, bindings: Mapping[str, str]) -> str:
        for name in sorted(self.required_placeholders):
            if name not in bindings or bindings[name] is None:
                raise MissingPlaceholder(name)

        def sub(m: re.Match) -> str:
            name = m.group(1)
            if name in self.required_placeholders:
                return str(bindings[name])
            return m.group(0)

        return _PLACEHOLDER.sub(sub, self.body)


# Retrieval-merge instruction; ``examples`` is the rendered few-shot block.
MERGE_BODY = (
    "Suppose you are a Text Merger. You receive two inputs from the user: a description body "
    "and a relevant modifier. Your task is to enrich the description body with relevant "
    "modifiers while retaining the description body. You should ensure that the output text is "
    "coherent, contextually relevant, and follows the same structure as the examples provided.\n"
    "Examples of prompt-pairs provided:\n{examples}\n"
    "Input description body and modifier are: {body}, {modifier}.\n"
    "The merged prompt is:"
)

REFACTOR_PREFIX = "Refine format and word length of the sentence: "
REFACTOR_SUFFIX = (
    ". Maintain the original subject descriptions, actions, scene descriptions. "
    "Append additional straightforward actions to make the sentence more dynamic if necessary."
)
REFACTOR_BODY = REFACTOR_PREFIX + "{w}" + REFACTOR_SUFFIX

SELECT_INSTRUCTION = (
    "Given user-provided prompt x_i, select the better optimized prompt from x_r and x_n. "
    "The chosen prompt is required to contain multiple, straightforward, and relevant modifiers "
    "about x_i while involving the semantics of x_i."
)
SELECT_BODY = SELECT_INSTRUCTION + "\n\nx_i: {x_i}\nx_r: {x_r}\nx_n: {x_n}"

DEFAULT_REWRITE_BODY = (
    "Rewrite the user-provided prompt for a text-to-video model: {x_i}. "
    "Refine format and word length of the sentence into one fluent descriptive sentence. "
    "Maintain the original subject descriptions, actions, scene descriptions. "
    "Add straightforward, relevant details about subjects, actions and atmosphere. "
    "Output only the rewritten prompt."
)

EXTRACT_BODY = (
    "Extract the scene and its related modifiers from the text-to-video prompt below.\n"
    "Reply with exactly these four lines and nothing else:\n"
    "SCENE: <the place or setting, a short noun phrase>\n"
    "SUBJECTS: <comma-separated subject descriptions>\n"
    "ACTIONS: <comma-separated action descriptions>\n"
    "ATMOSPHERE: <comma-separated atmosphere descriptions>\n"
    "Write none for an empty list.\n"
    "Prompt: {prompt}"
)

PAIR_DEGRADE_BODY = (
    "Rewrite the following video caption so it keeps the same meaning but no longer follows "
    "its original format: change the sentence structure, word order and length, for example "
    "as a loose list of short phrases or a casual user request. Do not add new content.\n"
    "Caption: {c}\n"
    "Rewritten:"
)

SIMULATE_USER_BODY = (
    "Write one short prompt, under 15 words, that a typical user might type into a "
    "text-to-video generator. The prompt should exercise the evaluation dimension "
    "'{dimension}'. Vary subjects and settings; output only the prompt.\n"
    "Reference prompts:\n{seeds}\n"
    "Request #{index}:"
)

DIMENSION_ROUTE_BODY = (
    "Decide which video evaluation dimension best fits the text-to-video prompt below. "
    "Answer with exactly one name from this list: {dimensions}.\n"
    "Prompt: {prompt}\n"
    "Dimension:"
)


DEFAULT_TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in (
        PromptTemplate("extract", EXTRACT_BODY, temperature=0.0, max_output_tokens=256),
        PromptTemplate("merge", MERGE_BODY, temperature=0.7, max_output_tokens=256),
        PromptTemplate("rewrite", DEFAULT_REWRITE_BODY, temperature=0.7, max_output_tokens=256),
        PromptTemplate("refactor", REFACTOR_BODY, temperature=0.0, max_output_tokens=256),
        PromptTemplate("select", SELECT_BODY, temperature=0.0, max_output_tokens=16),
        PromptTemplate("simulate_user", SIMULATE_USER_BODY, temperature=1.0, max_output_tokens=64),
        PromptTemplate("dimension_route", DIMENSION_ROUTE_BODY, temperature=0.0, max_output_tokens=16),
        PromptTemplate("pair_degrade", PAIR_DEGRADE_BODY, temperature=0.7, max_output_tokens=256),
    )
}


@dataclass(frozen=True)
class MergeExample:
    body: str
    modifier: str
    merged: str


DEFAULT_MERGE_EXAMPLES = (
    MergeExample(
        "a woman representing a funeral",
        "a black suit",
        "a woman dressed in a black suit representing a funeral",
    ),
    MergeExample(
        "a dog running on the beach",
        "waves crashing",
        "a dog running on the beach as waves crash behind it",
    ),
    MergeExample(
        "a city street at night",
        "neon lights",
        "a city street at night glowing with neon lights",
    ),
)


def format_examples(examples: Iterable[MergeExample]) -> str:
    return "\n".join(
        f"- body: {e.body} | modifier: {e.modifier} | merged: {e.merged}" for e in examples
    )


def load_merge_examples(path: str | os.PathLike) -> tuple[MergeExample, ...]:
    """Read few-shot merge pairs from a file of ``{"body","modifier","merged"}`` lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(MergeExample(row["body"], row["modifier"], row["merged"]))
    return tuple(out)


class TemplateRegistry:
    def __init__(self, templates: Mapping[str, PromptTemplate] | None = None) -> None:
        self._templates = dict(DEFAULT_TEMPLATES if templates is None else templates)

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(template_id) from None

    def override(self, template_id: str, body: str) -> None:
        base = self.get(template_id)
        self._templates[template_id] = PromptTemplate(
            template_id, body, base.temperature, base.max_output_tokens
        )

    def override_from_file(self, template_id: str, path: str | os.PathLike) -> None:
        self.override(template_id, Path(path).read_text(encoding="utf-8").strip())

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.get(template_id).render(bindings)


_DEFAULT_REGISTRY = TemplateRegistry()


def render(template_id: str, bindings: Mapping[str, str]) -> str:
    return _DEFAULT_REGISTRY.render(template_id, bindings)


def invert_refactor(instruction: str) -> str:
    """Recover ``w`` from a rendered refactor instruction."""
    if not (instruction.startswith(REFACTOR_PREFIX) and instruction.endswith(REFACTOR_SUFFIX)):
        raise ValueError("not a rendered refactor instruction")
    return instruction[len(REFACTOR_PREFIX) : len(instruction) - len(REFACTOR_SUFFIX)]
