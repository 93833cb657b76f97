"""Parsing of the line-keyed scene/modifier extraction format."""

from __future__ import annotations

from ..errors import ParseError
from ..graph import ExtractionRecord
from .gateway import Gateway

_KEYS = {
    "scene": "scene",
    "subjects": "subjects",
    "subject": "subjects",
    "actions": "actions",
    "action": "actions",
    "atmosphere": "atmospheres",
    "atmospheres": "atmospheres",
}
_EMPTY = {"", "none", "n/a", "-"}


def _split(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip().lower() not in _EMPTY]


def parse_extraction(llm_text: str, source_prompt: str = "") -> ExtractionRecord:
    """Parse ``SCENE:/SUBJECTS:/ACTIONS:/ATMOSPHERE:`` lines into a record.

    Blank lines are ignored; any other line without a known key is an error.
    Missing list lines mean empty lists; a missing SCENE line is an error.
    """
    fields: dict[str, str] = {}
    for line in llm_text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        name = _KEYS.get(key.strip().lower())
        if not sep or name is None:
            raise ParseError("unexpected line in extraction output", line)
        if name in fields:
            raise ParseError("repeated key in extraction output", line)
        fields[name] = value.strip()
    if "scene" not in fields:
        raise ParseError("extraction output has no SCENE line")
    scene = fields["scene"]
    if scene.lower() in _EMPTY:
        raise ParseError("extraction output has an empty scene", f"SCENE: {scene}")
    try:
        return ExtractionRecord.create(
            scene=scene,
            subjects=_split(fields.get("subjects", "")),
            actions=_split(fields.get("actions", "")),
            atmospheres=_split(fields.get("atmospheres", "")),
            source_prompt=source_prompt,
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def llm_extractor(gateway: Gateway):
    """Return an ExtractionFn that asks the gateway and re-asks once on a parse failure."""

    def extract(prompt: str) -> ExtractionRecord:
        result: list[ExtractionRecord] = []

        def validate(text: str) -> str:
            try:
                result.append(parse_extraction(text, source_prompt=prompt))
            except ParseError as exc:
                raise ValueError(str(exc)) from exc
            return text

        gateway.ask("extract", {"prompt": prompt}, validate=validate)
        return result[-1]

    return extract
