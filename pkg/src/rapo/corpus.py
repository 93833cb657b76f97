"""Readers for prompt files: plain text (one prompt per line) or JSON lines."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Iterator

logger = logging.getLogger(__name__)


@dataclass
class ReadStats:
    lines: int = 0
    corrupt: int = 0


def iter_prompts(
    path: str | os.PathLike, fmt: str = "text", stats: ReadStats | None = None
) -> Iterator[tuple[str, str]]:
    """Yield ``(id, text)`` pairs.

    ``fmt="text"``: every non-blank line is a prompt, id is its 1-based line
    number. ``fmt="jsonl"``: objects with a ``text`` field and optional ``id``;
    undecodable lines are skipped and counted in ``stats.corrupt``.
    """
    stats = stats if stats is not None else ReadStats()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            stats.lines += 1
            if fmt == "text":
                yield str(lineno), line.rstrip("\r\n")
                continue
            try:
                row = json.loads(line)
                text = row["text"]
                if not isinstance(text, str):
                    raise TypeError("text is not a string")
            except (ValueError, KeyError, TypeError) as exc:
                stats.corrupt += 1
                logger.warning("%s:%d: skipping corrupt line (%s)", path, lineno, exc)
                continue
            yield str(row.get("id", lineno)), text


def sniff_format(path: str | os.PathLike) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                return "jsonl" if line.lstrip().startswith("{") else "text"
    return "text"
