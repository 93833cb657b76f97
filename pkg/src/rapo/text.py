from __future__ import annotations

import re
import unicodedata

_WS = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """Lowercase, drop control characters and collapse whitespace runs.

    Whitespace controls (tab, newline, ...) count as whitespace rather than
    being dropped, so ``"a\\tb"`` becomes ``"a b"``.
    """
    chars = []
    for ch in raw:
        if ch.isspace():
            chars.append(" ")
        elif unicodedata.category(ch) != "Cc":
            chars.append(ch)
    return _WS.sub(" ", "".join(chars)).strip().lower()


def squash_whitespace(raw: str) -> str:
    """Collapse whitespace runs to single spaces and trim, preserving case."""
    return _WS.sub(" ", raw).strip()
