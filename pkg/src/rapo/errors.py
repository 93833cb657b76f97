"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class RapoError(Exception):
    """Base class for every error raised by this package."""


# graph


class EmbeddingBackendMismatch(RapoError):
    pass


class FormatVersionMismatch(RapoError):
    pass


class CorruptRecord(RapoError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class GraphIntegrityError(RapoError):
    pass


# retrieval


class DimensionMismatch(RapoError):
    pass


class ZeroVector(RapoError):
    pass


class UnknownSceneId(RapoError):
    pass


# llm gateway


class MissingPlaceholder(RapoError):
    def __init__(self, name: str) -> None:
        super().__init__(f"missing placeholder: {name}")
        self.name = name


class UnknownTemplate(RapoError):
    pass


class BackendUnavailable(RapoError):
    pass


class FixtureMissing(BackendUnavailable):
    """The fixture file has no entry for the rendered prompt."""


class TransientBackendError(RapoError):
    """Raised by backends for failures worth retrying (timeouts, 429, 5xx)."""


class ResponseRejected(RapoError):
    def __init__(self, template_id: str, reason: str, text: str | None = None) -> None:
        super().__init__(f"{template_id}: {reason}")
        self.template_id = template_id
        self.reason = reason
        self.text = text


class ParseError(RapoError):
    def __init__(self, message: str, line: str | None = None) -> None:
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


# pipeline


class MergeRejected(RapoError):
    pass


class RefactorRejected(RapoError):
    pass


class RewriteRejected(RapoError):
    pass


# dataset builder


class DegradeRejected(RapoError):
    pass


# analytics


class EmptyCorpus(RapoError):
    pass
