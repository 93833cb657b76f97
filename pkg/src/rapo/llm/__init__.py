from .backends import (
    CallableBackend,
    FixtureBackend,
    RecordingBackend,
    RemoteChatBackend,
    fixture_key,
)
from .extraction import llm_extractor, parse_extraction
from .gateway import Gateway, LlmRequest, LlmResponse
from .templates import (
    DEFAULT_MERGE_EXAMPLES,
    MergeExample,
    PromptTemplate,
    TemplateRegistry,
    format_examples,
    load_merge_examples,
    render,
)

__all__ = [
    "CallableBackend",
    "FixtureBackend",
    "RecordingBackend",
    "RemoteChatBackend",
    "fixture_key",
    "llm_extractor",
    "parse_extraction",
    "Gateway",
    "LlmRequest",
    "LlmResponse",
    "DEFAULT_MERGE_EXAMPLES",
    "MergeExample",
    "PromptTemplate",
    "TemplateRegistry",
    "format_examples",
    "load_merge_examples",
    "render",
]
