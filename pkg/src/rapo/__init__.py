"""Retrieval-augmented prompt optimization for text-to-video models."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    ExtractionRecord,
    RelationGraph,
    add_record,
    build_graph,
    load_graph,
    save_graph,
)
from .pipeline import OptimizationResult, Optimizer  # noqa: E402
from .text import normalize_text  # noqa: E402

__all__ = [
    "ExtractionRecord",
    "RelationGraph",
    "add_record",
    "build_graph",
    "load_graph",
    "save_graph",
    "OptimizationResult",
    "Optimizer",
    "normalize_text",
]
