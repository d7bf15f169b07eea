"""GFL frontend: parse declaration sources, serialize declarations back."""

from .ast import (
    ActionDecl,
    Declaration,
    DiagramDecl,
    EdgeRef,
    FieldFilter,
    Filter,
    LaneDecl,
    MetricDecl,
    NodeDecl,
    QueryDecl,
    SourceDocument,
    SwimlaneAssignment,
    TagFilter,
    TriggerDecl,
    slugify,
)
from .parser import ParseError, parse, parse_file
from .writer import serialize, serialize_document

__all__ = [
    "ActionDecl",
    "Declaration",
    "DiagramDecl",
    "EdgeRef",
    "FieldFilter",
    "Filter",
    "LaneDecl",
    "MetricDecl",
    "NodeDecl",
    "ParseError",
    "QueryDecl",
    "SourceDocument",
    "SwimlaneAssignment",
    "TagFilter",
    "TriggerDecl",
    "parse",
    "parse_file",
    "serialize",
    "serialize_document",
    "slugify",
]
