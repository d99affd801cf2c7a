"""PredicateGraph: the structured intermediate representation of one model
output.

A graph exposes the elements policies can reference — operations, tool
calls, claims, entities, citations, code blocks — plus the raw source
text the graph was extracted from. Graphs are immutable after
construction; parsing is a pure function.

Wire format: JSON with a required MAJOR-1 `schema_version`. Collections
may be omitted when empty; unknown top-level keys are preserved in an
opaque extras map so MINOR schema additions do not break older engines.
The machine-readable schema lives in specs/predicate-graph.schema.json.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from fractions import Fraction

from .errors import DocumentSyntaxError, SchemaError
from .values import (
    Number,
    canonical_json,
    is_number,
    is_ratio_string,
    loads_exact,
)

SEMVER_RE = re.compile(r"^([0-9]+)\.([0-9]+)\.([0-9]+)$")
SUPPORTED_MAJOR = 1

MODALITIES = ("factual", "opinion", "hedged", "instruction")


@dataclass(frozen=True)
class Span:
    start: int
    end: int


@dataclass(frozen=True)
class Operation:
    op_type: str
    inputs: tuple[Number, ...]
    output: Number
    span: Span | None = None


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict
    span: Span | None = None


@dataclass(frozen=True)
class Claim:
    text: str
    modality: str
    citation_ids: tuple[str, ...] = ()
    span: Span | None = None


@dataclass(frozen=True)
class Entity:
    text: str
    entity_type: str
    span: Span | None = None


@dataclass(frozen=True)
class Citation:
    id: str
    document_id: str
    span: Span | None = None


@dataclass(frozen=True)
class CodeBlock:
    language_tag: str
    content: str
    span: Span | None = None


@dataclass(frozen=True)
class PredicateGraph:
    schema_version: str = "1.0.0"
    operations: tuple[Operation, ...] = ()
    tool_calls: tuple[ToolCall, ...] = ()
    claims: tuple[Claim, ...] = ()
    entities: tuple[Entity, ...] = ()
    citations: tuple[Citation, ...] = ()
    code_blocks: tuple[CodeBlock, ...] = ()
    source_text: str | None = None
    extras: dict = field(default_factory=dict)


# Collection name (plural, as in the wire format) -> element type.
COLLECTIONS = {
    "operations": Operation,
    "tool_calls": ToolCall,
    "claims": Claim,
    "entities": Entity,
    "citations": Citation,
    "code_blocks": CodeBlock,
}

# Singular scope-kind name -> collection name.
KIND_TO_COLLECTION = {
    "operation": "operations",
    "tool_call": "tool_calls",
    "claim": "claims",
    "entity": "entities",
    "citation": "citations",
    "code_block": "code_blocks",
}


def parse_graph(document: str) -> PredicateGraph:
    """Parse a PredicateGraph JSON document.

    Raises DocumentSyntaxError for malformed JSON and SchemaError (with a
    JSON-pointer path) for schema violations: missing or unsupported
    schema_version, type mismatches, bad spans, dangling citation
    references.
    """
    try:
        data = loads_exact(document)
    except ValueError as exc:
        raise DocumentSyntaxError(str(exc)) from None
    return graph_from_data(data)


def graph_from_data(data) -> PredicateGraph:
    """Build and validate a graph from already-decoded JSON data."""
    if not isinstance(data, dict):
        raise SchemaError("/", "document must be a JSON object")
    if "schema_version" not in data:
        raise SchemaError("/schema_version", "missing")

    version = data["schema_version"]
    if not isinstance(version, str):
        raise SchemaError("/schema_version", "expected string")
    known = {"schema_version", "source_text", *COLLECTIONS}
    extras = {k: _value(v, f"/{k}") for k, v in data.items() if k not in known}

    source_text = data.get("source_text")
    if source_text is not None and not isinstance(source_text, str):
        raise SchemaError("/source_text", "expected string")

    graph = PredicateGraph(
        schema_version=version,
        operations=_elements(data, "operations", _operation),
        tool_calls=_elements(data, "tool_calls", _tool_call),
        claims=_elements(data, "claims", _claim),
        entities=_elements(data, "entities", _entity),
        citations=_elements(data, "citations", _citation),
        code_blocks=_elements(data, "code_blocks", _code_block),
        source_text=source_text,
        extras=extras,
    )
    errors = validate_graph(graph)
    if errors:
        raise errors[0]
    return graph


def validate_graph(graph: PredicateGraph) -> list[SchemaError]:
    """Check every graph invariant; returns one SchemaError per defect,
    each addressing the offending element by path. Empty means valid.

    Useful for re-validating graphs built programmatically (correction
    patches, test fixtures) without going through the parser.
    """
    errors: list[SchemaError] = []

    match = SEMVER_RE.match(graph.schema_version)
    if match is None:
        errors.append(SchemaError("/schema_version", "not MAJOR.MINOR.PATCH"))
    elif int(match.group(1)) != SUPPORTED_MAJOR:
        errors.append(
            SchemaError(
                "/schema_version",
                f"unsupported major version {match.group(1)} (engine supports {SUPPORTED_MAJOR})",
            )
        )

    text_len = len(graph.source_text) if graph.source_text is not None else None

    citation_ids = set()
    for i, citation in enumerate(graph.citations):
        if citation.id in citation_ids:
            errors.append(SchemaError(f"/citations/{i}/id", f"duplicate citation id {citation.id!r}"))
        citation_ids.add(citation.id)

    for name in COLLECTIONS:
        for i, element in enumerate(getattr(graph, name)):
            path = f"/{name}/{i}"
            errors.extend(_element_errors(element, path, text_len))
            if isinstance(element, Claim):
                for j, cid in enumerate(element.citation_ids):
                    if cid not in citation_ids:
                        errors.append(SchemaError(f"{path}/citation_ids/{j}", "dangling reference"))
    return errors


def _element_errors(element, path: str, text_len: int | None) -> list[SchemaError]:
    errors: list[SchemaError] = []
    if isinstance(element, Operation):
        if not element.op_type:
            errors.append(SchemaError(f"{path}/op_type", "must be non-empty"))
        if len(element.inputs) < 1:
            errors.append(SchemaError(f"{path}/inputs", "at least one input required"))
    elif isinstance(element, ToolCall):
        if not element.name:
            errors.append(SchemaError(f"{path}/name", "must be non-empty"))
    elif isinstance(element, Claim):
        if not element.text:
            errors.append(SchemaError(f"{path}/text", "must be non-empty"))
        if element.modality not in MODALITIES:
            errors.append(
                SchemaError(f"{path}/modality", f"unknown modality {element.modality!r}")
            )
    elif isinstance(element, Citation):
        if not element.id:
            errors.append(SchemaError(f"{path}/id", "must be non-empty"))

    span = element.span
    if span is not None:
        if span.start >= span.end:
            errors.append(SchemaError(f"{path}/span", "start >= end"))
        elif span.start < 0:
            errors.append(SchemaError(f"{path}/span", "start < 0"))
        elif text_len is not None and span.end > text_len:
            errors.append(SchemaError(f"{path}/span", "end beyond source_text"))
    return errors


def canonical_serialize(graph: PredicateGraph) -> str:
    """One deterministic byte form per graph: sorted keys, no whitespace,
    exact shortest-decimal numbers, empty collections omitted. Serves as
    the fixed point for round-trip tests and as hashing input."""
    return canonical_json(graph_to_data(graph))


def graph_to_data(graph: PredicateGraph) -> dict:
    """Plain JSON-shaped data, fully detached from the graph: mutating the
    result never touches the (immutable) original."""
    data: dict = {"schema_version": graph.schema_version}
    for name in COLLECTIONS:
        elements = getattr(graph, name)
        if elements:
            data[name] = [_element_to_data(e) for e in elements]
    if graph.source_text is not None:
        data["source_text"] = graph.source_text
    for key, value in graph.extras.items():
        data[key] = _value_to_data(value)
    return data


def _element_to_data(element) -> dict:
    data = {}
    for f in fields(element):
        value = getattr(element, f.name)
        if f.name == "span":
            if value is not None:
                data["span"] = {"start": value.start, "end": value.end}
        elif f.name == "citation_ids":
            if value:
                data["citation_ids"] = list(value)
        else:
            data[f.name] = _value_to_data(value)
    return data


def _value_to_data(value):
    if isinstance(value, tuple):
        return [_value_to_data(v) for v in value]
    if isinstance(value, dict):
        return {k: _value_to_data(v) for k, v in value.items()}
    return value


def plain_value(value):
    """Convert any expression-result value — which may contain graph
    elements, spans, or the graph itself — into plain JSON-shaped data."""
    if isinstance(value, PredicateGraph):
        return graph_to_data(value)
    if isinstance(value, Span):
        return {"start": value.start, "end": value.end}
    if isinstance(value, tuple(COLLECTIONS.values())):
        return _element_to_data(value)
    if isinstance(value, (list, tuple)):
        return [plain_value(v) for v in value]
    if isinstance(value, dict):
        return {k: plain_value(v) for k, v in value.items()}
    return value


# --- field decoding -------------------------------------------------------


def _elements(data, name: str, build) -> tuple:
    raw = data.get(name, [])
    if not isinstance(raw, list):
        raise SchemaError(f"/{name}", "expected array")
    return tuple(build(item, f"/{name}/{i}") for i, item in enumerate(raw))


def _object(raw, path: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(raw, dict):
        raise SchemaError(path, "expected object")
    for key in raw:
        if key not in allowed:
            raise SchemaError(f"{path}/{key}", "unknown field")
    for key in required:
        if key not in raw:
            raise SchemaError(f"{path}/{key}", "missing")
    return raw


def _operation(raw, path: str) -> Operation:
    raw = _object(raw, path, {"op_type", "inputs", "output", "span"}, {"op_type", "inputs", "output"})
    inputs = raw["inputs"]
    if not isinstance(inputs, list):
        raise SchemaError(f"{path}/inputs", "expected array")
    return Operation(
        op_type=_string(raw["op_type"], f"{path}/op_type"),
        inputs=tuple(_number(v, f"{path}/inputs/{i}") for i, v in enumerate(inputs)),
        output=_number(raw["output"], f"{path}/output"),
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _tool_call(raw, path: str) -> ToolCall:
    raw = _object(raw, path, {"name", "arguments", "span"}, {"name"})
    arguments = raw.get("arguments", {})
    if not isinstance(arguments, dict):
        raise SchemaError(f"{path}/arguments", "expected object")
    return ToolCall(
        name=_string(raw["name"], f"{path}/name"),
        arguments={k: _value(v, f"{path}/arguments/{k}") for k, v in arguments.items()},
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _claim(raw, path: str) -> Claim:
    raw = _object(raw, path, {"text", "modality", "citation_ids", "span"}, {"text", "modality"})
    cids = raw.get("citation_ids", [])
    if not isinstance(cids, list):
        raise SchemaError(f"{path}/citation_ids", "expected array")
    return Claim(
        text=_string(raw["text"], f"{path}/text"),
        modality=_string(raw["modality"], f"{path}/modality"),
        citation_ids=tuple(_string(c, f"{path}/citation_ids/{i}") for i, c in enumerate(cids)),
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _entity(raw, path: str) -> Entity:
    raw = _object(raw, path, {"text", "entity_type", "span"}, {"text", "entity_type"})
    return Entity(
        text=_string(raw["text"], f"{path}/text"),
        entity_type=_string(raw["entity_type"], f"{path}/entity_type"),
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _citation(raw, path: str) -> Citation:
    raw = _object(raw, path, {"id", "document_id", "span"}, {"id", "document_id"})
    return Citation(
        id=_string(raw["id"], f"{path}/id"),
        document_id=_string(raw["document_id"], f"{path}/document_id"),
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _code_block(raw, path: str) -> CodeBlock:
    raw = _object(raw, path, {"language_tag", "content", "span"}, {"content"})
    return CodeBlock(
        language_tag=_string(raw.get("language_tag", ""), f"{path}/language_tag"),
        content=_string(raw["content"], f"{path}/content"),
        span=_span(raw.get("span"), f"{path}/span"),
    )


def _string(raw, path: str) -> str:
    if not isinstance(raw, str):
        raise SchemaError(path, "expected string")
    return raw


def _number(raw, path: str) -> Number:
    """Number-typed positions accept exact decimals and the "n/d" string
    the canonical serializer emits for non-terminating rationals."""
    if isinstance(raw, bool):
        raise SchemaError(path, "expected number")
    if is_number(raw):
        return raw
    if is_ratio_string(raw):
        n, d = raw.split("/")
        return Fraction(int(n), int(d))
    raise SchemaError(path, "expected number")


def _integer(raw, path: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise SchemaError(path, "expected integer")
    return raw


def _span(raw, path: str) -> Span | None:
    if raw is None:
        return None
    raw = _object(raw, path, {"start", "end"}, {"start", "end"})
    return Span(start=_integer(raw["start"], f"{path}/start"), end=_integer(raw["end"], f"{path}/end"))


def _value(raw, path: str):
    """Value positions: any JSON tree; lists become tuples so graphs are
    immutable throughout."""
    if isinstance(raw, list):
        return tuple(_value(v, f"{path}/{i}") for i, v in enumerate(raw))
    if isinstance(raw, dict):
        return {k: _value(v, f"{path}/{k}") for k, v in raw.items()}
    if raw is None or isinstance(raw, (bool, str)) or is_number(raw):
        return raw
    raise SchemaError(path, f"unsupported value of type {type(raw).__name__}")
