"""Exception types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class DocumentSyntaxError(EngineError):
    """Input text is not well-formed JSON."""

    def __init__(self, reason: str, line: int | None = None, column: int | None = None):
        self.reason = reason
        self.line = line
        self.column = column
        if line is not None:
            super().__init__(f"{reason} (line {line}, column {column})")
        else:
            super().__init__(reason)


class SchemaError(EngineError):
    """A document violates the PredicateGraph schema.

    `path` is a JSON-pointer-style address of the offending element,
    e.g. "/operations/0/span".
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class PolicyError(EngineError):
    """A policy document has an invalid field."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ExprError(EngineError):
    """A CPL expression failed to parse."""

    def __init__(self, offset: int, reason: str, expression: str | None = None):
        self.offset = offset
        self.reason = reason
        self.expression = expression
        where = f" in {expression!r}" if expression is not None else ""
        super().__init__(f"offset {offset}: {reason}{where}")


class EvalErrorKind:
    PATH_NOT_FOUND = "PathNotFound"
    TYPE_MISMATCH = "TypeMismatch"
    DIVISION_BY_ZERO = "DivisionByZero"
    EMPTY_COLLECTION = "EmptyCollection"

    ALL = (PATH_NOT_FOUND, TYPE_MISMATCH, DIVISION_BY_ZERO, EMPTY_COLLECTION)


class EvalError(EngineError):
    """Expression evaluation failed.

    A signal distinct from a false assertion: the expression could not
    produce a value at all.
    """

    def __init__(self, kind: str, detail: str):
        assert kind in EvalErrorKind.ALL
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}")


class StepLimitExceeded(EngineError):
    """Internal guard: evaluation exceeded its declared step bound.

    Indicates an engine bug, never a policy-authoring mistake, so it is
    deliberately not an EvalError.
    """


class DuplicateIdError(EngineError):
    def __init__(self, policy_id: str):
        self.policy_id = policy_id
        super().__init__(f"duplicate policy id {policy_id!r}")


class PatchError(EngineError):
    """A deterministic patch path became unwritable."""


class TemplateError(EngineError):
    """A template could not be instantiated."""


class RubricError(EngineError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class ProviderError(EngineError):
    """An external provider misbehaved (bad response, crash, refusal)."""


class PackError(EngineError):
    """A policy-pack directory violates the pack layout."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class MissingCaseError(EngineError):
    def __init__(self, case_id: str):
        self.case_id = case_id
        super().__init__(f"no graph supplied for test case {case_id!r}")


class ConfigError(EngineError):
    """A loop configuration is invalid."""


class EmptyInputError(EngineError):
    """An aggregate was requested over zero inputs."""
