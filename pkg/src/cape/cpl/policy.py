"""Policy documents: parse and lint.

A policy is JSON: id, tier (T1 objective correctness > T2 safety and
governance > T3 structural preference), optional integer priority, a
scope that selects graph elements, optional where guards, one or more
assert expressions, and an on_violation action (CORRECT with optional
correction_hint/template, REJECT, or WARN).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import DocumentSyntaxError, ExprError, PolicyError
from ..graph import KIND_TO_COLLECTION
from ..values import is_number, loads_exact
from .ast import (
    Binary,
    Call,
    Expr,
    Literal,
    ORDERING_OPS,
    PREDICATE_FUNCTIONS,
    Path,
    Unary,
    walk,
)
from .parser import parse_expr

TIERS = ("T1", "T2", "T3")
ACTIONS = ("CORRECT", "REJECT", "WARN")
SCOPE_KINDS = (*KIND_TO_COLLECTION, "output")

# Fields usable in scope filters (conjunctive equality against literals).
FILTERABLE_FIELDS = {
    "operation": ("op_type",),
    "tool_call": ("name",),
    "claim": ("modality", "text"),
    "entity": ("entity_type", "text"),
    "citation": ("id", "document_id"),
    "code_block": ("language_tag",),
    "output": (),
}

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


@dataclass(frozen=True)
class Scope:
    kind: str
    filter: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ViolationAction:
    action: str = "REJECT"
    correction_hint: str | None = None
    template: str | None = None


@dataclass(frozen=True)
class ClauseExpr:
    """An expression together with its source text, kept for diagnostics."""

    source: str
    expr: Expr


@dataclass(frozen=True)
class Policy:
    id: str
    tier: str
    scope: Scope
    asserts: tuple[ClauseExpr, ...]
    where: tuple[ClauseExpr, ...] = ()
    priority: int = 0
    on_violation: ViolationAction = ViolationAction()


@dataclass(frozen=True)
class LintWarning:
    location: str  # e.g. "assert[0]"
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def parse_policy(document: str) -> Policy:
    try:
        data = loads_exact(document)
    except ValueError as exc:
        raise DocumentSyntaxError(str(exc)) from None
    return policy_from_data(data)


def policy_from_data(data) -> Policy:
    if not isinstance(data, dict):
        raise PolicyError("/", "policy must be a JSON object")
    known = {"id", "tier", "priority", "scope", "where", "assert", "on_violation"}
    for key in data:
        if key not in known:
            raise PolicyError(key, "unknown field")

    policy_id = data.get("id")
    if not isinstance(policy_id, str) or not policy_id:
        raise PolicyError("id", "missing or empty")
    if not _ID_RE.match(policy_id):
        raise PolicyError("id", f"not a dotted identifier: {policy_id!r}")

    tier = data.get("tier")
    if tier is None:
        raise PolicyError("tier", "missing")
    if tier not in TIERS:
        raise PolicyError("tier", f"unknown tier {tier!r}")

    priority = data.get("priority", 0)
    if isinstance(priority, bool) or not isinstance(priority, int):
        raise PolicyError("priority", "expected integer")

    scope = _scope(data.get("scope"))
    where = _clauses(data.get("where", []), "where")
    asserts = _clauses(data.get("assert"), "assert")
    if not asserts:
        raise PolicyError("assert", "at least one assert required")

    return Policy(
        id=policy_id,
        tier=tier,
        scope=scope,
        asserts=asserts,
        where=where,
        priority=priority,
        on_violation=_on_violation(data.get("on_violation")),
    )


def _scope(raw) -> Scope:
    if not isinstance(raw, dict):
        raise PolicyError("scope", "missing or not an object")
    kind = raw.get("kind")
    if kind not in SCOPE_KINDS:
        raise PolicyError("scope.kind", f"unknown kind {kind!r}")
    filter_ = raw.get("filter", {})
    if not isinstance(filter_, dict):
        raise PolicyError("scope.filter", "expected object")
    allowed = FILTERABLE_FIELDS[kind]
    for key, value in filter_.items():
        if key not in allowed:
            raise PolicyError("scope.filter", f"field {key!r} is not filterable for kind {kind!r}")
        if not (value is None or isinstance(value, (bool, str)) or is_number(value)):
            raise PolicyError("scope.filter", f"filter value for {key!r} must be a scalar literal")
    extra = set(raw) - {"kind", "filter"}
    if extra:
        raise PolicyError("scope", f"unknown field {sorted(extra)[0]!r}")
    return Scope(kind=kind, filter=dict(filter_))


def _clauses(raw, which: str) -> tuple[ClauseExpr, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise PolicyError(which, "expected array")
    clauses = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or not isinstance(entry.get("expr"), str):
            raise PolicyError(f"{which}[{i}]", 'expected {"expr": "..."}')
        source = entry["expr"]
        try:
            clauses.append(ClauseExpr(source=source, expr=parse_expr(source)))
        except ExprError as exc:
            raise ExprError(exc.offset, f"{which}[{i}]: {exc.reason}", source) from None
    return tuple(clauses)


def _on_violation(raw) -> ViolationAction:
    if raw is None:
        return ViolationAction()
    if not isinstance(raw, dict):
        raise PolicyError("on_violation", "expected object")
    action = raw.get("action")
    if action not in ACTIONS:
        raise PolicyError("on_violation.action", f"unknown action {action!r}")
    hint = raw.get("correction_hint")
    if hint is not None and not isinstance(hint, str):
        raise PolicyError("on_violation.correction_hint", "expected string")
    template = raw.get("template")
    if template is not None and not isinstance(template, str):
        raise PolicyError("on_violation.template", "expected string")
    if template is not None and action != "CORRECT":
        raise PolicyError("on_violation.template", "template is only meaningful with action CORRECT")
    extra = set(raw) - {"action", "correction_hint", "template"}
    if extra:
        raise PolicyError("on_violation", f"unknown field {sorted(extra)[0]!r}")
    return ViolationAction(action=action, correction_hint=hint, template=template)


# --- lint -------------------------------------------------------------------


def lint_policy(policy: Policy) -> list[LintWarning]:
    """Static checks that catch policy-authoring mistakes before they
    surface as runtime PathNotFound noise: unknown path roots, literal
    comparisons that can never hold, predicates ignoring `it`."""
    warnings: list[LintWarning] = []
    binding = policy.scope.kind
    for which, clauses in (("where", policy.where), ("assert", policy.asserts)):
        for i, clause in enumerate(clauses):
            location = f"{which}[{i}]"
            _lint_expr(clause.expr, binding, False, location, warnings)
    return warnings


def _lint_expr(expr: Expr, binding: str, it_allowed: bool, location: str, out: list[LintWarning]) -> None:
    if isinstance(expr, Path):
        root = expr.root
        if root == "it":
            if not it_allowed:
                out.append(LintWarning(location, "'it' used outside a predicate"))
        elif root not in KIND_TO_COLLECTION.values() and root != binding:
            out.append(LintWarning(location, f"unknown root '{root}'"))
        return
    if isinstance(expr, Literal):
        return
    if isinstance(expr, Unary):
        _lint_expr(expr.operand, binding, it_allowed, location, out)
        return
    if isinstance(expr, Binary):
        _lint_comparison(expr, location, out)
        _lint_expr(expr.left, binding, it_allowed, location, out)
        _lint_expr(expr.right, binding, it_allowed, location, out)
        return
    if isinstance(expr, Call):
        if expr.fn in PREDICATE_FUNCTIONS:
            _lint_expr(expr.args[0], binding, it_allowed, location, out)
            pred = expr.args[1]
            if not any(isinstance(n, Path) and n.root == "it" for n in walk(pred)):
                out.append(LintWarning(location, f"{expr.fn} predicate does not use 'it'"))
            _lint_expr(pred, binding, True, location, out)
        else:
            for arg in expr.args:
                _lint_expr(arg, binding, it_allowed, location, out)


def _lint_comparison(expr: Binary, location: str, out: list[LintWarning]) -> None:
    if expr.op not in (*ORDERING_OPS, "==", "!="):
        return
    if not (isinstance(expr.left, Literal) and isinstance(expr.right, Literal)):
        return
    left_kind = _literal_kind(expr.left.value)
    right_kind = _literal_kind(expr.right.value)
    if left_kind != right_kind:
        out.append(LintWarning(location, f"{left_kind}/{right_kind} comparison"))


def _literal_kind(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if is_number(value):
        return "number"
    if isinstance(value, str):
        return "string"
    return "null"
