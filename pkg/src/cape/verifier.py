"""Policy evaluation against PredicateGraphs, producing structured
verdicts.

Evaluation order is fully deterministic: tier first (T1 > T2 > T3), then
explicit priority within a tier (higher wins), then policy id
alphabetically. The ordering governs how violations are listed and which
correction wins a conflict; it never suppresses a violation record.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cpl.ast import Binary, Expr, Path, walk
from .cpl.evaluator import EvalEnv, eval_expr
from .cpl.policy import Policy
from .errors import DuplicateIdError, EvalError
from .graph import KIND_TO_COLLECTION, PredicateGraph, Span, plain_value
from .values import canonical_json, render_value, values_equal

STATUS_PASSED = "passed"
STATUS_VIOLATED = "violated"
STATUS_NOT_APPLICABLE = "not_applicable"
STATUS_EVAL_ERROR = "eval_error"

GENERIC_EXPECTED = "assertion true"


@dataclass(frozen=True)
class Violation:
    policy_id: str
    message: str  # "{actual} != {expected}", actual rendered first
    expected: object
    actual: object
    tier: str
    element_index: int
    assert_index: int
    span: Span | None = None


@dataclass(frozen=True)
class PolicyResult:
    policy_id: str
    status: str
    violations: tuple[Violation, ...] = ()
    # Assert expressions that could not be evaluated at all; a defect
    # signal, kept apart from violations so `status == violated` tracks
    # `violations` exactly.
    diagnostics: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class Verdict:
    output_id: str
    policies_evaluated: int
    policies_passed: int
    violations: tuple[Violation, ...]
    results: tuple[PolicyResult, ...] = ()


def resolve_order(policies: list[Policy]) -> list[Policy]:
    """Total, deterministic order over a policy set; duplicate ids are an
    error, so ties on (tier, priority) always break on id."""
    seen = set()
    for policy in policies:
        if policy.id in seen:
            raise DuplicateIdError(policy.id)
        seen.add(policy.id)
    return sorted(policies, key=order_key)


def order_key(policy: Policy):
    return (policy.tier, -policy.priority, policy.id)


def evaluate_policy(policy: Policy, graph: PredicateGraph) -> PolicyResult:
    """Evaluate one policy: select scoped elements, skip elements whose
    where-guards are false (or fail to evaluate), then check every assert
    on the remainder. Never raises for expression trouble — an assert
    that cannot be evaluated becomes a diagnostic on an eval_error
    result."""
    violations: list[Violation] = []
    diagnostics: list[Violation] = []
    evaluated_elements = 0

    for element_index, element in _scoped_elements(policy, graph):
        env = EvalEnv(graph=graph, binding_name=policy.scope.kind, binding_value=element)
        if not _where_holds(policy, env):
            continue
        evaluated_elements += 1
        span = getattr(element, "span", None)
        for assert_index, clause in enumerate(policy.asserts):
            outcome = _check_assert(policy, clause, env)
            if outcome is None:
                continue
            expected, actual, failed, error = outcome
            record = Violation(
                policy_id=policy.id,
                message=f"{render_value(actual)} != {render_value(expected)}",
                expected=expected,
                actual=actual,
                tier=policy.tier,
                element_index=element_index,
                assert_index=assert_index,
                span=span,
            )
            if error:
                diagnostics.append(record)
            elif failed:
                violations.append(record)

    if violations:
        status = STATUS_VIOLATED
    elif diagnostics:
        status = STATUS_EVAL_ERROR
    elif evaluated_elements == 0:
        status = STATUS_NOT_APPLICABLE
    else:
        status = STATUS_PASSED
    return PolicyResult(
        policy_id=policy.id,
        status=status,
        violations=tuple(violations),
        diagnostics=tuple(diagnostics),
    )


def evaluate_pack(policies: list[Policy], graph: PredicateGraph, output_id: str) -> Verdict:
    """Evaluate every policy in resolve_order. not_applicable counts as
    passed (a skipped policy has not failed); eval_error does not (a
    broken assert is a defect, not a pass)."""
    ordered = resolve_order(policies)
    results = tuple(evaluate_policy(policy, graph) for policy in ordered)
    violations: list[Violation] = []
    for result in results:
        merged = (*result.violations, *result.diagnostics)
        violations.extend(sorted(merged, key=lambda v: (v.element_index, v.assert_index)))
    passed = sum(1 for r in results if r.status in (STATUS_PASSED, STATUS_NOT_APPLICABLE))
    return Verdict(
        output_id=output_id,
        policies_evaluated=len(ordered),
        policies_passed=passed,
        violations=tuple(violations),
        results=results,
    )


def verdict_to_data(verdict: Verdict, details: bool = False) -> dict:
    data = {
        "output_id": verdict.output_id,
        "policies_evaluated": verdict.policies_evaluated,
        "policies_passed": verdict.policies_passed,
        "violations": [
            {
                "policy_id": v.policy_id,
                "message": v.message,
                "expected": v.expected,
                "actual": v.actual,
            }
            for v in verdict.violations
        ],
    }
    if details:
        data["details"] = [
            {
                "policy_id": r.policy_id,
                "status": r.status,
                "violations": [violation_to_data(v) for v in r.violations],
                "diagnostics": [violation_to_data(v) for v in r.diagnostics],
            }
            for r in verdict.results
        ]
    return data


def violation_to_data(violation: Violation) -> dict:
    data = {
        "policy_id": violation.policy_id,
        "message": violation.message,
        "expected": violation.expected,
        "actual": violation.actual,
        "tier": violation.tier,
        "element_index": violation.element_index,
        "assert_index": violation.assert_index,
    }
    if violation.span is not None:
        data["span"] = {"start": violation.span.start, "end": violation.span.end}
    return data


def serialize_verdict(verdict: Verdict, details: bool = False) -> str:
    return canonical_json(verdict_to_data(verdict, details=details))


# --- internals ---------------------------------------------------------------


def _scoped_elements(policy: Policy, graph: PredicateGraph):
    kind = policy.scope.kind
    if kind == "output":
        yield 0, graph
        return
    collection = getattr(graph, KIND_TO_COLLECTION[kind])
    for index, element in enumerate(collection):
        if _filter_matches(policy.scope.filter, element):
            yield index, element


def _filter_matches(filter_: dict, element) -> bool:
    for key, literal in filter_.items():
        if not values_equal(getattr(element, key, None), literal):
            return False
    return True


def _where_holds(policy: Policy, env: EvalEnv) -> bool:
    for clause in policy.where:
        try:
            value = eval_expr(clause.expr, env)
        except EvalError:
            return False
        if value is not True:
            return False
    return True


def _check_assert(policy: Policy, clause, env: EvalEnv):
    """Returns None when the assert holds, else (expected, actual,
    failed, error)."""
    expr = clause.expr
    sides = _equality_sides(expr, policy.scope.kind)
    if sides is not None:
        bound_side, free_side = sides
        try:
            actual = eval_expr(bound_side, env)
            expected = eval_expr(free_side, env)
        except EvalError as exc:
            return GENERIC_EXPECTED, f"eval error: {exc.kind} ({exc.detail})", False, True
        if values_equal(actual, expected):
            return None
        return plain_value(expected), plain_value(actual), True, False

    try:
        value = eval_expr(expr, env)
    except EvalError as exc:
        return GENERIC_EXPECTED, f"eval error: {exc.kind} ({exc.detail})", False, True
    if value is True:
        return None
    if value is False:
        return GENERIC_EXPECTED, render_value(value), True, False
    rendered = render_value(plain_value(value))
    return GENERIC_EXPECTED, f"eval error: TypeMismatch (assert returned {rendered})", False, True


def _equality_sides(expr: Expr, binding: str):
    """For a top-level `==` with exactly one side referencing the scoped
    element, return (bound side, free side); expected/actual extraction
    is well-defined only in that case."""
    if not (isinstance(expr, Binary) and expr.op == "=="):
        return None
    left_bound = _mentions_root(expr.left, binding)
    right_bound = _mentions_root(expr.right, binding)
    if left_bound and not right_bound:
        return expr.left, expr.right
    if right_bound and not left_bound:
        return expr.right, expr.left
    return None


def _mentions_root(expr: Expr, root: str) -> bool:
    return any(isinstance(node, Path) and node.root == root for node in walk(expr))
