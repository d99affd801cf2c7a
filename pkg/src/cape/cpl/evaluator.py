"""Deterministic, terminating expression evaluation.

Evaluation is a pure tree walk over immutable inputs — same expression,
same environment, same Value (or same EvalError), every time. A step
counter enforces the declared bound

    steps <= 8 * |AST| * (L + 1) ** (q + 1)

where L is the longest graph collection and q the quantifier-nesting
depth of the expression; for expressions without nested quantifiers this
collapses to a small constant times |AST| * (L + 1). Exceeding the bound
raises StepLimitExceeded, which indicates an engine bug, not a policy
bug: the termination suite fuzzes random expressions against the bound.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields as dataclass_fields
from fractions import Fraction

from ..errors import EvalError, EvalErrorKind, StepLimitExceeded
from ..graph import COLLECTIONS, PredicateGraph, Span
from ..values import is_number, values_equal
from .ast import Binary, Call, Expr, Literal, Path, Unary, ast_size, quantifier_nesting

STEP_FACTOR = 8

_ELEMENT_FIELDS = {
    cls: tuple(f.name for f in dataclass_fields(cls)) for cls in COLLECTIONS.values()
}


@dataclass(frozen=True)
class EvalEnv:
    """Evaluation environment: the graph's collections are addressable by
    name; at most one scoped element is bound under its singular kind
    name (`output` binds the whole graph); `it` exists only inside
    predicate arguments."""

    graph: PredicateGraph
    binding_name: str | None = None
    binding_value: object = None


def declared_step_limit(expr: Expr, graph: PredicateGraph) -> int:
    longest = max((len(getattr(graph, name)) for name in COLLECTIONS), default=0)
    return STEP_FACTOR * ast_size(expr) * (longest + 1) ** (quantifier_nesting(expr) + 1)


def eval_expr(expr: Expr, env: EvalEnv):
    """Evaluate to a Value; raises EvalError with one of the four kinds
    (PathNotFound, TypeMismatch, DivisionByZero, EmptyCollection)."""
    value, _, _ = eval_expr_traced(expr, env)
    return value


def eval_expr_traced(expr: Expr, env: EvalEnv):
    """Like eval_expr but also reports (steps used, max recursion depth)
    so property tests can check the step bound and the recursion-depth
    invariant."""
    ev = _Evaluator(env, declared_step_limit(expr, env.graph))
    value = ev.eval(expr)
    return value, ev.steps, ev.max_depth


class _Evaluator:
    def __init__(self, env: EvalEnv, step_limit: int):
        self.env = env
        self.step_limit = step_limit
        self.steps = 0
        self.depth = 0
        self.max_depth = 0
        self.it_stack: list[object] = []

    def charge(self, amount: int = 1) -> None:
        self.steps += amount
        if self.steps > self.step_limit:
            raise StepLimitExceeded(f"evaluation exceeded {self.step_limit} steps")

    def eval(self, expr: Expr):
        self.depth += 1
        self.max_depth = max(self.max_depth, self.depth)
        try:
            self.charge()
            if isinstance(expr, Literal):
                return expr.value
            if isinstance(expr, Path):
                return self.eval_path(expr)
            if isinstance(expr, Unary):
                return self.eval_not(expr)
            if isinstance(expr, Binary):
                return self.eval_binary(expr)
            if isinstance(expr, Call):
                return self.eval_call(expr)
            raise TypeError(f"not an Expr: {expr!r}")
        finally:
            self.depth -= 1

    # --- paths ------------------------------------------------------------

    def eval_path(self, expr: Path):
        value = self.resolve_root(expr.root)
        return self.follow(value, expr.members, expr.root)

    def resolve_root(self, root: str):
        if root == "it":
            if not self.it_stack:
                raise EvalError(EvalErrorKind.PATH_NOT_FOUND, "'it' outside a predicate")
            return self.it_stack[-1]
        if self.env.binding_name is not None and root == self.env.binding_name:
            return self.env.binding_value
        if root in COLLECTIONS:
            return getattr(self.env.graph, root)
        raise EvalError(EvalErrorKind.PATH_NOT_FOUND, f"unknown root {root!r}")

    def follow(self, value, members: tuple[str, ...], trail: str):
        for member in members:
            value = self.member(value, member, trail)
            trail = f"{trail}.{member}"
        return value

    def member(self, value, name: str, trail: str):
        if isinstance(value, (list, tuple)):
            # Broadcast: member access on a list maps over its elements.
            self.charge(len(value))
            return tuple(self.member(item, name, trail) for item in value)
        if isinstance(value, PredicateGraph):
            if name in COLLECTIONS:
                return getattr(value, name)
            if name == "source_text":
                return value.source_text
            raise EvalError(EvalErrorKind.PATH_NOT_FOUND, f"{trail}.{name}")
        if isinstance(value, Span):
            if name in ("start", "end"):
                return getattr(value, name)
            raise EvalError(EvalErrorKind.PATH_NOT_FOUND, f"{trail}.{name}")
        element_fields = _ELEMENT_FIELDS.get(type(value))
        if element_fields is not None:
            if name in element_fields:
                return getattr(value, name)
            raise EvalError(EvalErrorKind.PATH_NOT_FOUND, f"{trail}.{name}")
        if isinstance(value, dict):
            if name in value:
                return value[name]
            raise EvalError(EvalErrorKind.PATH_NOT_FOUND, f"{trail}.{name}")
        raise EvalError(
            EvalErrorKind.TYPE_MISMATCH,
            f"{trail} is {type_name(value)}, cannot access member {name!r}",
        )

    # --- operators ----------------------------------------------------------

    def eval_not(self, expr: Unary):
        value = self.eval(expr.operand)
        if not isinstance(value, bool):
            raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"not requires boolean, got {type_name(value)}")
        return not value

    def eval_binary(self, expr: Binary):
        op = expr.op
        if op in ("and", "or"):
            # Short-circuit left to right; an error in an unevaluated
            # branch is never raised.
            left = self.require_bool(self.eval(expr.left), op)
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            return self.require_bool(self.eval(expr.right), op)

        left = self.eval(expr.left)
        right = self.eval(expr.right)
        if op == "==":
            return values_equal(left, right)
        if op == "!=":
            return not values_equal(left, right)
        if op in ("<", ">", "<=", ">="):
            return _ordered(op, left, right)
        return _arithmetic(op, left, right)

    def require_bool(self, value, op: str) -> bool:
        if not isinstance(value, bool):
            raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"{op} requires booleans, got {type_name(value)}")
        return value

    # --- functions ----------------------------------------------------------

    def eval_call(self, expr: Call):
        fn = expr.fn
        if fn in ("any", "all", "filter"):
            result = self.eval_quantifier(fn, expr)
        else:
            result = self.eval_simple_call(fn, expr)
        return self.follow(result, expr.members, f"{fn}(...)")

    def eval_quantifier(self, fn: str, expr: Call):
        coll = self.require_collection(self.eval(expr.args[0]), fn)
        pred = expr.args[1]
        kept = []
        for item in coll:
            self.charge()
            self.it_stack.append(item)
            try:
                ok = self.eval(pred)
            finally:
                self.it_stack.pop()
            if not isinstance(ok, bool):
                raise EvalError(
                    EvalErrorKind.TYPE_MISMATCH, f"{fn} predicate must return boolean, got {type_name(ok)}"
                )
            if fn == "any" and ok:
                return True
            if fn == "all" and not ok:
                return False
            if fn == "filter" and ok:
                kept.append(item)
        if fn == "any":
            return False
        if fn == "all":
            return True
        return tuple(kept)

    def eval_simple_call(self, fn: str, expr: Call):
        args = [self.eval(a) for a in expr.args]
        if fn == "count":
            coll = self.require_collection(args[0], fn)
            self.charge(len(coll))
            return len(coll)
        if fn == "sum":
            coll = self.require_collection(args[0], fn)
            self.charge(len(coll))
            total = 0
            for item in coll:
                if not is_number(item):
                    raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"sum over non-number {type_name(item)}")
                total += item
            return total
        if fn in ("min", "max"):
            coll = self.require_collection(args[0], fn)
            self.charge(len(coll))
            if not coll:
                raise EvalError(EvalErrorKind.EMPTY_COLLECTION, f"{fn} of empty collection")
            for item in coll:
                if not is_number(item):
                    raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"{fn} over non-number {type_name(item)}")
            return min(coll) if fn == "min" else max(coll)
        if fn in ("first", "last"):
            coll = self.require_collection(args[0], fn)
            if not coll:
                raise EvalError(EvalErrorKind.EMPTY_COLLECTION, f"{fn} of empty collection")
            return coll[0] if fn == "first" else coll[-1]
        if fn == "contains":
            return self.string_scan(args[0], args[1], lambda s, t: t in s, fn)
        if fn == "starts_with":
            return self.string_scan(args[0], args[1], lambda s, t: s.startswith(t), fn)
        if fn == "matches":
            pattern = compile_pattern(args[1])
            return self.string_scan(args[0], args[1], lambda s, _t: pattern.search(s) is not None, fn)
        raise TypeError(f"unknown function {fn!r}")

    def require_collection(self, value, fn: str):
        if not isinstance(value, (list, tuple)):
            raise EvalError(
                EvalErrorKind.TYPE_MISMATCH, f"{fn} requires a collection, got {type_name(value)}"
            )
        return value

    def string_scan(self, haystack, needle, test, fn: str) -> bool:
        """String builtins take a string haystack, or a list haystack with
        any-element semantics (so contains(code_blocks.content, "eval(")
        asks whether any block contains the needle)."""
        if not isinstance(needle, str):
            raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"{fn} needle must be a string")
        if isinstance(haystack, str):
            # Scanning is bounded by the (finite) string itself; the step
            # bound only accounts for AST size and collection lengths.
            self.charge(1)
            return test(haystack, needle)
        if isinstance(haystack, (list, tuple)):
            self.charge(len(haystack))
            for item in haystack:
                if not isinstance(item, str):
                    raise EvalError(
                        EvalErrorKind.TYPE_MISMATCH, f"{fn} over a collection requires string elements"
                    )
                if test(item, needle):
                    return True
            return False
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"{fn} haystack must be a string or collection")


def type_name(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if is_number(value):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "list"
    if isinstance(value, dict):
        return "map"
    return type(value).__name__


def _ordered(op: str, left, right) -> bool:
    both_numbers = is_number(left) and is_number(right)
    both_strings = isinstance(left, str) and isinstance(right, str)
    if not (both_numbers or both_strings):
        raise EvalError(
            EvalErrorKind.TYPE_MISMATCH,
            f"cannot order {type_name(left)} {op} {type_name(right)}",
        )
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    if op == "<=":
        return left <= right
    return left >= right


def _arithmetic(op: str, left, right):
    if not (is_number(left) and is_number(right)):
        raise EvalError(
            EvalErrorKind.TYPE_MISMATCH,
            f"arithmetic {op} needs numbers, got {type_name(left)} and {type_name(right)}",
        )
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        if right == 0:
            raise EvalError(EvalErrorKind.DIVISION_BY_ZERO, "division by zero")
        return Fraction(left) / right
    if op == "%":
        if not (_integral(left) and _integral(right)):
            raise EvalError(EvalErrorKind.TYPE_MISMATCH, "% is defined for integers only")
        if right == 0:
            raise EvalError(EvalErrorKind.DIVISION_BY_ZERO, "modulo by zero")
        return int(left) % int(right)
    raise TypeError(f"unknown operator {op!r}")


def _integral(value) -> bool:
    return isinstance(value, int) or value.denominator == 1


# --- regex subset -----------------------------------------------------------

_PATTERN_CACHE: dict[str, re.Pattern] = {}

_FORBIDDEN_PATTERN_PARTS = ("(?=", "(?!", "(?<", "(?P=", "(?(", "\\g")
_BACKREF_RE = re.compile(r"\\[1-9]")


def compile_pattern(pattern) -> re.Pattern:
    """Compile a matches() pattern restricted to a linear-time-friendly
    subset: no backreferences, no lookarounds, no conditionals, no nested
    unbounded repeats. Violations are TypeMismatch eval errors rather
    than crashes."""
    if not isinstance(pattern, str):
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, "matches pattern must be a string")
    cached = _PATTERN_CACHE.get(pattern)
    if cached is not None:
        return cached
    for part in _FORBIDDEN_PATTERN_PARTS:
        if part in pattern:
            raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"unsupported pattern construct {part!r}")
    if _BACKREF_RE.search(pattern):
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, "backreferences are not supported")
    if len(pattern) > 512:
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, "pattern too long")
    try:
        parsed = _parse_pattern(pattern)
    except re.error as exc:
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, f"invalid pattern: {exc}") from None
    if _has_nested_unbounded_repeat(parsed, False):
        raise EvalError(EvalErrorKind.TYPE_MISMATCH, "nested unbounded repeats are not supported")
    compiled = re.compile(pattern)
    _PATTERN_CACHE[pattern] = compiled
    return compiled


def _parse_pattern(pattern: str):
    try:
        from re import _parser as parser  # Python 3.11+
    except ImportError:
        import sre_parse as parser
    return parser.parse(pattern)


def _has_nested_unbounded_repeat(parsed, inside_repeat: bool) -> bool:
    for op, arg in parsed:
        name = str(op)
        if name in ("MAX_REPEAT", "MIN_REPEAT"):
            _min, _max, sub = arg
            unbounded = _max is None or _max > 64
            if unbounded and inside_repeat:
                return True
            if _has_nested_unbounded_repeat(sub, inside_repeat or unbounded):
                return True
        elif name == "SUBPATTERN":
            sub = arg[-1]
            if _has_nested_unbounded_repeat(sub, inside_repeat):
                return True
        elif name == "BRANCH":
            for branch in arg[1]:
                if _has_nested_unbounded_repeat(branch, inside_repeat):
                    return True
    return False
