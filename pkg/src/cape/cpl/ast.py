"""Expression AST.

Every node comes from a closed set — literals, dotted paths, `not`,
binary operators, and a fixed function table. Finite trees over these
node types terminate by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..values import render_number

BINARY_OPS = ("+", "-", "*", "/", "%", "==", "!=", "<", ">", "<=", ">=", "and", "or")
COMPARISON_OPS = ("==", "!=", "<", ">", "<=", ">=")
ORDERING_OPS = ("<", ">", "<=", ">=")

# Function name -> arity. any/all/filter take a predicate second argument
# in which the implicit variable `it` names the current element.
FUNCTIONS = {
    "any": 2,
    "all": 2,
    "filter": 2,
    "count": 1,
    "sum": 1,
    "min": 1,
    "max": 1,
    "first": 1,
    "last": 1,
    "contains": 2,
    "starts_with": 2,
    "matches": 2,
}
PREDICATE_FUNCTIONS = ("any", "all", "filter")


class Expr:
    """Base class for AST nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Literal(Expr):
    value: object


@dataclass(frozen=True)
class Path(Expr):
    root: str
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # only "not"
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple[Expr, ...]
    # Postfix member access on the call result, e.g. last(operations).output
    members: tuple[str, ...] = ()


def ast_size(expr: Expr) -> int:
    """Node count, member segments included."""
    if isinstance(expr, Literal):
        return 1
    if isinstance(expr, Path):
        return 1 + len(expr.members)
    if isinstance(expr, Unary):
        return 1 + ast_size(expr.operand)
    if isinstance(expr, Binary):
        return 1 + ast_size(expr.left) + ast_size(expr.right)
    if isinstance(expr, Call):
        return 1 + len(expr.members) + sum(ast_size(a) for a in expr.args)
    raise TypeError(f"not an Expr: {expr!r}")


def expr_depth(expr: Expr) -> int:
    if isinstance(expr, (Literal, Path)):
        return 1
    if isinstance(expr, Unary):
        return 1 + expr_depth(expr.operand)
    if isinstance(expr, Binary):
        return 1 + max(expr_depth(expr.left), expr_depth(expr.right))
    if isinstance(expr, Call):
        return 1 + max((expr_depth(a) for a in expr.args), default=0)
    raise TypeError(f"not an Expr: {expr!r}")


def quantifier_nesting(expr: Expr) -> int:
    """Deepest nesting of predicate-taking calls (any/all/filter); drives
    the declared step bound."""
    if isinstance(expr, (Literal, Path)):
        return 0
    if isinstance(expr, Unary):
        return quantifier_nesting(expr.operand)
    if isinstance(expr, Binary):
        return max(quantifier_nesting(expr.left), quantifier_nesting(expr.right))
    if isinstance(expr, Call):
        inner = max((quantifier_nesting(a) for a in expr.args), default=0)
        return inner + (1 if expr.fn in PREDICATE_FUNCTIONS else 0)
    raise TypeError(f"not an Expr: {expr!r}")


def unparse(expr: Expr) -> str:
    """Render an AST back to parseable source (fully parenthesized where
    precedence could bite); used in diagnostics and fuzz harnesses."""
    if isinstance(expr, Literal):
        return _literal_source(expr.value)
    if isinstance(expr, Path):
        return ".".join((expr.root, *expr.members))
    if isinstance(expr, Unary):
        return f"not ({unparse(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({unparse(expr.left)} {expr.op} {unparse(expr.right)})"
    if isinstance(expr, Call):
        args = ", ".join(unparse(a) for a in expr.args)
        suffix = "".join(f".{m}" for m in expr.members)
        return f"{expr.fn}({args}){suffix}"
    raise TypeError(f"not an Expr: {expr!r}")


def _literal_source(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"
    return render_number(value)


def walk(expr: Expr):
    """Yield every node, parents before children."""
    yield expr
    if isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from walk(arg)
