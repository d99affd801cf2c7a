"""CPL: the policy expression language and policy documents.

Closed, non-Turing-complete expression language (no user functions, no
recursion, no loops) with deterministic, terminating evaluation, plus the
policy format that carries it: id, tier, scope, where, assert,
on_violation. The concrete grammar ships in specs/cpl-grammar.ebnf.
"""

from .ast import Binary, Call, Expr, Literal, Path, Unary, ast_size, expr_depth, quantifier_nesting
from .evaluator import EvalEnv, declared_step_limit, eval_expr, eval_expr_traced
from .parser import parse_expr
from .policy import (
    ClauseExpr,
    LintWarning,
    Policy,
    Scope,
    ViolationAction,
    lint_policy,
    parse_policy,
    policy_from_data,
)

__all__ = [
    "Binary",
    "Call",
    "ClauseExpr",
    "EvalEnv",
    "Expr",
    "LintWarning",
    "Literal",
    "Path",
    "Policy",
    "Scope",
    "Unary",
    "ViolationAction",
    "ast_size",
    "declared_step_limit",
    "eval_expr",
    "eval_expr_traced",
    "expr_depth",
    "lint_policy",
    "parse_expr",
    "parse_policy",
    "policy_from_data",
    "quantifier_nesting",
]
