from __future__ import annotations

from fractions import Fraction

import pytest

from cape.cpl.ast import Binary, Call, Literal, Path, Unary, ast_size, quantifier_nesting, unparse
from cape.cpl.parser import parse_expr
from cape.errors import ExprError


def test_count_comparison():
    expr = parse_expr("count(operations) > 0")
    assert expr == Binary(">", Call("count", (Path("operations"),)), Literal(0))


def test_not_parenthesized():
    assert parse_expr("not(false)") == Unary("not", Literal(False))


def test_unexpected_end_of_input():
    with pytest.raises(ExprError) as err:
        parse_expr("sum(")
    assert err.value.offset == 4
    assert "unexpected end of input" in err.value.reason


def test_calc_assert_shape():
    expr = parse_expr("tool_call.arguments.value == last(operations).output")
    assert expr == Binary(
        "==",
        Path("tool_call", ("arguments", "value")),
        Call("last", (Path("operations"),), ("output",)),
    )


def test_precedence_arithmetic_over_comparison():
    expr = parse_expr("1 + 2 * 3 == 7")
    assert expr == Binary(
        "==",
        Binary("+", Literal(1), Binary("*", Literal(2), Literal(3))),
        Literal(7),
    )


def test_precedence_comparison_over_and_or():
    expr = parse_expr("1 < 2 and 3 < 4 or false")
    assert expr == Binary(
        "or",
        Binary("and", Binary("<", Literal(1), Literal(2)), Binary("<", Literal(3), Literal(4))),
        Literal(False),
    )


def test_not_binds_tighter_than_multiplication():
    expr = parse_expr("not true and false")
    assert expr == Binary("and", Unary("not", Literal(True)), Literal(False))


def test_comparisons_do_not_chain():
    with pytest.raises(ExprError):
        parse_expr("1 < 2 < 3")


def test_negative_literal():
    assert parse_expr("-3.5") == Literal(Fraction(-35, 10))
    assert parse_expr("1 - 2") == Binary("-", Literal(1), Literal(2))


def test_decimal_literals_are_exact():
    assert parse_expr("7.095") == Literal(Fraction(7095, 1000))


def test_string_literals_both_quotes():
    assert parse_expr("'abc'") == Literal("abc")
    assert parse_expr('"a\'b"') == Literal("a'b")
    assert parse_expr(r"'a\'b'") == Literal("a'b")


def test_unknown_function():
    with pytest.raises(ExprError) as err:
        parse_expr("frist(operations)")
    assert "unknown function" in err.value.reason


def test_arity_mismatch():
    with pytest.raises(ExprError) as err:
        parse_expr("count(operations, claims)")
    assert "argument" in err.value.reason
    with pytest.raises(ExprError):
        parse_expr("any(operations)")


def test_unbalanced_parens():
    with pytest.raises(ExprError):
        parse_expr("(1 + 2")
    with pytest.raises(ExprError):
        parse_expr("1 + 2)")


def test_unterminated_string():
    with pytest.raises(ExprError) as err:
        parse_expr("'abc")
    assert "unterminated" in err.value.reason


def test_keywords_cannot_be_members():
    with pytest.raises(ExprError):
        parse_expr("operations.not")


def test_trailing_garbage():
    with pytest.raises(ExprError):
        parse_expr("1 + 2 ;")


def test_metrics_helpers():
    expr = parse_expr("any(operations, any(claims, it.text == 'x'))")
    assert quantifier_nesting(expr) == 2
    assert ast_size(expr) > 5


def test_unparse_round_trips():
    sources = [
        "count(operations) > 0",
        "tool_call.arguments.value == last(operations).output",
        "not(contains(code_blocks.content, 'eval('))",
        "any(claims, count(it.citation_ids) > 0)",
        "sum(operations.output) / 2 - 1",
        "-2.5 + 1 * 3 % 2",
    ]
    for source in sources:
        expr = parse_expr(source)
        assert parse_expr(unparse(expr)) == expr
