from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from cape.values import (
    canonical_json,
    has_terminating_decimal,
    loads_exact,
    render_number,
    render_value,
    values_equal,
)
from tests._gen import random_decimal_literal


def test_loads_exact_keeps_decimals_exact():
    data = loads_exact('{"a": 7.095, "b": 7.1, "c": 3}')
    assert data["a"] == Fraction(7095, 1000)
    assert data["b"] == Fraction(71, 10)
    assert data["c"] == 3 and isinstance(data["c"], int)


def test_loads_exact_rejects_duplicate_keys_and_nan():
    with pytest.raises(ValueError):
        loads_exact('{"a": 1, "a": 2}')
    with pytest.raises(ValueError):
        loads_exact('{"a": NaN}')


@pytest.mark.parametrize(
    "value,expected",
    [
        (Fraction(7095, 1000), "7.095"),
        (Fraction(71, 10), "7.1"),
        (Fraction(1, 3), "1/3"),
        (Fraction(-1, 3), "-1/3"),
        (Fraction(5, 1), "5"),
        (Fraction(0), "0"),
        (Fraction(-3, 8), "-0.375"),
        (7, "7"),
        (Fraction(1, 200), "0.005"),
    ],
)
def test_render_number(value, expected):
    assert render_number(value) == expected


def test_terminating_detection():
    assert has_terminating_decimal(Fraction(1, 8))
    assert has_terminating_decimal(Fraction(3, 50))
    assert not has_terminating_decimal(Fraction(1, 3))
    assert not has_terminating_decimal(Fraction(1, 6))


def test_canonical_json_sorts_keys_and_renders_exact():
    value = {"b": Fraction(71, 10), "a": [True, None, "x"], "c": {"z": 1, "y": Fraction(1, 3)}}
    assert canonical_json(value) == '{"a":[true,null,"x"],"b":7.1,"c":{"y":"1/3","z":1}}'


def test_canonical_json_refuses_floats():
    with pytest.raises(TypeError):
        canonical_json({"x": 0.1})


def test_values_equal_is_type_aware():
    assert values_equal(Fraction(71, 10), Fraction(7100, 1000))
    assert values_equal(7, Fraction(7, 1))
    assert not values_equal(Fraction(71, 10), Fraction(7095, 1000))
    assert not values_equal(True, 1)
    assert not values_equal(0, False)
    assert not values_equal("7.1", Fraction(71, 10))
    assert values_equal((1, 2), [1, 2])
    assert not values_equal({"a": 1}, {"a": 2})
    assert not values_equal(None, 0)


def test_render_value_strings_are_bare():
    assert render_value("assertion true") == "assertion true"
    assert render_value(Fraction(7095, 1000)) == "7.095"
    assert render_value(False) == "false"


def test_decimal_literals_round_trip_verbatim_10k():
    rng = random.Random(20260811)
    for _ in range(10_000):
        literal = random_decimal_literal(rng)
        assert render_number(loads_exact(literal)) == literal


@given(st.fractions())
def test_render_parse_round_trip_any_fraction(value):
    text = render_number(value)
    if "/" in text:
        n, d = text.split("/")
        assert Fraction(int(n), int(d)) == value
    else:
        assert Fraction(text) == value
