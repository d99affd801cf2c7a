"""Exact numbers and canonical JSON.

Numbers are exact rationals throughout the engine: a JSON literal like
7.095 is held as Fraction(7095, 1000), never a binary float, so value
comparisons in policies are exact (7.1 != 7.095 stays an inequality of
rationals). Canonical JSON gives every structure one byte representation:
keys sorted by code point, no whitespace, minimal string escaping, and
numbers rendered as their shortest exact decimal (or an "n/d" string when
the decimal does not terminate).
"""

from __future__ import annotations

import json
import re
from fractions import Fraction

# A Number is an int or a Fraction. A Value is any JSON-shaped tree of
# None/bool/Number/str/list/tuple/dict built from exact numbers.
Number = int | Fraction
Value = object

_RATIO_RE = re.compile(r"^-?[0-9]+/[1-9][0-9]*$")


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not valid JSON")


def _check_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise ValueError(f"duplicate object key {key!r}")
        seen.add(key)
    return dict(pairs)


def loads_exact(text: str):
    """Parse JSON with decimal literals kept exact.

    Floats become Fractions, ints stay ints, duplicate object keys and
    non-finite constants are rejected. Raises ValueError subclasses on
    malformed input; callers wrap those in their own error types.
    """
    return json.loads(
        text,
        parse_float=Fraction,
        parse_constant=_reject_constant,
        object_pairs_hook=_check_duplicate_keys,
    )


def is_number(value) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def is_ratio_string(value) -> bool:
    """True for strings shaped like the "n/d" rendering of a rational."""
    return isinstance(value, str) and _RATIO_RE.match(value) is not None


def has_terminating_decimal(value: Number) -> bool:
    if isinstance(value, int):
        return True
    d = value.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def render_number(value: Number) -> str:
    """Shortest exact decimal, or "n/d" when the decimal never terminates."""
    if isinstance(value, int):
        return str(value)
    if value.denominator == 1:
        return str(value.numerator)
    if not has_terminating_decimal(value):
        return f"{value.numerator}/{value.denominator}"
    # Scale to the minimal power of ten that clears the denominator.
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    digits = max(twos, fives)
    scaled = value.numerator * 10**digits // value.denominator
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled)).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def values_equal(a, b) -> bool:
    """Type-aware deep equality: booleans are not numbers, ints and
    Fractions are the same number when numerically equal, and values of
    different types are unequal (never an error)."""
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        return a_bool and b_bool and a == b
    if is_number(a) and is_number(b):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(v, b[k]) for k, v in a.items())
    return type(a) is type(b) and a == b


def canonical_json(value) -> str:
    """Serialize a Value tree deterministically.

    Floats are rejected outright: anything reaching serialization must
    already be exact.
    """
    parts: list[str] = []
    _write(value, parts)
    return "".join(parts)


def _write(value, parts: list[str]) -> None:
    if value is None:
        parts.append("null")
    elif isinstance(value, bool):
        parts.append("true" if value else "false")
    elif isinstance(value, int):
        parts.append(str(value))
    elif isinstance(value, Fraction):
        text = render_number(value)
        if "/" in text:
            parts.append(json.dumps(text))
        else:
            parts.append(text)
    elif isinstance(value, str):
        parts.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, float):
        raise TypeError(f"refusing to serialize inexact float {value!r}")
    elif isinstance(value, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(value):
            if i:
                parts.append(",")
            _write(item, parts)
        parts.append("]")
    elif isinstance(value, dict):
        parts.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                parts.append(",")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _write(value[key], parts)
        parts.append("}")
    else:
        raise TypeError(f"not a serializable value: {type(value).__name__}")


def render_value(value) -> str:
    """Human-oriented rendering for verdict messages: strings appear bare,
    everything else in canonical form (so 7.095 reads as 7.095)."""
    if isinstance(value, str):
        return value
    if isinstance(value, Fraction):
        return render_number(value)
    return canonical_json(value)


def exact_from_float(value: float) -> Fraction:
    """Interpret a float supplied by an in-process provider as the decimal
    its repr shows (repr is the shortest round-trip form, so 0.9 means
    9/10, not the underlying binary expansion)."""
    return Fraction(repr(value))


def ensure_exact(value):
    """Normalize a provider-supplied scalar to an exact Number."""
    if isinstance(value, bool) or not isinstance(value, (int, float, Fraction)):
        raise TypeError(f"expected a number, got {type(value).__name__}")
    if isinstance(value, float):
        return exact_from_float(value)
    return value
