"""Recursive-descent parser for CPL expressions.

Precedence, tightest first: member access, unary not, * / %, + -,
comparisons (non-associative), and, or. Comparisons are deliberately
non-associative: `a < b < c` is a parse error instead of a silent
surprise.
"""

from __future__ import annotations

from fractions import Fraction

from ..errors import ExprError
from .ast import Binary, Call, Expr, FUNCTIONS, Literal, Path, Unary

KEYWORDS = {"and", "or", "not", "true", "false", "null"}

_PUNCT = (
    "==", "!=", "<=", ">=",  # two-char first
    "<", ">", "+", "-", "*", "/", "%", "(", ")", ",", ".",
)


class _Token:
    __slots__ = ("kind", "text", "value", "offset")

    def __init__(self, kind: str, text: str, offset: int, value=None):
        self.kind = kind  # ident | number | string | punct | eof
        self.text = text
        self.value = value
        self.offset = offset


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("ident", source[i:j], i))
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            text = source[i:j]
            tokens.append(_Token("number", text, i, Fraction(text) if "." in text else int(text)))
            i = j
            continue
        if c in ("'", '"'):
            j = i + 1
            chars: list[str] = []
            while j < n and source[j] != c:
                if source[j] == "\\" and j + 1 < n:
                    esc = source[j + 1]
                    if esc in ("'", '"', "\\"):
                        chars.append(esc)
                    elif esc == "n":
                        chars.append("\n")
                    elif esc == "t":
                        chars.append("\t")
                    else:
                        raise ExprError(j, f"unknown escape \\{esc}", source)
                    j += 2
                else:
                    chars.append(source[j])
                    j += 1
            if j >= n:
                raise ExprError(i, "unterminated string literal", source)
            tokens.append(_Token("string", source[i : j + 1], i, "".join(chars)))
            i = j + 1
            continue
        for punct in _PUNCT:
            if source.startswith(punct, i):
                tokens.append(_Token("punct", punct, i))
                i += len(punct)
                break
        else:
            raise ExprError(i, f"unexpected character {c!r}", source)
    tokens.append(_Token("eof", "", n))
    return tokens


def parse_expr(source: str) -> Expr:
    """Parse one expression; raises ExprError(offset, reason) on unknown
    functions, arity mismatches, unbalanced parentheses, and malformed
    tokens."""
    parser = _Parser(source)
    expr = parser.or_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ExprError(tok.offset, f"unexpected token {tok.text!r}", source)
    return expr


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, tok: _Token, reason: str):
        raise ExprError(tok.offset, reason, self.source)

    def expect_punct(self, text: str) -> None:
        tok = self.peek()
        if tok.kind == "eof":
            self.fail(tok, "unexpected end of input")
        if tok.kind != "punct" or tok.text != text:
            self.fail(tok, f"expected {text!r}, found {tok.text!r}")
        self.advance()

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == text

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.at_keyword("or"):
            self.advance()
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.comparison()
        while self.at_keyword("and"):
            self.advance()
            left = Binary("and", left, self.comparison())
        return left

    def comparison(self) -> Expr:
        left = self.additive()
        tok = self.peek()
        if tok.kind == "punct" and tok.text in ("==", "!=", "<", ">", "<=", ">="):
            self.advance()
            return Binary(tok.text, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text in ("+", "-"):
                self.advance()
                left = Binary(tok.text, left, self.multiplicative())
            else:
                return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text in ("*", "/", "%"):
                self.advance()
                left = Binary(tok.text, left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        if self.at_keyword("not"):
            self.advance()
            return Unary("not", self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.primary()
        members: list[str] = []
        while self.at_punct("."):
            self.advance()
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(tok, "expected member name after '.'")
            if tok.text in KEYWORDS:
                self.fail(tok, f"keyword {tok.text!r} cannot be a member name")
            members.append(self.advance().text)
        if not members:
            return expr
        if isinstance(expr, Path):
            return Path(expr.root, expr.members + tuple(members))
        if isinstance(expr, Call):
            return Call(expr.fn, expr.args, expr.members + tuple(members))
        tok = self.peek()
        self.fail(tok, "member access applies to paths and calls only")

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "eof":
            self.fail(tok, "unexpected end of input")
        if tok.kind == "number":
            self.advance()
            return Literal(tok.value)
        if tok.kind == "string":
            self.advance()
            return Literal(tok.value)
        if tok.kind == "punct" and tok.text == "-":
            # Negative literal; binary minus never reaches primary position.
            self.advance()
            num = self.peek()
            if num.kind != "number":
                self.fail(num, "expected number after unary '-'")
            self.advance()
            return Literal(-num.value)
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            inner = self.or_expr()
            self.expect_punct(")")
            return inner
        if tok.kind == "ident":
            if tok.text == "true":
                self.advance()
                return Literal(True)
            if tok.text == "false":
                self.advance()
                return Literal(False)
            if tok.text == "null":
                self.advance()
                return Literal(None)
            if tok.text in ("and", "or", "not"):
                self.fail(tok, f"unexpected keyword {tok.text!r}")
            name = self.advance().text
            if self.at_punct("("):
                return self.call(name, tok)
            return Path(name)
        self.fail(tok, f"unexpected token {tok.text!r}")

    def call(self, name: str, name_tok: _Token) -> Expr:
        if name not in FUNCTIONS:
            self.fail(name_tok, f"unknown function {name!r}")
        self.expect_punct("(")
        args: list[Expr] = []
        if not self.at_punct(")"):
            args.append(self.or_expr())
            while self.at_punct(","):
                self.advance()
                args.append(self.or_expr())
        tok = self.peek()
        if tok.kind == "eof":
            self.fail(tok, "unexpected end of input")
        self.expect_punct(")")
        if len(args) != FUNCTIONS[name]:
            self.fail(name_tok, f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}")
        return Call(name, tuple(args))
