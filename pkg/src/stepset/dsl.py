"""Parser and printer for the procedure composition language.

Grammar (names are case-insensitive, whitespace is ignored)::

    expr  := NAME '(' [arg (',' arg)*] ')'
    arg   := expr | NUMBER | 'alpha' | 'k' '=' INTEGER

    union(e, e)  intersect(e, e)  diff(e, e)  complement(e, level)
    bonferroni(level)  sidak_sd(level)  sidak_su(level)  holm(level)
    hochberg(level)  bh(level)  bh_sd(level)  topk(INTEGER | k=INTEGER)

where ``level`` is a number in [0, 1] or the symbol ``alpha``.
"""

import math
import re
from dataclasses import dataclass
from typing import List, Optional, Union as TUnion

from .algebra import (
    ALPHA,
    Builtin,
    Complement,
    Diff,
    ErrorKind,
    ExprError,
    Intersect,
    ProcedureExpr,
    Union,
    _Alpha,
)
from .core import BUILTINS

__all__ = ["ParseError", "parse", "format_expr", "MAX_DEPTH"]

MAX_DEPTH = 64

_COMBINATORS = {"union": Union, "intersect": Intersect, "diff": Diff}
_LEVELLED = tuple(n for n in BUILTINS if n != "topk")

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),=])
    """,
    re.VERBOSE | re.ASCII,
)


class ParseError(ExprError):
    pass


@dataclass(frozen=True)
class _Tok:
    type: str  # "number" | "name" | "punct" | "eof"
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class _Num:
    value: float
    text: str
    span: tuple


@dataclass(frozen=True)
class _Sym:
    span: tuple


@dataclass(frozen=True)
class _K:
    value: int
    span: tuple


def _integer(text: str, span) -> int:
    if not re.fullmatch(r"[0-9]+", text):
        raise ParseError(ErrorKind.PARAM_RANGE, f"k must be an integer, got {text}", span)
    if len(text) > 18:
        raise ParseError(ErrorKind.PARAM_RANGE, f"k={text} is too large", span)
    return int(text)


def _tokenize(text: str) -> List[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise ParseError(ErrorKind.SYNTAX, f"unexpected character {text[pos]!r}", (pos, pos + 1))
        if mt.lastgroup != "ws":
            toks.append(_Tok(mt.lastgroup, mt.group(), mt.start(), mt.end()))
        pos = mt.end()
    toks.append(_Tok("eof", "", len(text), len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.type != "eof":
            self.i += 1
        return tok

    def expect(self, punct: str) -> _Tok:
        tok = self.tok
        if tok.type != "punct" or tok.text != punct:
            found = "end of input" if tok.type == "eof" else repr(tok.text)
            raise ParseError(ErrorKind.SYNTAX, f"expected {punct!r}, found {found}", (tok.start, tok.end))
        return self.advance()

    def parse(self) -> ProcedureExpr:
        expr = self.call(0)
        if self.tok.type != "eof":
            tok = self.tok
            raise ParseError(ErrorKind.SYNTAX, f"trailing input {tok.text!r}", (tok.start, len(self.text)))
        return expr

    def call(self, depth: int) -> ProcedureExpr:
        tok = self.tok
        if tok.type != "name":
            found = "end of input" if tok.type == "eof" else repr(tok.text)
            raise ParseError(ErrorKind.SYNTAX, f"expected a procedure name, found {found}", (tok.start, tok.end))
        if depth >= MAX_DEPTH:
            raise ParseError(ErrorKind.SYNTAX, f"expression nested deeper than {MAX_DEPTH}", (tok.start, tok.end))
        self.advance()
        self.expect("(")
        args = []
        if not (self.tok.type == "punct" and self.tok.text == ")"):
            args.append(self.arg(depth))
            while self.tok.type == "punct" and self.tok.text == ",":
                self.advance()
                args.append(self.arg(depth))
        close = self.expect(")")
        return self.build(tok, args, (tok.start, close.end))

    def arg(self, depth: int):
        tok = self.tok
        if tok.type == "number":
            self.advance()
            return _Num(float(tok.text), tok.text, (tok.start, tok.end))
        if tok.type == "name":
            nxt = self.toks[self.i + 1]
            if nxt.type == "punct" and nxt.text == "(":
                return self.call(depth + 1)
            low = tok.text.lower()
            if low == "alpha":
                self.advance()
                return _Sym((tok.start, tok.end))
            if low == "k" and nxt.type == "punct" and nxt.text == "=":
                self.advance()
                self.advance()
                num = self.tok
                if num.type != "number":
                    raise ParseError(ErrorKind.SYNTAX, "expected an integer after 'k='", (num.start, num.end))
                self.advance()
                return _K(_integer(num.text, (num.start, num.end)), (tok.start, num.end))
            raise ParseError(ErrorKind.SYNTAX, f"unexpected name {tok.text!r}", (tok.start, tok.end))
        found = "end of input" if tok.type == "eof" else repr(tok.text)
        raise ParseError(ErrorKind.SYNTAX, f"expected an argument, found {found}", (tok.start, tok.end))

    def build(self, name_tok: _Tok, args, span) -> ProcedureExpr:
        name = name_tok.text.lower()
        name_span = (name_tok.start, name_tok.end)

        def arity(n: int):
            if len(args) != n:
                raise ParseError(ErrorKind.ARITY, f"{name} takes {n} argument(s), got {len(args)}", span)

        def procedure(a):
            if isinstance(a, (_Num, _Sym, _K)):
                raise ParseError(ErrorKind.SYNTAX, f"{name} expects a procedure here", a.span)
            return a

        if name in _COMBINATORS:
            arity(2)
            return _COMBINATORS[name](procedure(args[0]), procedure(args[1]), span=span)
        if name == "complement":
            arity(2)
            return Complement(procedure(args[0]), self.level(name, args[1]), span=span)
        if name == "topk":
            arity(1)
            a = args[0]
            if isinstance(a, _Num):
                a = _K(_integer(a.text, a.span), a.span)
            if not isinstance(a, _K):
                raise ParseError(ErrorKind.SYNTAX, "topk expects an integer k", getattr(a, "span", span))
            if a.value < 1:
                raise ParseError(ErrorKind.PARAM_RANGE, f"k must be at least 1, got {a.value}", a.span)
            return Builtin("topk", None, a.value, span=span)
        if name in _LEVELLED:
            arity(1)
            return Builtin(name, self.level(name, args[0]), span=span)
        raise ParseError(ErrorKind.UNKNOWN_BUILTIN, f"unknown procedure {name_tok.text!r}", name_span)

    @staticmethod
    def level(name: str, a) -> TUnion[float, _Alpha]:
        if isinstance(a, _Sym):
            return ALPHA
        if isinstance(a, _Num):
            if not (math.isfinite(a.value) and 0.0 <= a.value <= 1.0):
                raise ParseError(ErrorKind.PARAM_RANGE, f"level {a.text} outside [0, 1]", a.span)
            return a.value
        span = a.span if hasattr(a, "span") and a.span else None
        raise ParseError(ErrorKind.SYNTAX, f"{name} expects a level (number or alpha)", span)


def parse(text: TUnion[str, bytes]) -> ProcedureExpr:
    """Parse composition text into an expression tree; raises ParseError."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(ErrorKind.SYNTAX, "input is not valid UTF-8", (exc.start, exc.end)) from None
    return _Parser(text).parse()


def _format_level(level) -> str:
    return "alpha" if isinstance(level, _Alpha) else repr(float(level))


def format_expr(expr: ProcedureExpr) -> str:
    """Canonical text for ``expr``; ``parse(format_expr(e)) == e``."""
    if isinstance(expr, Builtin):
        if expr.name == "topk":
            return f"topk({expr.k})"
        return f"{expr.name}({_format_level(expr.level)})"
    if isinstance(expr, Complement):
        return f"complement({format_expr(expr.child)}, {_format_level(expr.level)})"
    for name, cls in _COMBINATORS.items():
        if isinstance(expr, cls):
            return f"{name}({format_expr(expr.left)}, {format_expr(expr.right)})"
    raise TypeError(f"not an expression node: {expr!r}")
