import pytest
from hypothesis import given, settings, strategies as st

from _strategies import exprs
from stepset import ALPHA, Builtin, Complement, ErrorKind, Intersect, ParseError, Union, format_expr, parse
from stepset.dsl import MAX_DEPTH


@pytest.mark.parametrize(
    "text, tree",
    [
        ("bh(0.05)", Builtin("bh", 0.05)),
        ("  HOLM ( alpha ) ", Builtin("holm", ALPHA)),
        ("topk(3)", Builtin("topk", None, 3)),
        ("topk(k=3)", Builtin("topk", None, 3)),
        ("intersect(bh(0.05), topk(3))", Intersect(Builtin("bh", 0.05), Builtin("topk", None, 3))),
        (
            "union(sidak_su(.1), complement(bh_sd(1e-1), alpha))",
            Union(Builtin("sidak_su", 0.1), Complement(Builtin("bh_sd", 0.1), ALPHA)),
        ),
    ],
)
def test_parses(text, tree):
    assert parse(text) == tree


def test_canonical_text():
    assert format_expr(parse("INTERSECT( bh(.05),topk(k=3) )")) == "intersect(bh(0.05), topk(3))"
    assert format_expr(parse("complement(holm(alpha), 1)")) == "complement(holm(alpha), 1.0)"


@pytest.mark.parametrize(
    "text, kind, span",
    [
        ("bh(0.05", ErrorKind.SYNTAX, (7, 7)),
        ("bh(0.05))", ErrorKind.SYNTAX, (8, 9)),
        ("bh 0.05", ErrorKind.SYNTAX, (3, 7)),
        ("bh(0.05) $", ErrorKind.SYNTAX, (9, 10)),
        ("", ErrorKind.SYNTAX, (0, 0)),
        ("fdr(0.05)", ErrorKind.UNKNOWN_BUILTIN, (0, 3)),
        ("union(bh(0.1))", ErrorKind.ARITY, (0, 14)),
        ("bh(0.1, 0.2)", ErrorKind.ARITY, (0, 12)),
        ("bh(1.5)", ErrorKind.PARAM_RANGE, (3, 6)),
        ("topk(0)", ErrorKind.PARAM_RANGE, (5, 6)),
        ("topk(2.5)", ErrorKind.PARAM_RANGE, (5, 8)),
        ("topk(alpha)", ErrorKind.SYNTAX, (5, 10)),
        ("union(bh(0.1), 0.2)", ErrorKind.SYNTAX, (15, 18)),
        ("complement(bh(0.1), holm(0.1))", ErrorKind.SYNTAX, (20, 29)),
    ],
)
def test_errors(text, kind, span):
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert exc.value.kind is kind
    assert exc.value.span == span


def test_error_is_value_error():
    with pytest.raises(ValueError):
        parse("bh(")


def test_depth_limit():
    deep = "complement(" * (MAX_DEPTH + 1) + "bh(0.1)" + ", 0.1)" * (MAX_DEPTH + 1)
    with pytest.raises(ParseError) as exc:
        parse(deep)
    assert exc.value.kind is ErrorKind.SYNTAX
    ok = "complement(" * (MAX_DEPTH - 1) + "bh(0.1)" + ", 0.1)" * (MAX_DEPTH - 1)
    parse(ok)


def test_bytes_input():
    assert parse(b"bh(0.05)") == Builtin("bh", 0.05)
    with pytest.raises(ParseError) as exc:
        parse(b"bh(\xff)")
    assert exc.value.span == (3, 4)


def test_non_ascii_digits_rejected():
    with pytest.raises(ParseError):
        parse("topk(٣)")


@settings(max_examples=300)
@given(exprs)
def test_round_trip(expr):
    text = format_expr(expr)
    assert parse(text) == expr
    assert format_expr(parse(text)) == text


@settings(max_examples=500)
@given(st.binary(max_size=80))
def test_arbitrary_bytes(data):
    try:
        parse(data)
    except ParseError:
        pass


@settings(max_examples=500)
@given(st.text(alphabet="bhtopk(),=.0123456789e-+ alpharsunion", max_size=60))
def test_near_miss_text(text):
    try:
        parse(text)
    except ParseError:
        pass
