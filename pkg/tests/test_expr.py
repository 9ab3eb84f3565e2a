import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerab.errors import DomainError, ExpressionError, ExpressionSyntaxError, UnknownIdentifier
from finslerab.expr import Binary, Const, ScalarField, Unary, Var, eval_field, parse, to_text
from finslerab.jet import JetSpace
from oracles import mp_partial


def val(text, x1=0.0, x2=0.0):
    return float(ScalarField.from_text(text).value(x1, x2))


@pytest.mark.parametrize(
    "text, point, expected",
    [
        ("x1^2 + x2^2", (1, 2), 5.0),
        ("2+3*4", (0, 0), 14.0),
        ("2^3^2", (0, 0), 512.0),
        ("-2^2", (0, 0), -4.0),
        ("2^-1", (0, 0), 0.5),
        ("(1+2)*3", (0, 0), 9.0),
        ("8/4/2", (0, 0), 1.0),
        ("7-2-1", (0, 0), 4.0),
        ("  x1 *\tx2 ", (3, 4), 12.0),
        ("pi", (0, 0), math.pi),
        ("e^x1", (2, 0), math.e**2),
        ("sqrt(x1) + log(x2) + atan(1)", (4, math.e), 2 + 1 + math.pi / 4),
        ("1.5e2 + .5", (0, 0), 150.5),
        ("x1^0.5", (9, 0), 3.0),
        ("x1^x2", (2, 3), 8.0),
    ],
)
def test_evaluation_examples(text, point, expected):
    assert val(text, *point) == pytest.approx(expected, rel=1e-14)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse("sin(q)")
    assert info.value.name == "q"


@pytest.mark.parametrize(
    "text, pos",
    [("1 +", 3), ("(x1", 3), ("x1 x2", 3), ("*2", 0), ("2 $ 3", 2), ("sin x1", 4), ("", 0), ("   ", 0)],
)
def test_syntax_errors_report_position(text, pos):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse(text)
    assert info.value.position == pos
    assert f"position {pos}" in str(info.value)


def test_unknown_function_name():
    with pytest.raises(UnknownIdentifier):
        parse("tanh(x1)")


def test_invalid_utf8_bytes():
    with pytest.raises(ExpressionSyntaxError):
        parse(b"x1 + \xff")


def test_overflowing_literal():
    with pytest.raises(ExpressionSyntaxError):
        parse("1e999")


def test_deep_nesting_is_a_syntax_error_not_a_crash():
    with pytest.raises(ExpressionSyntaxError):
        parse("(" * 50000 + "1" + ")" * 50000)


def test_eval_field_partials():
    j = eval_field(ScalarField.from_text("x1^2+x2^2"), JetSpace(2, 0), (1, 2))
    assert j.partial((1, 0, 0, 0)) == 2
    assert j.partial((2, 0, 0, 0)) == 2


def test_eval_field_linear_field():
    j = eval_field(ScalarField.from_text("-x2"), JetSpace(2, 0), (0.3, 0.7))
    assert j.value == -0.7
    assert j.partial((0, 1, 0, 0)) == -1


def test_eval_field_against_oracle():
    j = eval_field(ScalarField.from_text("exp(x1*x2)"), JetSpace(2, 0), (1, 1))
    for idx in JetSpace(2, 0).indices:
        ref = mp_partial(lambda a, b: mp.exp(a * b), (1, 1), idx[:2])
        assert j.partial(idx) == pytest.approx(ref, rel=1e-6)


def test_domain_error_names_subexpression():
    with pytest.raises(DomainError) as info:
        ScalarField.from_text("1 + log(x1 - 2)").value(1.0, 0.0)
    assert "log" in info.value.subexpression
    with pytest.raises(DomainError):
        ScalarField.from_text("(x1 - 1)^0.5").value(0.0, 0.0)
    with pytest.raises(DomainError):
        ScalarField.from_text("1/(x1-x1)").value(0.5, 0.0)


def test_constant_field_broadcasts():
    f = ScalarField.from_text("0.3")
    out = f.value(np.zeros(4), np.zeros(4))
    assert np.shape(out) == (4,) and np.all(out == 0.3)


# -- property tests ---------------------------------------------------------------------
leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Const),
    st.sampled_from(["x1", "x2"]).map(Var),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["neg", "sin", "cos", "exp", "log", "sqrt", "atan"]), children).map(
            lambda t: Unary(*t)
        ),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^"]), children, children).map(lambda t: Binary(*t)),
    )


asts = st.recursive(leaf, _extend, max_leaves=12)


@given(asts)
def test_round_trip_from_ast(node):
    assert parse(to_text(node)) == node


# grammar-valid text with minimal parentheses and random spacing
ws = st.sampled_from(["", " ", "  ", "\t"])


def _text_extend(children):
    return st.one_of(
        st.tuples(ws, st.sampled_from(["+", "-", "*", "/", "^"]), ws, children, children).map(
            lambda t: f"{t[3]}{t[0]}{t[1]}{t[2]}{t[4]}"
        ),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "atan"]), children).map(
            lambda t: f"{t[0]}({t[1]})"
        ),
        children.map(lambda c: f"({c})"),
        children.map(lambda c: f"-{c}"),
    )


texts = st.recursive(
    st.one_of(st.sampled_from(["x1", "x2", "pi", "e", "2", "0.5", "3e-2", ".25"])), _text_extend, max_leaves=10
)


@given(texts)
def test_round_trip_from_text(text):
    tree = parse(text)
    assert parse(to_text(tree)) == tree


@given(st.binary(max_size=64))
def test_parser_total_on_bytes(data):
    try:
        parse(data)
    except ExpressionError:
        pass


@given(st.text(alphabet="x12+-*/^().e pisnqrtlogcxa0987", max_size=40))
def test_parser_total_on_grammar_characters(text):
    try:
        parse(text)
    except ExpressionError:
        pass


@given(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=6, max_size=6),
    st.floats(-2, 2, allow_nan=False),
    st.floats(-2, 2, allow_nan=False),
)
def test_polynomial_evaluation(coeffs, x1, x2):
    c = coeffs
    text = f"{c[0]!r} + {c[1]!r}*x1 + {c[2]!r}*x2 + {c[3]!r}*x1^2 + {c[4]!r}*x1*x2 + {c[5]!r}*x2^2"
    direct = c[0] + c[1] * x1 + c[2] * x2 + c[3] * x1**2 + c[4] * x1 * x2 + c[5] * x2**2
    scale = sum(abs(v) for v in c) * (1 + abs(x1) + abs(x2)) ** 2
    assert abs(val(text, x1, x2) - direct) <= 1e-13 * (1 + scale)
