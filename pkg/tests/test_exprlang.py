"""Expression language: parsing, evaluation, round trips, fuzzing."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pstab.errors import (
    ArityMismatch,
    DomainError,
    ExprError,
    ExprSyntaxError,
    UnknownIdentifier,
)
from pstab.exprlang import (
    BinOp,
    Call,
    Num,
    Var,
    evaluate,
    free_variables,
    parse,
    pretty_print,
)

from reference_eval import ref_eval


def test_mul_tree_shape():
    tree = parse("0.05*cos(x)")
    assert tree == BinOp("*", Num(0.05), Call("cos", (Var("x"),)))


def test_sample_point_value():
    tree = parse("sin(2*x)*exp(-t)")
    assert evaluate(tree, x=math.pi / 4, t=0.0) == 1.0


def test_power_right_associative():
    assert evaluate(parse("2^3^2")) == 512.0


def test_pi_value():
    assert evaluate(parse("pi")) == 3.141592653589793


@pytest.mark.parametrize(
    "src,expected",
    [
        ("-2^2", -4.0),
        ("2^-3", 0.125),
        ("2*-3", -6.0),
        ("2-3-4", -5.0),
        ("2/4/2", 0.25),
        ("1+2*3", 7.0),
        ("(1+2)*3", 9.0),
        ("min(3, 1+1)", 2.0),
        ("max(-1, -2)", -1.0),
        ("abs(-3.5)", 3.5),
    ],
)
def test_arithmetic(src, expected):
    assert evaluate(parse(src)) == expected


def test_syntax_error_carries_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("1 + ")
    assert exc.value.offset == 4
    assert exc.value.expected


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("(1+2")
    assert exc.value.offset == 4


def test_trailing_input_rejected():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("1 2")
    assert exc.value.offset == 2


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as exc:
        parse("z + 1")
    assert exc.value.offset == 0


def test_arity_mismatch():
    with pytest.raises(ArityMismatch):
        parse("sin(1, 2)")
    with pytest.raises(ArityMismatch):
        parse("min(1)")


@pytest.mark.parametrize("src", ["log(-1)", "log(0)", "sqrt(-0.5)", "1/0"])
def test_domain_errors(src):
    with pytest.raises(DomainError):
        evaluate(parse(src))


def test_unbound_y_rejected():
    with pytest.raises(UnknownIdentifier):
        evaluate(parse("y"), x=0.0)
    assert evaluate(parse("y"), x=0.0, y=2.0) == 2.0


def test_free_variables():
    assert free_variables(parse("sin(x)*exp(-t)+pi")) == {"x", "t"}
    assert free_variables(parse("1+2")) == set()


# ---------------------------------------------------------------------------
# generated corpus: round trips and bit-exact agreement with the reference

def _corpus(count=200, seed=20260822):
    """Deterministic corpus of valid, everywhere-finite expression strings."""
    rng = random.Random(seed)

    def leaf():
        kind = rng.randrange(4)
        if kind == 0:
            return f"{rng.uniform(-4, 4):.3f}"
        if kind == 1:
            return rng.choice(["x", "y", "t"])
        if kind == 2:
            return "pi"
        return str(rng.randrange(0, 9))

    def build(depth):
        if depth == 0:
            return leaf()
        a, b = build(depth - 1), build(depth - 1)
        kind = rng.randrange(8)
        if kind == 0:
            return f"{a}+{b}"
        if kind == 1:
            return f"{a}-{b}"
        if kind == 2:
            return f"{a}*{b}"
        if kind == 3:
            return f"{a}/(1+abs({b}))"
        if kind == 4:
            fn = rng.choice(["sin", "cos", "tanh"])
            return f"{fn}({a})"
        if kind == 5:
            return rng.choice(
                [f"sqrt(abs({a}))", f"log(1.5+abs({a}))", f"exp(min({a}, 4))"]
            )
        if kind == 6:
            return f"(1+abs({a}))^{rng.choice(['0.5', '2', '-1', '3'])}"
        return f"-({a})" if rng.random() < 0.5 else f"({a})"

    return [build(rng.randrange(1, 4)) for _ in range(count)]


_POINTS = [
    (0.3, 0.7, 0.0),
    (1.25, 0.0, 0.5),
    (math.pi / 3, 2.0, 1.0),
    (-0.8, -1.5, 0.25),
]


def test_corpus_round_trip_structural_identity():
    for src in _corpus():
        tree = parse(src)
        assert parse(pretty_print(tree)) == tree, src


def test_corpus_bit_exact_against_reference():
    for src in _corpus():
        tree = parse(src)
        for x, y, t in _POINTS:
            got = evaluate(tree, x=x, y=y, t=t)
            want = ref_eval(src, x=x, y=y, t=t)
            assert got == want, (src, x, y, t)


def test_pretty_printed_corpus_bit_exact():
    # the printed form must evaluate identically too, not just reparse
    for src in _corpus(count=50, seed=7):
        printed = pretty_print(parse(src))
        for x, y, t in _POINTS:
            assert ref_eval(printed, x=x, y=y, t=t) == ref_eval(src, x=x, y=y, t=t)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=1024))
def test_fuzz_parser_total(source):
    try:
        tree = parse(source)
    except ExprError:
        return
    pretty_print(tree)


@settings(max_examples=150, deadline=None)
@given(
    st.text(
        alphabet="xyt0123456789.+-*/^(), pisincoexplgabmntaqr_eE",
        max_size=256,
    )
)
def test_fuzz_operator_soup(source):
    try:
        tree = parse(source)
    except ExprError:
        return
    assert parse(pretty_print(tree)) == tree
