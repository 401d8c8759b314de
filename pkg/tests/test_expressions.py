import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslergeo import diffcalc as dc
from finslergeo.errors import ConstructionError, ExpressionParseError
from finslergeo.expressions import (
    BinOp,
    Call,
    MetricSpec,
    Num,
    Var,
    build_structure,
    compile_expr,
    evaluate,
    parse,
)

# canonical-form corpus: pretty-print o parse must be the identity up to
# whitespace on all of these
CORPUS = [
    "sqrt(y1^2 + y2^2)",
    "x1 + x2*y1",
    "(x1 + x2)*y1",
    "1/3*y2",
    "1/3*x2",
    "sin(x1)^2",
    "cos(x1*x2) - sin(x2)",
    "exp(-x1)",
    "-x1 + y2",
    "x1 - (x2 - y1)",
    "x1 - x2 - y1",
    "abs(y1)/2",
    "cosh(t)^2*u2",
    "sqrt(1 + x1^2)",
    "y1^2^3",
    "(y1^2)^3",
    "2*y1*y2 + 3*y2^2",
    "x1/(x2 + 1)",
    "x1/x2/2",
    "-(x1 + x2)",
    "-sin(x1)",
    "150*y1",
    "0.25 + x1^4",
    "sqrt(x1^2 + x2^2 + y1^2 + y2^2)",
    "t^2/2",
    "u2*y2",
    "sin(cos(x1))",
    "exp(x1)*exp(x2)",
    "(x1 - 1)*(x1 + 1)",
    "y1/3 - y2/7",
    "2^x1",
    "x1^0.5",
    "abs(x1 - x2)",
    "cosh(x1) - 1",
    "(y1 + y2)^2",
    "sqrt(y1^2)",
    "1 - x1^2",
    "3.14159*x1",
    "x1*x2*y1*y2",
    "x1 + x2 + y1 + y2",
    "(x1 + 1)^2 - (x1 - 1)^2",
    "sin(x1)*cos(x2) + cos(x1)*sin(x2)",
    "1/(1 + exp(-x1))",
    "y2^2/(1 + x1^2)",
    "sqrt(abs(x1) + 1)",
    "-y1^2",
    "2*(x1 + x2)",
    "x1^2 + 2*x1*x2 + x2^2",
    "cos(t)^2 + sin(t)^2",
    "u2^2 - 1",
]


def _strip(text):
    return "".join(text.split())


@pytest.mark.parametrize("text", CORPUS)
def test_pretty_print_round_trip(text):
    assert _strip(str(parse(text, 2))) == _strip(text)


def test_euclidean_norm_expression():
    e = parse("sqrt(y1^2 + y2^2)", 2)
    assert evaluate(e, 2, [0.0, 0.0, 3.0, 4.0]) == pytest.approx(5.0)


def test_pond_wind_component_expression():
    # wind components are expressions over the base variables
    e = parse("(1/3)*x2", 2)
    assert evaluate(e, 2, [0.0, 1.0, 0.0, 0.0]) == pytest.approx(1.0 / 3.0)
    # fiber names parse too; the same shape over y-variables
    e2 = parse("(1/3)*y2", 2)
    assert evaluate(e2, 2, [0.0, 0.0, 0.0, 1.0]) == pytest.approx(1.0 / 3.0)


def test_unbalanced_parenthesis_positioned():
    with pytest.raises(ExpressionParseError) as err:
        parse("sqrt(y1^2", 2)
    assert err.value.position == len("sqrt(y1^2")


def test_unknown_identifier_positioned():
    with pytest.raises(ExpressionParseError) as err:
        parse("x1 + foo", 2)
    assert err.value.position == 5


def test_variable_index_out_of_range():
    with pytest.raises(ExpressionParseError):
        parse("y3", 2)
    with pytest.raises(ExpressionParseError):
        parse("u2", 1)
    parse("y3", 3)  # fine at dimension 3


def test_adapted_coordinate_aliases():
    e = parse("t + u2", 2)
    assert evaluate(e, 2, [1.5, 2.5, 0.0, 0.0]) == pytest.approx(4.0)


def test_power_right_associative():
    assert evaluate(parse("y1^2^3", 1), 1, [0.0, 2.0]) == pytest.approx(2.0 ** 8)
    assert evaluate(parse("(y1^2)^3", 1), 1, [0.0, 2.0]) == pytest.approx(2.0 ** 6)


def test_unary_minus_binds_tighter_than_subtraction():
    assert evaluate(parse("-x1^2", 1), 1, [3.0, 0.0]) == pytest.approx(-9.0)
    assert evaluate(parse("2 - -x1", 1), 1, [3.0, 0.0]) == pytest.approx(5.0)


def test_jet_lift_consistency():
    """Order-0 jet evaluation equals plain evaluation exactly."""
    import numpy as np

    rng = np.random.default_rng(3)
    for text in CORPUS[:25]:
        e = parse(text, 2)
        fn = compile_expr(e, 2)
        for _ in range(5):
            vals = [float(v) for v in rng.uniform(0.1, 1.4, 4)]
            try:
                plain = fn(vals)
            except Exception:
                continue
            lifted = fn(dc.lift(vals, 0))
            assert dc.constant_part(lifted) == plain


# -- totality: every input parses or raises a positioned error ----------------

@given(st.text(min_size=0, max_size=40))
@settings(max_examples=300, deadline=None)
def test_parse_is_total(text):
    try:
        parse(text, 2)
    except ExpressionParseError as err:
        assert 0 <= err.position <= len(text)


_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=9.0, allow_nan=False).map(
        lambda v: Num(round(v, 3))),
    st.sampled_from([Var("x1"), Var("x2"), Var("y1"), Var("y2"), Var("t")]),
)


def _expr_strategy():
    return st.recursive(
        _leaf,
        lambda children: st.one_of(
            st.tuples(st.sampled_from("+-*/"), children, children).map(
                lambda t: BinOp(t[0], t[1], t[2])),
            children.map(lambda e: Call("sin", e)),
            children.map(lambda e: Call("sqrt", e)),
        ),
        max_leaves=12,
    )


@given(_expr_strategy())
@settings(max_examples=150, deadline=None)
def test_print_parse_round_trip_structural(expr):
    assert parse(str(expr), 2) == expr


# -- metric specs --------------------------------------------------------------


def test_metric_spec_json_round_trip():
    spec = MetricSpec(kind="randers-zermelo", n=2,
                      params={"wind": ["-x2/3", "x1/3"], "domain_radius2": 8.9})
    again = MetricSpec.from_json(json.dumps(spec.to_dict()))
    assert again == spec


def test_metric_spec_unknown_kind_rejected():
    with pytest.raises(ValueError):
        MetricSpec(kind="hyperbolic-disk", n=2)


def test_build_euclidean():
    S = build_structure(MetricSpec(kind="euclidean", n=2))
    assert S.norm([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)


def test_build_sphere_polar_norm():
    S = build_structure(MetricSpec(kind="sphere-polar", n=2, params={"C": 1.0}))
    t = math.pi / 3
    a, b = 0.7, -0.4
    expected = math.sqrt(a * a + math.sin(t) ** 2 * b * b)
    assert S.norm([t, 0.2], [a, b]) == pytest.approx(expected, rel=1e-12)


def test_build_pond_from_spec():
    spec = MetricSpec(kind="randers-zermelo", n=2,
                      params={"wind": ["-x2/3", "x1/3"], "domain_radius2": 8.9})
    S = build_structure(spec)
    assert S.norm([1.0, 0.0], [0.0, -1.0]) == pytest.approx(1.5, rel=1e-12)


def test_build_pond_invalid_domain_rejected():
    spec = MetricSpec(kind="randers-zermelo", n=2,
                      params={"wind": ["-x2/3", "x1/3"], "domain_radius2": 12.25})
    with pytest.raises(ConstructionError):
        build_structure(spec)


def test_build_custom_f():
    spec = MetricSpec(kind="custom-F", n=2,
                      params={"F": "sqrt(y1^2 + 2*y2^2)"})
    S = build_structure(spec)
    assert S.norm([0.0, 0.0], [1.0, 1.0]) == pytest.approx(math.sqrt(3.0))
