import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslergeo import diffcalc as dc
from finslergeo.diffcalc import Jet, ScalarField, fd_partial, partial
from finslergeo.errors import (
    DomainError,
    InvalidStepError,
    SingularEvaluationError,
    UnsupportedOrderError,
)
from finslergeo.presets import pond_structure

# smooth fields with closed-form partials, used across the oracle tests
CATALOG = [
    ScalarField(1, lambda v: v[0] * v[0] * v[0], label="u^3"),
    ScalarField(1, lambda v: dc.sin(v[0]), label="sin u"),
    ScalarField(1, lambda v: dc.sqrt(1.0 + v[0] * v[0]), label="sqrt(1+u^2)"),
    ScalarField(2, lambda v: dc.exp(0.3 * v[0]) * dc.cos(v[1]), label="exp cos"),
    ScalarField(2, lambda v: 1.0 / (1.0 + v[0] * v[0] + v[1] * v[1]), label="rational"),
    ScalarField(3, lambda v: dc.cosh(v[0]) * v[1] + dc.sin(v[1] * v[2]), label="mix3"),
    ScalarField(2, lambda v: dc.integer_power(v[0] + 2.0 * v[1], 4), label="(u+2v)^4"),
]

FD_STEPS = {1: 1e-4, 2: 1e-4, 3: 1e-3, 4: 4e-3}


def test_cubic_second_derivative():
    f = ScalarField(1, lambda v: v[0] ** 3)
    assert partial(f, [2.0], [0, 0]) == pytest.approx(12.0, abs=1e-12)


def test_constant_first_partial_is_zero():
    f = ScalarField(1, lambda v: 7.0)
    assert partial(f, [1.3], [0]) == 0.0


def test_pond_f2_fiber_partial_matches_fd(pond):
    point = [1.0, 0.0, 0.0, 1.0]
    exact = partial(pond.F2, point, [3])
    estimate = fd_partial(pond.F2, point, [3], step=1e-4)
    assert exact == pytest.approx(estimate, abs=1e-6)


def test_fd_sin_derivative():
    f = ScalarField(1, lambda v: dc.sin(v[0]))
    assert fd_partial(f, [0.0], [0], step=1e-4) == pytest.approx(1.0, abs=1e-7)


def test_fd_cubic_second_derivative():
    f = ScalarField(1, lambda v: v[0] ** 3)
    assert fd_partial(f, [2.0], [0, 0], step=1e-3) == pytest.approx(12.0, abs=1e-5)


def test_invalid_step_rejected():
    with pytest.raises(InvalidStepError):
        fd_partial(CATALOG[0], [1.0], [0], step=0.0)


def test_order_cap():
    with pytest.raises(UnsupportedOrderError):
        partial(CATALOG[0], [1.0], [0] * 5)


def test_domain_error():
    f = ScalarField(1, lambda v: dc.sqrt(v[0]), domain=lambda v: v[0] > 0)
    with pytest.raises(DomainError):
        partial(f, [-1.0], [0])


def test_singular_evaluation_at_fiber_origin(pond):
    with pytest.raises(SingularEvaluationError):
        partial(pond.F2, [1.0, 0.0, 0.0, 0.0], [2])


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_jet_vs_fd_oracle_on_catalog(seed):
    """|partial - fd_partial| relative: < 1e-5 for orders 1-3, < 1e-3 for 4."""
    rng = np.random.default_rng(seed)
    for _ in range(100):
        f = CATALOG[rng.integers(len(CATALOG))]
        point = rng.uniform(-0.9, 0.9, f.arity)
        order = int(rng.integers(1, 5))
        multi = [int(rng.integers(f.arity)) for _ in range(order)]
        exact = partial(f, point, multi)
        estimate = fd_partial(f, point, multi, step=FD_STEPS[order])
        tol = 1e-5 if order <= 3 else 1e-3
        assert exact == pytest.approx(estimate, rel=tol, abs=tol)


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_mixed_partials_commute(seed):
    rng = np.random.default_rng(seed)
    for _ in range(40):
        f = CATALOG[rng.integers(len(CATALOG))]
        if f.arity < 2:
            continue
        point = rng.uniform(-0.8, 0.8, f.arity)
        i, j = rng.integers(f.arity, size=2)
        forward = partial(f, point, [int(i), int(j)])
        backward = partial(f, point, [int(j), int(i)])
        assert forward == pytest.approx(backward, rel=1e-10, abs=1e-10)


def test_leibniz_rule():
    """partial of (f * g) equals the sum-rule expansion."""
    rng = np.random.default_rng(7)
    f = lambda v: dc.sin(v[0]) * v[1]
    g = lambda v: dc.exp(0.5 * v[0]) + v[1] * v[1]
    product = ScalarField(2, lambda v: f(v) * g(v))
    ff = ScalarField(2, f)
    gg = ScalarField(2, g)
    for _ in range(25):
        p = rng.uniform(-1, 1, 2)
        for d in (0, 1):
            lhs = partial(product, p, [d])
            rhs = partial(ff, p, [d]) * g(list(p)) + f(list(p)) * partial(gg, p, [d])
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
        # second order: (fg)'' = f''g + 2 f'g' + f g''
        for d in (0, 1):
            lhs = partial(product, p, [d, d])
            rhs = (partial(ff, p, [d, d]) * g(list(p))
                   + 2.0 * partial(ff, p, [d]) * partial(gg, p, [d])
                   + f(list(p)) * partial(gg, p, [d, d]))
            assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)


def test_composition_equals_lifted_composition():
    """Lifting a composed expression equals composing lifted expressions."""
    inner = lambda v: v[0] * v[0] + 0.5
    composed = ScalarField(1, lambda v: dc.sin(inner(v)))
    rng = np.random.default_rng(11)
    for _ in range(25):
        t = float(rng.uniform(-1.2, 1.2))
        for multi in ([0], [0, 0], [0, 0, 0]):
            jet_val = partial(composed, [t], multi)
            # analytic chain rule for sin(t^2 + 1/2)
            u = t * t + 0.5
            if len(multi) == 1:
                expected = math.cos(u) * 2 * t
            elif len(multi) == 2:
                expected = -math.sin(u) * (2 * t) ** 2 + math.cos(u) * 2
            else:
                expected = (-math.cos(u) * (2 * t) ** 3
                            - math.sin(u) * 3 * (2 * t) * 2)
            assert jet_val == pytest.approx(expected, rel=1e-12, abs=1e-12)


# -- jet ring properties -------------------------------------------------------

finite = st.floats(min_value=-10, max_value=10, allow_nan=False,
                   allow_infinity=False)


def _jet(coeffs):
    return Jet(list(coeffs))


@given(st.lists(finite, min_size=3, max_size=3),
       st.lists(finite, min_size=3, max_size=3),
       st.lists(finite, min_size=3, max_size=3))
@settings(max_examples=60, deadline=None)
def test_jet_ring_axioms(a, b, c):
    ja, jb, jc = _jet(a), _jet(b), _jet(c)
    left = (ja + jb) * jc
    right = ja * jc + jb * jc
    for u, v in zip(left.coeffs, right.coeffs):
        assert u == pytest.approx(v, rel=1e-9, abs=1e-9)
    comm = ja * jb
    comm2 = jb * ja
    for u, v in zip(comm.coeffs, comm2.coeffs):
        assert u == pytest.approx(v, rel=1e-12, abs=1e-12)


@given(st.lists(finite, min_size=4, max_size=4))
@settings(max_examples=60, deadline=None)
def test_jet_division_inverts_multiplication(a):
    ja = _jet(a)
    if abs(a[0]) < 1e-3:
        return
    jb = _jet([2.0, -1.0, 0.5, 0.25])
    quotient = (ja * jb) / jb
    for u, v in zip(quotient.coeffs, ja.coeffs):
        assert u == pytest.approx(v, rel=1e-8, abs=1e-8)


@given(st.lists(st.floats(min_value=0.5, max_value=5.0), min_size=4, max_size=4))
@settings(max_examples=60, deadline=None)
def test_jet_sqrt_squares_back(a):
    ja = _jet(a)
    root = dc.sqrt(ja)
    squared = root * root
    for u, v in zip(squared.coeffs, ja.coeffs):
        assert u == pytest.approx(v, rel=1e-9, abs=1e-9)


def test_jet_constant_has_zero_higher_coefficients():
    j = Jet.constant(4.2, order=3)
    assert j.coeffs == [4.2, 0.0, 0.0, 0.0]
    assert (j * j).coeffs[1:] == [0.0, 0.0, 0.0]


def test_jet_division_by_zero_constant_rejected():
    with pytest.raises(SingularEvaluationError):
        _jet([1.0, 1.0]) / _jet([0.0, 1.0])


def test_jet_sqrt_requires_positive_constant():
    with pytest.raises(SingularEvaluationError):
        dc.sqrt(_jet([-1.0, 1.0]))
    with pytest.raises(SingularEvaluationError):
        dc.sqrt(_jet([0.0, 1.0]))


def test_abs_matches_sign_and_rejects_zero():
    j = Jet.variable(-2.0, 1)
    assert dc.absolute(j).coeffs == [2.0, -1.0]
    with pytest.raises(SingularEvaluationError):
        dc.absolute(Jet.variable(0.0, 1))


def test_order_zero_lift_equals_plain_evaluation():
    for f in CATALOG:
        point = [0.3] * f.arity
        lifted = f.evaluator(dc.lift(point, 0))
        assert dc.constant_part(lifted) == pytest.approx(
            f.evaluator(point), rel=1e-15)
