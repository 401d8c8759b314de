"""Exact partial derivatives on tangent charts via truncated-Taylor (jet)
arithmetic, with a central finite-difference oracle for cross-validation.

A :class:`Jet` stores Taylor coefficients of a scalar along one seeded
direction.  Mixed partials are obtained by nesting jets: each nesting level
carries one differentiation direction, and the coefficient of a value at one
level may itself be a jet of the next-inner level.  Scalars (``int``/``float``)
are valid coefficients at any level; a jet coefficient or seed must belong to
the same inner level as its siblings — the lift helpers below maintain this
invariant, and user code should only build jets through them.

All arithmetic is pure and re-entrant; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import (
    DomainError,
    InvalidStepError,
    SingularEvaluationError,
    UnsupportedOrderError,
)

MAX_ORDER = 4

_SCALARS = (int, float)


class Jet:
    """Truncated Taylor coefficients along a seeded direction.

    ``coeffs[k]`` is the k-th Taylor coefficient (not divided by k!... the
    plain series coefficient, i.e. the k-th derivative over k!).  The
    truncation order is ``len(coeffs) - 1``.  Arithmetic (+, -, *, /, sqrt,
    sin, cos, cosh, exp, integer power) is closed and exact to the truncation
    order; division and sqrt require a nonzero / positive constant term.
    """

    __slots__ = ("coeffs",)
    # Refuse numpy's ufunc protocol so float64 * Jet falls back to __rmul__.
    __array_ufunc__ = None

    def __init__(self, coeffs):
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        return cls([value] + [0.0] * order)

    @classmethod
    def variable(cls, value, order: int) -> "Jet":
        """Jet of the identity: constant term ``value``, unit seed."""
        if order < 1:
            raise UnsupportedOrderError("jet order must be at least 1")
        return cls([value, 1.0] + [0.0] * (order - 1))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __repr__(self):
        return f"Jet({self.coeffs!r})"

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        a = self.coeffs
        if isinstance(other, Jet):
            b = other.coeffs
            if len(a) == len(b):
                return Jet([x + y for x, y in zip(a, b)])
            la, lb = len(a), len(b)
            n = max(la, lb)
            return Jet([
                (a[k] if k < la else 0.0) + (b[k] if k < lb else 0.0)
                for k in range(n)
            ])
        out = a[:]
        out[0] = out[0] + other
        return Jet(out)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a = self.coeffs
        if isinstance(other, Jet):
            b = other.coeffs
            la, lb = len(a), len(b)
            if la == 2 and lb == 2:  # dominant case: order-1 lifts
                return Jet([a[0] * b[0], a[0] * b[1] + a[1] * b[0]])
            n = max(la, lb)
            out = []
            for k in range(n):
                s = 0.0
                for i in range(max(0, k - lb + 1), min(k, la - 1) + 1):
                    s = s + a[i] * b[k - i]
                out.append(s)
            return Jet(out)
        return Jet([c * other for c in a])

    __rmul__ = __mul__

    def __truediv__(self, other):
        a = self.coeffs
        if isinstance(other, Jet):
            b = other.coeffs
            if constant_part(other) == 0.0:
                raise SingularEvaluationError("jet division by zero constant term")
            la, lb = len(a), len(b)
            n = max(la, lb)
            out = []
            for k in range(n):
                s = a[k] if k < la else 0.0
                for i in range(k):
                    if k - i < lb:
                        s = s - out[i] * b[k - i]
                out.append(s / b[0])
            return Jet(out)
        return Jet([c / other for c in a])

    def __rtruediv__(self, other):
        return Jet([other] + [0.0] * self.order) / self

    def __pow__(self, p):
        if isinstance(p, int) or (isinstance(p, float) and p == int(p)):
            return integer_power(self, int(p))
        return exp(log(self) * p)


def constant_part(value):
    """The innermost (numeric) constant term of a possibly nested jet."""
    while isinstance(value, Jet):
        value = value.coeffs[0]
    return value


def coefficient(value, k: int):
    """k-th coefficient of ``value`` at its outermost level (0 for scalars
    beyond order zero)."""
    if isinstance(value, Jet):
        return value.coeffs[k] if k < len(value.coeffs) else 0.0
    return value if k == 0 else 0.0


def integer_power(value, p: int):
    if p < 0:
        return 1.0 / integer_power(value, -p)
    if p == 0:
        return 1.0
    result = None
    base = value
    while True:
        if p & 1:
            result = base if result is None else result * base
        p >>= 1
        if not p:
            return result
        base = base * base


def _compose(jet: Jet, derivatives) -> Jet:
    """Evaluate an analytic f on ``jet`` given f's derivative values at the
    constant term: f(c0 + h) = sum_k derivatives[k] h^k / k! truncated."""
    coeffs = jet.coeffs
    n = len(coeffs) - 1
    if n == 1:  # fast path for order-1 lifts
        return Jet([derivatives[0], derivatives[1] * coeffs[1]])
    h = Jet([0.0] + coeffs[1:])
    out = [derivatives[0]] + [0.0] * n
    hk = None
    fact = 1.0
    for k in range(1, n + 1):
        hk = h if hk is None else hk * h
        fact *= k
        w = derivatives[k] * (1.0 / fact) if isinstance(derivatives[k], Jet) else derivatives[k] / fact
        for i, c in enumerate(hk.coeffs):
            if i >= k:  # h^k has no coefficients below degree k
                out[i] = out[i] + c * w
    return Jet(out)


def sqrt(value):
    if not isinstance(value, Jet):
        if value <= 0.0:
            raise SingularEvaluationError("sqrt requires a positive argument")
        return math.sqrt(value)
    if constant_part(value) <= 0.0:
        raise SingularEvaluationError("jet sqrt requires a positive constant term")
    a = value.coeffs
    s0 = sqrt(a[0])
    n = len(a) - 1
    if n == 1:
        return Jet([s0, a[1] / (2.0 * s0)])
    out = [s0]
    for k in range(1, n + 1):
        s = a[k] if k < len(a) else 0.0
        for i in range(1, k):
            s = s - out[i] * out[k - i]
        out.append(s / (2.0 * s0))
    return Jet(out)


def exp(value):
    if not isinstance(value, Jet):
        return math.exp(value)
    e0 = exp(value.coeffs[0])
    return _compose(value, [e0] * (value.order + 1))


def log(value):
    if not isinstance(value, Jet):
        if value <= 0.0:
            raise SingularEvaluationError("log requires a positive argument")
        return math.log(value)
    if constant_part(value) <= 0.0:
        raise SingularEvaluationError("jet log requires a positive constant term")
    a0 = value.coeffs[0]
    l0 = log(a0)
    inv = 1.0 / a0
    derivs = [l0, inv]
    for k in range(2, value.order + 1):
        # d^k log = (-1)^(k-1) (k-1)! / a0^k
        derivs.append(derivs[-1] * inv * (-(k - 1)))
    return _compose(value, derivs)


def sin(value):
    if not isinstance(value, Jet):
        return math.sin(value)
    a0 = value.coeffs[0]
    s0, c0 = sin(a0), cos(a0)
    cycle = (s0, c0, -s0, -c0)
    return _compose(value, [cycle[k % 4] for k in range(value.order + 1)])


def cos(value):
    if not isinstance(value, Jet):
        return math.cos(value)
    a0 = value.coeffs[0]
    s0, c0 = sin(a0), cos(a0)
    cycle = (c0, -s0, -c0, s0)
    return _compose(value, [cycle[k % 4] for k in range(value.order + 1)])


def sinh(value):
    if not isinstance(value, Jet):
        return math.sinh(value)
    a0 = value.coeffs[0]
    s0, c0 = sinh(a0), cosh(a0)
    cycle = (s0, c0)
    return _compose(value, [cycle[k % 2] for k in range(value.order + 1)])


def cosh(value):
    if not isinstance(value, Jet):
        return math.cosh(value)
    a0 = value.coeffs[0]
    s0, c0 = sinh(a0), cosh(a0)
    cycle = (c0, s0)
    return _compose(value, [cycle[k % 2] for k in range(value.order + 1)])


def absolute(value):
    if not isinstance(value, Jet):
        return abs(value)
    c = constant_part(value)
    if c > 0.0:
        return value
    if c < 0.0:
        return -value
    raise SingularEvaluationError("abs is not differentiable at zero")


# -- scalar fields and lifts -------------------------------------------------


@dataclass
class ScalarField:
    """A deterministic scalar function of chart values, liftable to jets.

    ``evaluator`` receives a sequence of chart values (floats or jets, one per
    chart variable) and must be written in terms of the arithmetic in this
    module so that jet inputs propagate.  Lifting then truncating to order 0
    equals plain evaluation.
    """

    arity: int
    evaluator: Callable[[Sequence], object]
    smoothness_order: int = MAX_ORDER
    domain: Optional[Callable[[Sequence], bool]] = None
    label: str = ""

    def __call__(self, values):
        return self.evaluator(values)


def lift(values, direction, order: int = 1):
    """Wrap every chart value in a jet seeded along ``direction``.

    ``direction`` is either a variable index (unit seed) or a sequence of
    tangent components.  Components must be scalars or values of the same
    level as ``values``.
    """
    zeros = [0.0] * (order - 1)
    if isinstance(direction, int):
        return [
            Jet([v, 1.0 if i == direction else 0.0] + zeros)
            for i, v in enumerate(values)
        ]
    return [Jet([v, d] + zeros) for v, d in zip(values, direction)]


def nested_partial(evaluator, values, lifts):
    """Mixed partial of ``evaluator`` at ``values`` for a list of
    ``(direction, order)`` lifts.  Returns a value at the level of
    ``values`` — the workhorse behind :func:`partial` and the connection
    machinery (which calls it with jet-valued ``values``)."""
    current = list(values)
    for direction, order in lifts:
        current = lift(current, direction, order)
    result = evaluator(current)
    scale = 1.0
    for _, order in reversed(lifts):
        result = coefficient(result, order)
        scale *= math.factorial(order)
    return result * scale if scale != 1.0 else result


def directional_partial(evaluator, values, directions):
    """First-order mixed partial along a list of direction vectors/indices."""
    return nested_partial(evaluator, values, [(d, 1) for d in directions])


def _group_multi_index(multi_index):
    """Group a multi-index into (direction, order) runs, one lift per
    distinct direction in order of first appearance."""
    groups: list[list] = []
    for d in multi_index:
        for g in groups:
            if g[0] == d:
                g[1] += 1
                break
        else:
            groups.append([d, 1])
    return [(d, o) for d, o in groups]


def partial(field, point, multi_index, *, check_domain: bool = True):
    """Exact mixed partial of ``field`` at ``point`` for ``multi_index``
    (a list of chart-direction indices, repeats allowed, total order <= 4).
    """
    evaluator = field.evaluator if isinstance(field, ScalarField) else field
    arity = field.arity if isinstance(field, ScalarField) else len(point)
    order = len(multi_index)
    if order > MAX_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {order} exceeds the supported maximum {MAX_ORDER}"
        )
    if isinstance(field, ScalarField) and order > field.smoothness_order:
        raise UnsupportedOrderError(
            f"field {field.label!r} is only smooth to order {field.smoothness_order}"
        )
    for d in multi_index:
        if not 0 <= d < arity:
            raise ValueError(f"direction index {d} out of range for arity {arity}")
    values = [float(v) for v in point]
    if check_domain and isinstance(field, ScalarField) and field.domain is not None:
        if not field.domain(values):
            raise DomainError(f"point {values} outside the field domain")
    if order == 0:
        return evaluator(values)
    return nested_partial(evaluator, values, _group_multi_index(multi_index))


def fd_partial(field, point, multi_index, step: float = 1e-4,
               richardson: bool = True):
    """Central finite-difference estimate of the same mixed partial.

    Used in tests as an oracle independent of the jet path.  One Richardson
    extrapolation level is applied by default (the leading error of nested
    central differences is O(step^2)).
    """
    if step <= 0.0:
        raise InvalidStepError(f"finite-difference step must be positive, got {step}")
    evaluator = field.evaluator if isinstance(field, ScalarField) else field

    def estimate(h):
        def recurse(pt, mi):
            if not mi:
                return evaluator(pt)
            d, rest = mi[0], mi[1:]
            up = list(pt)
            up[d] += h
            down = list(pt)
            down[d] -= h
            return (recurse(up, rest) - recurse(down, rest)) / (2.0 * h)

        return recurse([float(v) for v in point], list(multi_index))

    if not multi_index:
        return evaluator([float(v) for v in point])
    if richardson:
        return (4.0 * estimate(step / 2.0) - estimate(step)) / 3.0
    return estimate(step)
