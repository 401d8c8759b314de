"""A small expression language for metric, wind and scalar-field inputs.

Grammar (standard infix, ``^`` right-associative, function application by
parentheses)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?
    atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Variables on a chart of dimension n are ``x1..xn`` (base), ``y1..yn``
(fiber), plus the adapted-coordinate aliases ``t`` (= x1) and ``u2..un``
(= x2..xn).  The built-in functions are sqrt, sin, cos, cosh, exp and abs.

Parsing is total: every input yields an AST or an
:class:`~finslergeo.errors.ExpressionParseError` with a byte offset, never a
crash.  ASTs are immutable after construction and safe to share.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import diffcalc as dc
from .errors import ExpressionParseError

FUNCTIONS = {
    "sqrt": dc.sqrt,
    "sin": dc.sin,
    "cos": dc.cos,
    "cosh": dc.cosh,
    "exp": dc.exp,
    "abs": dc.absolute,
}


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    def __str__(self) -> str:
        return _format(self, 0)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


_PRECEDENCE = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_NEG_PRECEDENCE = 25


def _format(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Num):
        v = e.value
        text = str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
        return text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_format(e.arg, 0)})"
    if isinstance(e, Neg):
        inner = _format(e.operand, _NEG_PRECEDENCE)
        text = f"-{inner}"
        return f"({text})" if parent_prec > _NEG_PRECEDENCE else text
    if isinstance(e, BinOp):
        p = _PRECEDENCE[e.op]
        if e.op == "^":  # right-associative
            left = _format(e.left, p + 1)
            right = _format(e.right, p)
        else:
            left = _format(e.left, p)
            right = _format(e.right, p + 1)
        text = f"{left} {e.op} {right}" if e.op in "+-" else f"{left}{e.op}{right}"
        return f"({text})" if parent_prec > p else text
    raise TypeError(f"unknown Expr node {e!r}")


# -- tokenizer / parser -------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<symbol>[-+*/^()]))"
)

_VAR_RE = re.compile(r"^(x|y|u)(\d+)$")


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "ident" | "symbol" | "end"
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ExpressionParseError(
                f"unexpected character {text[bad_at]!r}", bad_at
            )
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], dimension: int):
        self.tokens = tokens
        self.index = 0
        self.n = dimension

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == text:
            return self.advance()
        found = repr(tok.text) if tok.text else "end of input"
        raise ExpressionParseError(f"expected {text!r}, found {found}", tok.position)

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionParseError(
                f"unexpected trailing input {tok.text!r}", tok.position
            )
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "symbol" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind == "symbol" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "number":
            return Num(float(tok.text))
        if tok.kind == "ident":
            name = tok.text
            if self.peek().kind == "symbol" and self.peek().text == "(":
                if name not in FUNCTIONS:
                    raise ExpressionParseError(
                        f"unknown function {name!r}", tok.position
                    )
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(name, arg)
            self._check_variable(name, tok.position)
            return Var(name)
        if tok.kind == "symbol" and tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = repr(tok.text) if tok.text else "end of input"
        raise ExpressionParseError(f"expected a value, found {found}", tok.position)

    def _check_variable(self, name: str, position: int) -> None:
        if name == "t":
            return
        m = _VAR_RE.match(name)
        if m is None:
            raise ExpressionParseError(f"unknown identifier {name!r}", position)
        prefix, index = m.group(1), int(m.group(2))
        lo = 2 if prefix == "u" else 1
        if not lo <= index <= self.n:
            raise ExpressionParseError(
                f"variable {name!r} out of range for dimension {self.n}", position
            )


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` on a chart of dimension ``n``; raises
    :class:`ExpressionParseError` with a byte offset on malformed input."""
    return _Parser(_tokenize(text), n).parse()


# -- evaluation ---------------------------------------------------------------


def variable_slot(name: str, n: int) -> int:
    """Chart slot of a variable name: x1..xn -> 0..n-1, y1..yn -> n..2n-1,
    t -> 0, u2..un -> 1..n-1."""
    if name == "t":
        return 0
    m = _VAR_RE.match(name)
    if m is None:
        raise ValueError(f"not a chart variable: {name!r}")
    prefix, index = m.group(1), int(m.group(2))
    if prefix == "x" or prefix == "u":
        return index - 1
    return n + index - 1


def compile_expr(e: Expr, n: int) -> Callable[[Sequence], object]:
    """Compile an AST into a closure over a chart-value sequence of length
    2n (positions x1..xn, y1..yn).  The closure accepts floats or jets."""
    if isinstance(e, Num):
        v = e.value
        return lambda vals: v
    if isinstance(e, Var):
        slot = variable_slot(e.name, n)
        return lambda vals: vals[slot]
    if isinstance(e, Neg):
        f = compile_expr(e.operand, n)
        return lambda vals: -f(vals)
    if isinstance(e, Call):
        f = compile_expr(e.arg, n)
        fn = FUNCTIONS[e.func]
        return lambda vals: fn(f(vals))
    if isinstance(e, BinOp):
        a = compile_expr(e.left, n)
        b = compile_expr(e.right, n)
        op = e.op
        if op == "+":
            return lambda vals: a(vals) + b(vals)
        if op == "-":
            return lambda vals: a(vals) - b(vals)
        if op == "*":
            return lambda vals: a(vals) * b(vals)
        if op == "/":
            return lambda vals: a(vals) / b(vals)
        if op == "^":
            if isinstance(e.right, Num) and e.right.value == int(e.right.value):
                p = int(e.right.value)
                return lambda vals: dc.integer_power(a(vals), p)
            return lambda vals: dc.exp(dc.log(a(vals)) * b(vals))
    raise TypeError(f"unknown Expr node {e!r}")


def evaluate(e: Expr, n: int, values: Sequence) -> object:
    return compile_expr(e, n)(values)


# -- metric specifications ----------------------------------------------------

KNOWN_KINDS = (
    "euclidean",
    "riemannian-diagonal",
    "randers-zermelo",
    "sphere-polar",
    "warped",
    "custom-F",
)


@dataclass
class MetricSpec:
    """Declarative description of a metric: ``{"kind", "n", "params"}``.

    ``params`` is kind-specific; expression-valued parameters are strings in
    the DSL above.  Consumed by :func:`build_structure` and the CLI config
    loader.
    """

    kind: str
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KNOWN_KINDS:
            raise ValueError(
                f"unknown metric kind {self.kind!r}; expected one of {KNOWN_KINDS}"
            )
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")

    @classmethod
    def from_dict(cls, data: dict) -> "MetricSpec":
        try:
            return cls(kind=data["kind"], n=int(data["n"]),
                       params=dict(data.get("params", {})))
        except KeyError as missing:
            raise ValueError(f"metric spec missing key {missing}") from None

    @classmethod
    def from_json(cls, text: str) -> "MetricSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "params": self.params}


def build_structure(spec: MetricSpec):
    """Build a :class:`~finslergeo.core.FinslerStructure` from a spec.

    Dispatches on ``kind``; randers-zermelo delegates to
    :func:`~finslergeo.core.randers_from_zermelo` and sphere-polar to
    :func:`~finslergeo.rigidity.build_sphere_polar`.
    """
    from . import core, rigidity

    n = spec.n
    p = spec.params
    if spec.kind == "euclidean":
        return core.euclidean_structure(n)
    if spec.kind == "riemannian-diagonal":
        exprs = [parse(text, n) for text in p["diag"]]
        return core.riemannian_diagonal_structure(n, exprs, label=p.get("label", ""))
    if spec.kind == "randers-zermelo":
        wind = [parse(text, n) for text in p["wind"]]
        data = core.ZermeloData(
            n=n,
            wind=[compile_expr(w, n) for w in wind],
            domain_radius2=p.get("domain_radius2"),
        )
        return core.randers_from_zermelo(data)
    if spec.kind == "sphere-polar":
        base = p.get("base")
        return rigidity.build_sphere_polar(
            C=float(p.get("C", 1.0)), n=n,
            base=MetricSpec.from_dict(base) if base else None,
        ).structure
    if spec.kind == "warped":
        return rigidity.build_warped_structure(
            warp_text=p["warp"], n=n,
            t_range=tuple(p.get("t_range", (-1.5, 1.5))),
            label=p.get("label", ""),
        ).structure
    if spec.kind == "custom-F":
        expr = parse(p["F"], n)
        return core.structure_from_f_expression(
            n, expr, domain_radius2=p.get("domain_radius2"),
            label=p.get("label", "custom-F"),
        )
    raise ValueError(f"unknown metric kind {spec.kind!r}")
