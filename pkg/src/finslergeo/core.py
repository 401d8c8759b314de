"""Finsler structures and their first-layer tensors.

The fundamental tensor is half the fiber Hessian of F^2, computed exactly via
jet arithmetic; the Cartan tensor is a quarter of the third fiber derivative.
Structures are immutable after construction and every evaluation here is pure
and re-entrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcalc as dc
from .diffcalc import ScalarField, nested_partial
from .errors import (
    ConstructionError,
    DomainError,
    MetricDegeneracyError,
    SingularEvaluationError,
)

PD_EIGENVALUE_FLOOR = 1e-10


def chart_values(x, y) -> list[float]:
    return [float(v) for v in x] + [float(v) for v in y]


@dataclass(frozen=True)
class FinslerStructure:
    """A Finsler norm evaluator on a chart.

    ``F`` and ``F2`` are scalar fields of arity 2n over (x1..xn, y1..yn);
    differentiation always goes through ``F2``.  ``domain`` is a predicate on
    base points (None means the whole chart); ``sample_bounds`` is the box
    random samplers draw base points from, kept inside the region where the
    structure is well conditioned.  F must only be evaluated for y != 0.
    """

    n: int
    F: ScalarField
    F2: ScalarField
    domain: Optional[Callable[[Sequence], bool]] = None
    label: str = ""
    sample_bounds: tuple = ()
    zermelo: Optional["ZermeloData"] = None

    def norm(self, x, y) -> float:
        return float(self.F.evaluator(chart_values(x, y)))

    def norm2(self, x, y) -> float:
        return float(self.F2.evaluator(chart_values(x, y)))

    def in_domain(self, x) -> bool:
        if self.domain is None:
            return True
        return bool(self.domain([float(v) for v in x]))

    # -- samplers (deterministic given the caller's rng) ---------------------

    def sample_base_point(self, rng) -> np.ndarray:
        bounds = self.sample_bounds or ((-1.5, 1.5),) * self.n
        for _ in range(1000):
            x = np.array([rng.uniform(lo, hi) for lo, hi in bounds])
            if self.in_domain(x):
                return x
        raise DomainError(
            f"could not sample a domain point of {self.label!r} in 1000 tries"
        )

    def sample_fiber_vector(self, rng, scale_range=(0.5, 1.5)) -> np.ndarray:
        y = rng.standard_normal(self.n)
        norm = np.linalg.norm(y)
        while norm < 1e-12:
            y = rng.standard_normal(self.n)
            norm = np.linalg.norm(y)
        return y / norm * rng.uniform(*scale_range)

    def sample_state(self, rng):
        return self.sample_base_point(rng), self.sample_fiber_vector(rng)


@dataclass(frozen=True)
class MetricTensorValue:
    """Fundamental tensor g_ij(x, y) with its inverse at a base state."""

    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    F_value: float
    euler_defect: float  # |g_ij y^i y^j - F^2|


@dataclass(frozen=True)
class CartanTensorValue:
    x: np.ndarray
    y: np.ndarray
    C: np.ndarray        # totally symmetric C_ijk
    C_mixed: np.ndarray  # C^i_jk = g^{ir} C_rjk
    contraction_defect: float  # max_k |C_ijk y^i|


@dataclass
class ZermeloData:
    """Navigation data: base Riemannian metric h, wind W with h(W, W) < 1.

    v1 restricts ``h`` to a constant matrix (None means Euclidean); the wind
    is a list of per-component callables over chart values whose first n
    entries are the base point.
    """

    n: int
    wind: list
    h: Optional[np.ndarray] = None
    domain_radius2: Optional[float] = None
    sample_bounds: tuple = ()
    label: str = "randers-zermelo"

    def wind_at(self, x) -> np.ndarray:
        vals = [float(v) for v in x] + [0.0] * self.n
        return np.array([float(w(vals)) for w in self.wind])

    def h_matrix(self) -> np.ndarray:
        return np.eye(self.n) if self.h is None else np.asarray(self.h, float)

    def lam_at(self, x) -> float:
        W = self.wind_at(x)
        return 1.0 - float(W @ self.h_matrix() @ W)


# -- metric tensor ------------------------------------------------------------


def metric_matrix_generic(S: FinslerStructure, vals):
    """Half the fiber Hessian of F^2 at possibly jet-valued chart values;
    returns a list-of-lists so jet entries survive."""
    n = S.n
    f2 = S.F2.evaluator
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        rows[i][i] = nested_partial(f2, vals, [(n + i, 2)]) * 0.5
        for j in range(i + 1, n):
            v = nested_partial(f2, vals, [(n + i, 1), (n + j, 1)]) * 0.5
            rows[i][j] = v
            rows[j][i] = v
    return rows


def metric_matrix(S: FinslerStructure, vals) -> np.ndarray:
    """Float fast path of :func:`metric_matrix_generic`."""
    return np.array(metric_matrix_generic(S, vals), dtype=float)


def _require_state(S: FinslerStructure, x, y) -> list[float]:
    vals = chart_values(x, y)
    n = S.n
    if all(v == 0.0 for v in vals[n:]):
        raise SingularEvaluationError(
            "the fundamental tensor is undefined at the fiber origin y = 0"
        )
    if S.domain is not None and not S.domain(vals[:n]):
        raise DomainError(f"base point {vals[:n]} outside the domain of {S.label!r}")
    return vals


def fundamental_tensor(S: FinslerStructure, x, y, *,
                       pd_floor: float = PD_EIGENVALUE_FLOOR) -> MetricTensorValue:
    """g_ij = 1/2 d^2 F^2 / dy^i dy^j at (x, y), with inverse and Euler
    identity diagnostics."""
    vals = _require_state(S, x, y)
    n = S.n
    g = metric_matrix(S, vals)
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] <= pd_floor * max(1.0, eigs[-1]):
        raise MetricDegeneracyError(
            f"fundamental tensor of {S.label!r} not positive definite at "
            f"x={vals[:n]}, y={vals[n:]}: min eigenvalue {eigs[0]:.3e}",
            eigenvalue=float(eigs[0]),
        )
    g_inv = np.linalg.inv(g)
    yv = np.array(vals[n:])
    f2 = float(S.F2.evaluator(vals))
    euler = abs(float(yv @ g @ yv) - f2)
    return MetricTensorValue(
        x=np.array(vals[:n]), y=yv, g=g, g_inv=g_inv,
        F_value=math.sqrt(max(f2, 0.0)), euler_defect=euler,
    )


def g_inner(S: FinslerStructure, x, y, u, v) -> float:
    """The bilinear form u^T g(x, y) v with reference direction y."""
    g = fundamental_tensor(S, x, y).g
    return float(np.asarray(u, float) @ g @ np.asarray(v, float))


def cartan_tensor(S: FinslerStructure, x, y) -> CartanTensorValue:
    """C_ijk = 1/4 d^3 F^2 / dy^i dy^j dy^k, plus the mixed form g^{ir} C_rjk."""
    vals = _require_state(S, x, y)
    n = S.n
    f2 = S.F2.evaluator
    C = np.empty((n, n, n))
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                lifts = dc._group_multi_index([n + i, n + j, n + k])
                v = nested_partial(f2, vals, lifts) * 0.25
                for perm in {(i, j, k), (i, k, j), (j, i, k),
                             (j, k, i), (k, i, j), (k, j, i)}:
                    C[perm] = v
    g_inv = fundamental_tensor(S, x, y).g_inv
    C_mixed = np.einsum("ir,rjk->ijk", g_inv, C)
    yv = np.array(vals[n:])
    contraction = float(np.max(np.abs(np.einsum("ijk,i->jk", C, yv))))
    return CartanTensorValue(x=np.array(vals[:n]), y=yv, C=C,
                             C_mixed=C_mixed, contraction_defect=contraction)


# -- constructors --------------------------------------------------------------


def _structure_from_f2(n, f2_eval, *, domain=None, label="", sample_bounds=(),
                       zermelo=None) -> FinslerStructure:
    def f_eval(vals):
        return dc.sqrt(f2_eval(vals))

    return FinslerStructure(
        n=n,
        F=ScalarField(2 * n, f_eval, label=f"{label} F"),
        F2=ScalarField(2 * n, f2_eval, label=f"{label} F^2"),
        domain=domain, label=label, sample_bounds=tuple(sample_bounds),
        zermelo=zermelo,
    )


def _structure_from_f(n, f_eval, *, domain=None, label="", sample_bounds=(),
                      zermelo=None) -> FinslerStructure:
    def f2_eval(vals):
        v = f_eval(vals)
        return v * v

    return FinslerStructure(
        n=n,
        F=ScalarField(2 * n, f_eval, label=f"{label} F"),
        F2=ScalarField(2 * n, f2_eval, label=f"{label} F^2"),
        domain=domain, label=label, sample_bounds=tuple(sample_bounds),
        zermelo=zermelo,
    )


def euclidean_structure(n: int) -> FinslerStructure:
    def f2_eval(vals):
        total = 0.0
        for v in vals[n:]:
            total = total + v * v
        return total

    return _structure_from_f2(n, f2_eval, label=f"euclidean-{n}d",
                              sample_bounds=((-2.0, 2.0),) * n)


def riemannian_diagonal_structure(n, diag_exprs, *, label="",
                                  sample_bounds=(), domain=None) -> FinslerStructure:
    """F^2 = sum_i a_i(x) y_i^2 for DSL expressions a_i over base variables."""
    from .expressions import compile_expr, Expr

    compiled = [
        compile_expr(e, n) if isinstance(e, Expr) else e for e in diag_exprs
    ]
    if len(compiled) != n:
        raise ConstructionError(
            f"need {n} diagonal entries, got {len(compiled)}"
        )

    def f2_eval(vals):
        total = 0.0
        for i, a in enumerate(compiled):
            yi = vals[n + i]
            total = total + a(vals) * yi * yi
        return total

    return _structure_from_f2(
        n, f2_eval, label=label or "riemannian-diagonal",
        sample_bounds=sample_bounds or ((-1.5, 1.5),) * n, domain=domain,
    )


def structure_from_f_expression(n, expr, *, domain_radius2=None,
                                label="custom-F") -> FinslerStructure:
    from .expressions import compile_expr

    f_eval = compile_expr(expr, n)
    domain, bounds = _disk_domain(n, domain_radius2)
    return _structure_from_f(n, f_eval, domain=domain, label=label,
                             sample_bounds=bounds)


def _disk_domain(n, radius2):
    if radius2 is None:
        return None, ((-1.5, 1.5),) * n
    r = math.sqrt(radius2)

    def predicate(x):
        return sum(v * v for v in x[:n]) < radius2

    side = r * 0.995
    return predicate, ((-side, side),) * n


def randers_from_zermelo(data: ZermeloData, *, validate: bool = True,
                         validation_samples: int = 400,
                         seed: int = 7) -> FinslerStructure:
    """The navigation norm F(y) = (sqrt(h(y,W)^2 + lam h(y,y)) - h(y,W)) / lam
    with lam = 1 - h(W,W); requires h(W,W) < 1 on the domain."""
    n = data.n
    wind = list(data.wind)
    h = data.h
    if h is not None:
        hmat = np.asarray(h, float)
        if hmat.shape != (n, n) or not np.allclose(hmat, hmat.T):
            raise ConstructionError("base metric h must be a symmetric n x n matrix")
        if np.linalg.eigvalsh(hmat)[0] <= 0:
            raise ConstructionError("base metric h must be positive definite")
        hrows = [list(map(float, row)) for row in hmat]
    else:
        hrows = None

    domain, bounds = _disk_domain(n, data.domain_radius2)
    if data.sample_bounds:
        bounds = tuple(data.sample_bounds)

    def f_eval(vals):
        y = vals[n:2 * n]
        W = [w(vals) for w in wind]
        if hrows is None:
            hyy = 0.0
            hyw = 0.0
            hww = 0.0
            for yi, wi in zip(y, W):
                hyy = hyy + yi * yi
                hyw = hyw + yi * wi
                hww = hww + wi * wi
        else:
            hyy = 0.0
            hyw = 0.0
            hww = 0.0
            for i in range(n):
                for j in range(n):
                    hij = hrows[i][j]
                    hyy = hyy + hij * y[i] * y[j]
                    hyw = hyw + hij * y[i] * W[j]
                    hww = hww + hij * W[i] * W[j]
        lam = 1.0 - hww
        return (dc.sqrt(hyw * hyw + lam * hyy) - hyw) / lam

    structure = _structure_from_f(
        n, f_eval, domain=domain, label=data.label,
        sample_bounds=bounds, zermelo=data,
    )

    if validate:
        rng = np.random.default_rng(seed)
        worst = 1.0
        for _ in range(validation_samples):
            x = structure.sample_base_point(rng)
            lam = data.lam_at(x)
            if lam < worst:
                worst = lam
            if lam <= 1e-9:
                witness = [round(float(v), 6) for v in x]
                raise ConstructionError(
                    f"h(W, W) >= 1 at sampled point x={witness}: "
                    f"lambda = {lam:.6g} <= 0, the navigation norm is not "
                    "positive definite there"
                )
    return structure


# -- validity report -----------------------------------------------------------


@dataclass
class StructureReport:
    """Max violations of the defining structure properties over a sample."""

    label: str
    samples: int
    seed: int
    max_positivity_violation: float = 0.0
    max_homogeneity_defect: float = 0.0      # relative, F(x, lam y) vs lam F
    max_g_homogeneity_defect: float = 0.0    # absolute, g(x, lam y) vs g
    min_eigenvalue: float = math.inf
    max_euler_defect: float = 0.0            # relative
    lambda_range: Optional[tuple] = None     # (min, max) of 1 - h(W,W), Zermelo only
    failures: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        tol = self.tolerances
        return (
            not self.failures
            and self.max_positivity_violation <= 0.0
            and self.max_homogeneity_defect < tol.get("homogeneity", 1e-9)
            and self.max_g_homogeneity_defect < tol.get("g_homogeneity", 1e-8)
            and self.min_eigenvalue > tol.get("eigenvalue_floor", PD_EIGENVALUE_FLOOR)
            and self.max_euler_defect < tol.get("euler", 1e-8)
        )

    def to_dict(self) -> dict:
        out = {
            "structure": self.label,
            "samples": self.samples,
            "seed": self.seed,
            "max_positivity_violation": self.max_positivity_violation,
            "max_homogeneity_defect": self.max_homogeneity_defect,
            "max_g_homogeneity_defect": self.max_g_homogeneity_defect,
            "min_eigenvalue": self.min_eigenvalue,
            "max_euler_defect": self.max_euler_defect,
            "failures": self.failures,
            "passed": self.passed,
        }
        if self.lambda_range is not None:
            out["lambda_range"] = list(self.lambda_range)
        return out


def verify_structure(S: FinslerStructure, count: int = 500, seed: int = 42,
                     sampler=None, tolerances: Optional[dict] = None) -> StructureReport:
    """Sampled check of positivity, 1-homogeneity of F, 0-homogeneity of g,
    positive definiteness and the Euler identity.  Failures are recorded in
    the report (with witnesses), never raised."""
    rng = np.random.default_rng(seed)
    report = StructureReport(label=S.label, samples=count, seed=seed,
                             tolerances=tolerances or {})
    lam_lo, lam_hi = math.inf, -math.inf
    for _ in range(count):
        x, y = sampler(rng) if sampler is not None else S.sample_state(rng)
        try:
            vals = chart_values(x, y)
            f = float(S.F.evaluator(vals))
            report.max_positivity_violation = max(
                report.max_positivity_violation, max(0.0, -f)
            )
            if f <= 0:
                report.failures.append(_witness("positivity", x, y, f))
                continue
            for lam in (0.5, 2.0, 10.0):
                f_scaled = S.norm(x, lam * np.asarray(y, float))
                defect = abs(f_scaled - lam * f) / (lam * f)
                report.max_homogeneity_defect = max(
                    report.max_homogeneity_defect, defect
                )
            g = metric_matrix(S, vals)
            eig_min = float(np.linalg.eigvalsh(g)[0])
            report.min_eigenvalue = min(report.min_eigenvalue, eig_min)
            if eig_min <= PD_EIGENVALUE_FLOOR:
                report.failures.append(_witness("positive-definiteness", x, y, eig_min))
            for lam in (0.5, 2.0):
                g_scaled = metric_matrix(
                    S, chart_values(x, lam * np.asarray(y, float)))
                report.max_g_homogeneity_defect = max(
                    report.max_g_homogeneity_defect,
                    float(np.max(np.abs(g_scaled - g))),
                )
            yv = np.asarray(y, float)
            euler = abs(float(yv @ g @ yv) - f * f) / (f * f)
            report.max_euler_defect = max(report.max_euler_defect, euler)
            if S.zermelo is not None:
                lam_here = S.zermelo.lam_at(x)
                lam_lo = min(lam_lo, lam_here)
                lam_hi = max(lam_hi, lam_here)
        except Exception as exc:  # witnesses, never crashes
            report.failures.append({
                "check": "evaluation-error",
                "x": [float(v) for v in x],
                "y": [float(v) for v in y],
                "error": f"{type(exc).__name__}: {exc}",
            })
    if S.zermelo is not None and lam_lo is not math.inf:
        report.lambda_range = (lam_lo, lam_hi)
    return report


def _witness(check, x, y, value):
    return {
        "check": check,
        "x": [float(v) for v in x],
        "y": [float(v) for v in y],
        "value": float(value),
    }
