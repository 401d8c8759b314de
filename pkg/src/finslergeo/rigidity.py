"""Special second-order ODE solutions, polar-sphere and warped structures,
the adapted-coordinate block form, the Obata tensor residual and the
constant-curvature identity check.

A warped structure carries the metric form dt^2 + rho'(t)^2 f on a chart
(t, u2..un), where f is a constant-curvature metric on the t-levels.  For the
polar sphere with rho(t) = -cos(C t)/C this is the round n-sphere of radius
1/C; the numerical rigidity verdict is the conjunction of a constant-flag-
curvature scan, a vanishing Obata residual and the two-critical-point profile
classification (the topological statement itself is out of numerical reach).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import diffcalc as dc
from .connections import cartan_connection, constant_curvature_scan, contracted_curvature
from .core import (
    FinslerStructure,
    chart_values,
    euclidean_structure,
    fundamental_tensor,
    metric_matrix,
    _structure_from_f2,
)
from .diffcalc import ScalarField
from .errors import ConstructionError


# -- special solutions of rho'' = -K rho + B ------------------------------------


@dataclass(frozen=True)
class SpecialSolution:
    """Closed-form solution of rho'' + K rho - B = 0 with initial data
    (rho0, drho0) at t = 0, with derivative evaluators to order three."""

    K: float
    B: float
    rho0: float
    drho0: float

    def _parts(self):
        K, B = self.K, self.B
        if K > 0:
            offset = B / K
            return "trig", math.sqrt(K), offset, self.rho0 - offset, self.drho0
        if K < 0:
            offset = B / K
            return "hyper", math.sqrt(-K), offset, self.rho0 - offset, self.drho0
        return "poly", 0.0, 0.0, self.rho0, self.drho0

    def rho(self, t: float) -> float:
        kind, w, offset, a, b = self._parts()
        if kind == "trig":
            return offset + a * math.cos(w * t) + (b / w) * math.sin(w * t)
        if kind == "hyper":
            return offset + a * math.cosh(w * t) + (b / w) * math.sinh(w * t)
        return self.rho0 + self.drho0 * t + 0.5 * self.B * t * t

    d0 = rho

    def d1(self, t: float) -> float:
        kind, w, _, a, b = self._parts()
        if kind == "trig":
            return -a * w * math.sin(w * t) + b * math.cos(w * t)
        if kind == "hyper":
            return a * w * math.sinh(w * t) + b * math.cosh(w * t)
        return self.drho0 + self.B * t

    def d2(self, t: float) -> float:
        if self.K == 0.0:
            return self.B
        return self.B - self.K * self.rho(t)

    def d3(self, t: float) -> float:
        if self.K == 0.0:
            return 0.0
        return -self.K * self.d1(t)

    def residual(self, t: float) -> float:
        return abs(self.d2(t) + self.K * self.rho(t) - self.B)

    def critical_times(self, t_min: float, t_max: float) -> list[float]:
        """Zeros of rho' in [t_min, t_max] (closed forms per sign of K)."""
        kind, w, _, a, b = self._parts()
        if kind == "poly":
            if self.B == 0.0:
                return []  # rho' constant (zero only if trivial)
            t = -self.drho0 / self.B
            return [t] if t_min <= t <= t_max else []
        if kind == "trig":
            # rho' = -a w sin(wt) + b cos(wt) = R cos(wt + phase)
            if a == 0.0 and b == 0.0:
                return []
            phase = math.atan2(a * w, b)
            out = []
            k = math.floor((w * t_min + phase) / math.pi - 0.5)
            while True:
                t = ((k + 0.5) * math.pi - phase) / w
                if t > t_max + 1e-12:
                    break
                if t >= t_min - 1e-12:
                    out.append(t)
                k += 1
            return out
        # hyperbolic: at most one zero
        if a == 0.0 and b == 0.0:
            return []
        try:
            arg = -b / (a * w)
            t = math.atanh(arg) / w if abs(arg) < 1 else None
        except (ValueError, ZeroDivisionError):
            t = None
        return [t] if t is not None and t_min <= t <= t_max else []


def special_solution(K: float, B: float, rho0: float, drho0: float) -> SpecialSolution:
    """Closed form of rho'' = -K rho + B: harmonic plus offset for K > 0,
    quadratic for K = 0, hyperbolic for K < 0."""
    return SpecialSolution(K=float(K), B=float(B), rho0=float(rho0),
                           drho0=float(drho0))


@dataclass(frozen=True)
class WarpProfile:
    """rho(t) with derivatives to order three (the metric warp is rho')."""

    d0: Callable[[float], float]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    d3: Callable[[float], float]
    label: str = ""

    def rho(self, t: float) -> float:
        return self.d0(t)


def warp_profile_from_expression(warp_text: str, label: str = "") -> WarpProfile:
    """Profile whose rho' is the DSL expression ``warp_text`` in t; rho
    itself is left undefined (only derivatives enter the curvature tables)."""
    from .expressions import compile_expr, parse

    w = compile_expr(parse(warp_text, 1), 1)
    field_w = ScalarField(2, lambda vals: w(vals), label=label or warp_text)

    def missing(_t):
        raise ConstructionError(
            f"warp profile {label or warp_text!r} has no antiderivative attached"
        )

    return WarpProfile(
        d0=missing,
        d1=lambda t: float(w([t, 0.0])),
        d2=lambda t: dc.partial(field_w, [t, 0.0], [0]),
        d3=lambda t: dc.partial(field_w, [t, 0.0], [0, 0]),
        label=label or warp_text,
    )


# -- warped structures ------------------------------------------------------------


@dataclass(frozen=True)
class WarpedStructure:
    """Assembled structure ds^2 = dt^2 + rho'(t)^2 f on (t, u2..un)."""

    structure: FinslerStructure
    warp: object                    # SpecialSolution or WarpProfile
    base_structure: FinslerStructure  # level metric f on (u2..un)
    level_curvature: float
    t_range: tuple
    C: Optional[float] = None

    @property
    def n(self) -> int:
        return self.structure.n

    def rho_field(self) -> ScalarField:
        """The scalar field rho(x) = rho(t) pulled back through the chart."""
        warp = self.warp
        n = self.structure.n

        def evaluator(vals):
            t = vals[0]
            if isinstance(t, dc.Jet):
                # evaluate the closed form on the jet through its derivatives
                derivs = [warp.d0, warp.d1, warp.d2, warp.d3]
                t0 = dc.constant_part(t)
                return dc._compose(t, [d(t0) for d in derivs[: t.order + 1]])
            return warp.d0(t)

        return ScalarField(n, evaluator, label="warp pullback rho(t)")


def _warped_f2(n, warp_eval, base_f2):
    """F^2 = y1^2 + w(x1)^2 * base_F2(x2.., y2..)."""

    def f2(vals):
        y1 = vals[n]
        w = warp_eval(vals[0])
        base_vals = list(vals[1:n]) + list(vals[n + 1:2 * n])
        return y1 * y1 + w * w * base_f2(base_vals)

    return f2


def build_sphere_polar(C: float, n: int, base=None,
                       margin_fraction: float = 0.14) -> WarpedStructure:
    """ds^2 = dt^2 + sin^2(C t) f on t in (0, pi/C); with the default base
    this is the round n-sphere of radius 1/C in nested polar coordinates.

    ``base`` may be a MetricSpec for a custom level metric on (u2..un); it
    must have constant flag curvature C^2 for the curvature identities to
    hold (verified by scans, not assumed).
    """
    if C <= 0:
        raise ConstructionError(f"sphere-polar needs C > 0, got {C}")
    if n < 2:
        raise ConstructionError(f"sphere-polar needs dimension >= 2, got {n}")
    period = math.pi / C
    if base is not None:
        from .expressions import build_structure

        base_structure = build_structure(base)
        if base_structure.n != n - 1:
            raise ConstructionError(
                f"base level metric must have dimension {n - 1}, "
                f"got {base_structure.n}"
            )
    elif n == 2:
        base_structure = euclidean_structure(1)
    else:
        base_structure = build_sphere_polar(C, n - 1).structure

    warp = special_solution(K=C * C, B=0.0, rho0=-1.0 / C, drho0=0.0)

    def warp_eval(t):
        return dc.sin(C * t)

    f2 = _warped_f2(n, warp_eval, base_structure.F2.evaluator)
    m = margin_fraction * period
    bounds = [(m, period - m)] * (n - 1) + [(0.0, 2.0 * math.pi)]
    structure = _structure_from_f2(
        n, f2, label=f"sphere-polar(C={C:g}, n={n})",
        sample_bounds=tuple(bounds),
    )
    return WarpedStructure(structure=structure, warp=warp,
                           base_structure=base_structure,
                           level_curvature=C * C, t_range=(0.0, period), C=C)


_WARP_PROFILES = {
    "sin": lambda: WarpProfile(
        d0=lambda t: -math.cos(t), d1=math.sin, d2=math.cos,
        d3=lambda t: -math.sin(t), label="sin"),
    "cosh": lambda: WarpProfile(
        d0=math.sinh, d1=math.cosh, d2=math.sinh, d3=math.cosh, label="cosh"),
    "t": lambda: WarpProfile(
        d0=lambda t: 0.5 * t * t, d1=lambda t: t, d2=lambda t: 1.0,
        d3=lambda t: 0.0, label="t"),
}


def build_warped_structure(warp_text: str, n: int = 2,
                           t_range=(0.25, 1.45), label: str = "",
                           level_curvature: float = 0.0,
                           base=None) -> WarpedStructure:
    """Riemannian warped product dt^2 + w(t)^2 f for a named warp
    ("sin", "cosh", "t") or a DSL expression in t."""
    if warp_text in _WARP_PROFILES:
        profile = _WARP_PROFILES[warp_text]()
        warp_eval = {"sin": dc.sin, "cosh": dc.cosh, "t": lambda t: t}[warp_text]
    else:
        profile = warp_profile_from_expression(warp_text, label=label)
        from .expressions import compile_expr, parse

        compiled = compile_expr(parse(warp_text, 1), 1)

        def warp_eval(t):
            return compiled([t, 0.0])

    if base is not None:
        from .expressions import build_structure

        base_structure = build_structure(base)
    else:
        base_structure = euclidean_structure(n - 1)
    f2 = _warped_f2(n, warp_eval, base_structure.F2.evaluator)
    lo, hi = t_range
    bounds = [(lo, hi)] + [(-2.0, 2.0)] * (n - 1)
    structure = _structure_from_f2(
        n, f2, label=label or f"warped({profile.label})",
        sample_bounds=tuple(bounds),
    )
    return WarpedStructure(structure=structure, warp=profile,
                           base_structure=base_structure,
                           level_curvature=level_curvature,
                           t_range=tuple(t_range))


# -- Obata tensor residual ---------------------------------------------------------


def horizontal_hessian(S: FinslerStructure, rho: ScalarField, x, y) -> np.ndarray:
    """(nabla nabla rho)_ij = d_i d_j rho - (d_s rho) Gamma^s_ij for a
    y-independent scalar field rho on base points."""
    n = S.n
    xs = [float(v) for v in x]
    grad = np.array([dc.partial(rho, xs, [i]) for i in range(n)])
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            hess[i, j] = hess[j, i] = dc.partial(rho, xs, [i, j])
    gamma = cartan_connection(S, x, y).Gamma
    return hess - np.einsum("s,sij->ij", grad, gamma)


def hessian_vs_phi_residual(S: FinslerStructure, rho: ScalarField,
                            phi: Callable[[list], float], x, y) -> np.ndarray:
    """Residual nabla nabla rho - phi(x) g at (x, y)."""
    xs = [float(v) for v in x]
    g = metric_matrix(S, chart_values(x, y))
    return horizontal_hessian(S, rho, x, y) - phi(xs) * g


def obata_tensor_residual(W, rho: ScalarField, C: float, x, y) -> np.ndarray:
    """Residual matrix nabla nabla rho + C^2 rho g at (x, y); vanishes
    exactly on a round sphere of radius 1/C with rho = -cos(C t)/C."""
    S = W.structure if isinstance(W, WarpedStructure) else W
    xs = [float(v) for v in x]
    g = metric_matrix(S, chart_values(x, y))
    value = float(rho.evaluator(xs))
    return horizontal_hessian(S, rho, x, y) + C * C * value * g


# -- constant-curvature identity ----------------------------------------------------


@dataclass
class KFormReport:
    structure: str
    K_expected: float
    samples: int
    seed: int
    max_deviation: float

    def to_dict(self):
        return {
            "structure": self.structure,
            "K_expected": self.K_expected,
            "samples": self.samples,
            "seed": self.seed,
            "max_deviation": self.max_deviation,
        }


def k_form_check(S: FinslerStructure, K_expected: float, samples: int = 100,
                 seed: int = 42) -> KFormReport:
    """Compares the contracted curvature to the constant-curvature model
    R^i_k = K (F^2 delta^i_k - y^i y_k) with y_k = g_kj y^j."""
    S = S.structure if isinstance(S, WarpedStructure) else S
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x, y = S.sample_state(rng)
        value = contracted_curvature(S, x, y)
        g = metric_matrix(S, chart_values(x, y))
        yv = np.asarray(y, float)
        f2 = float(yv @ g @ yv)
        model = K_expected * (f2 * np.eye(S.n) - np.outer(yv, g @ yv))
        worst = max(worst, float(np.max(np.abs(value.R_jac - model))))
    return KFormReport(structure=S.label, K_expected=K_expected,
                       samples=samples, seed=seed, max_deviation=worst)


# -- adapted block form --------------------------------------------------------------


@dataclass
class BlockReport:
    structure: str
    samples: int
    seed: int
    max_g11_defect: float = 0.0
    max_off_block: float = 0.0
    max_warp_defect: float = 0.0
    witnesses: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.max_g11_defect < 1e-10 and self.max_off_block < 1e-10
                and self.max_warp_defect < 1e-8)

    def to_dict(self):
        return {
            "structure": self.structure,
            "samples": self.samples,
            "seed": self.seed,
            "max_g11_defect": self.max_g11_defect,
            "max_off_block": self.max_off_block,
            "max_warp_defect": self.max_warp_defect,
            "witnesses": self.witnesses,
            "passed": self.passed,
        }


def adapted_block_check(W, samples: int = 100, seed: int = 42,
                        structure: Optional[FinslerStructure] = None) -> BlockReport:
    """Asserts the adapted block form g_11 = 1, g_1b = 0 and
    g_ab = rho'(t)^2 f_ab at random states.  Pass ``structure`` to run the
    check against a different (e.g. deliberately perturbed) metric."""
    S = structure if structure is not None else W.structure
    base = W.base_structure
    warp = W.warp
    n = S.n
    rng = np.random.default_rng(seed)
    report = BlockReport(structure=S.label, samples=samples, seed=seed)
    for _ in range(samples):
        x, y = S.sample_state(rng)
        g = metric_matrix(S, chart_values(x, y))
        g11 = abs(g[0, 0] - 1.0)
        off = float(np.max(np.abs(g[0, 1:]))) if n > 1 else 0.0
        base_vals = list(map(float, x[1:])) + list(map(float, y[1:]))
        f = np.array(
            [[float(v) for v in row]
             for row in _base_matrix(base, base_vals)]
        )
        w = warp.d1(float(x[0]))
        warp_defect = float(np.max(np.abs(g[1:, 1:] - w * w * f))) if n > 1 else 0.0
        report.max_g11_defect = max(report.max_g11_defect, g11)
        report.max_off_block = max(report.max_off_block, off)
        report.max_warp_defect = max(report.max_warp_defect, warp_defect)
        if g11 > 1e-10 or off > 1e-10 or warp_defect > 1e-8:
            if len(report.witnesses) < 3:
                report.witnesses.append({
                    "x": [float(v) for v in x],
                    "y": [float(v) for v in y],
                    "g11_defect": g11,
                    "off_block": off,
                    "warp_defect": warp_defect,
                })
    return report


def _base_matrix(base: FinslerStructure, base_vals):
    from .core import metric_matrix_generic

    if all(v == 0.0 for v in base_vals[base.n:]):
        # level metric of a Riemannian base is y-independent; probe direction
        base_vals = list(base_vals[:base.n]) + [1.0] * base.n
    return metric_matrix_generic(base, base_vals)


# -- rigidity verdict ------------------------------------------------------------------


@dataclass
class RigidityVerdict:
    structure: str
    C: float
    scan_mean: float
    scan_deviation: float
    obata_residual_max: float
    classification: str
    verdict: str
    seed: int
    b_model_deviation: float

    def to_dict(self):
        return {
            "structure": self.structure,
            "C": self.C,
            "scan": {"mean": self.scan_mean, "dev": self.scan_deviation},
            "obata_residual_max": self.obata_residual_max,
            "classification": self.classification,
            "verdict": self.verdict,
            "seed": self.seed,
            "b_model_deviation": self.b_model_deviation,
        }


def rigidity_report(target, C: float, scan_samples: int = 200,
                    obata_samples: int = 100, seed: int = 42,
                    tolerances: Optional[dict] = None) -> RigidityVerdict:
    """Conjunction proxy for the positive-curvature rigidity statement:
    constant scan mean C^2, vanishing Obata residual for rho = -cos(Ct)/C,
    and a two-critical-point transnormal profile ("sphere" classification).
    """
    from .transnormal import TransnormalProfile, classify_by_critical_points, finsler_gradient

    tol = tolerances or {}
    S = target.structure if isinstance(target, WarpedStructure) else target
    scan = constant_curvature_scan(S, samples=scan_samples, seed=seed)

    rho = ScalarField(
        S.n, lambda vals: -dc.cos(C * vals[0]) / C, label="-cos(C t)/C"
    )
    rng = np.random.default_rng(seed + 1)
    obata_max = 0.0
    b_dev = 0.0
    for _ in range(obata_samples):
        x, y = S.sample_state(rng)
        res = obata_tensor_residual(S, rho, C, x, y)
        obata_max = max(obata_max, float(np.max(np.abs(res))))
    for _ in range(20):
        x = S.sample_base_point(rng)
        try:
            grad = finsler_gradient(S, rho, x)
        except Exception:
            b_dev = math.inf
            break
        value = float(rho.evaluator([float(v) for v in x]))
        b_dev = max(b_dev, abs(grad.multiplier ** 2 - (1.0 - C * C * value * value)))

    if b_dev <= tol.get("b_model", 1e-6):
        profile = TransnormalProfile(
            b=lambda s: 1.0 - C * C * s * s,
            value_range=(-1.0 / C, 1.0 / C),
            b_prime=lambda s: -2.0 * C * C * s,
            label=f"1 - {C*C:g} s^2",
        )
        classification = classify_by_critical_points(profile).label
    else:
        classification = "not-transnormal"

    passed = (
        abs(scan.mean_K - C * C) <= tol.get("scan_mean", 1e-4)
        and scan.max_deviation <= tol.get("scan_dev", 1e-4)
        and obata_max <= tol.get("obata", 2e-5)
        and classification == "sphere"
    )
    verdict = (f"finslerian-sphere: K={C*C:g}" if passed
               else f"not a finslerian sphere at C={C:g}")
    return RigidityVerdict(
        structure=S.label, C=C, scan_mean=scan.mean_K,
        scan_deviation=scan.max_deviation, obata_residual_max=obata_max,
        classification=classification, verdict=verdict, seed=seed,
        b_model_deviation=b_dev,
    )
