"""Finsler gradients via the Legendre transform, transnormality testing,
wavefront propagation radii, gradient integral curves, the second-derivative
law along horizontal geodesics, and the critical-point classification.

A scalar field rho is transnormal when g(grad rho, grad rho) is constant on
each level set, i.e. equals b(rho) for a profile function b >= 0.  Level sets
are then parallel wavefronts: the distance between levels a < c is
int_a^c ds / sqrt(b(s)), and unit-speed reparameterizations of gradient
integral curves are geodesics orthogonal to every level they cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcalc as dc
from .core import FinslerStructure, chart_values, metric_matrix
from .diffcalc import ScalarField
from .errors import (
    ConvergenceFailureError,
    CriticalPointError,
    DomainError,
    EmptyLevelError,
    FinslerError,
    InvalidProfileError,
    SingularEvaluationError,
)
from .geodesics import DEFAULT_STEP, GeodesicPath, integrate_geodesic

GRADIENT_TOLERANCE = 1e-12
MAX_NEWTON_ITERATIONS = 50


@dataclass(frozen=True)
class GradientValue:
    """Solution of the Legendre relation g_v(v, .) = d rho at a base point."""

    x: np.ndarray
    grad: np.ndarray
    multiplier: float   # F(x, grad) = dual norm of d rho
    residual: float     # max |g_grad(grad, .) - d rho|
    iterations: int


@dataclass
class TransnormalProfile:
    """The profile b with g(grad rho, grad rho) = b(rho), its value range,
    and the detected critical values (range endpoints where b vanishes)."""

    b: Callable[[float], float]
    value_range: tuple
    b_prime: Optional[Callable[[float], float]] = None
    rho: Optional[ScalarField] = None
    label: str = ""
    zero_tolerance: float = 1e-9

    def __post_init__(self):
        a, c = self.value_range
        if not a < c:
            raise InvalidProfileError(
                f"profile range must be increasing, got [{a}, {c}]"
            )

    def b_at(self, s: float) -> float:
        return float(self.b(s))

    def b_prime_at(self, s: float) -> float:
        if self.b_prime is not None:
            return float(self.b_prime(s))
        h = 1e-6 * max(1.0, abs(self.value_range[1] - self.value_range[0]))
        a, c = self.value_range
        lo, hi = max(a, s - h), min(c, s + h)
        return (self.b_at(hi) - self.b_at(lo)) / (hi - lo)

    @property
    def critical_values(self) -> tuple:
        a, c = self.value_range
        scale = max(1.0, abs(self.b_at(0.5 * (a + c))))
        return tuple(v for v in (a, c)
                     if abs(self.b_at(v)) <= self.zero_tolerance * scale)


# -- Finsler gradient -----------------------------------------------------------


def _drho(S: FinslerStructure, rho: ScalarField, xs) -> np.ndarray:
    return np.array([dc.partial(rho, xs, [j]) for j in range(S.n)])


def finsler_gradient(S: FinslerStructure, rho: ScalarField, x, *,
                     initial=None, tolerance: float = GRADIENT_TOLERANCE,
                     max_iterations: int = MAX_NEWTON_ITERATIONS) -> GradientValue:
    """Solve g_v(v, .) = d rho for v by damped Newton iteration.

    The Jacobian of the Legendre map is the fundamental tensor itself
    (Euler homogeneity), so each step solves g(x, v) dv = -residual; steps
    are halved until the residual decreases.  On Riemannian structures the
    map is linear and Newton converges in one step.
    """
    n = S.n
    xs = [float(v) for v in x]
    if S.domain is not None and not S.domain(xs):
        raise DomainError(f"point {xs} outside the domain of {S.label!r}")
    drho = _drho(S, rho, xs)
    scale = float(np.max(np.abs(drho)))
    if scale < 1e-300:
        raise CriticalPointError(f"d rho = 0 at x={xs}: gradient undefined")

    def legendre(v):
        vals = xs + [float(c) for c in v]
        return np.array([
            dc.nested_partial(S.F2.evaluator, vals, [(n + j, 1)]) * 0.5
            for j in range(n)
        ])

    if initial is not None:
        v = np.asarray(initial, dtype=float)
    else:
        g_ref = metric_matrix(S, xs + list(drho))
        v = np.linalg.solve(g_ref, drho)
    residual = legendre(v) - drho
    best = float(np.max(np.abs(residual)))
    iterations = 0
    while best > tolerance * scale:
        if iterations >= max_iterations:
            raise ConvergenceFailureError(
                f"Legendre solve did not converge in {max_iterations} "
                f"iterations at x={xs}", best_residual=best,
            )
        g = metric_matrix(S, xs + list(v))
        delta = np.linalg.solve(g, -residual)
        alpha = 1.0
        while True:
            candidate = v + alpha * delta
            try:
                cand_residual = legendre(candidate) - drho
                cand_norm = float(np.max(np.abs(cand_residual)))
            except (SingularEvaluationError, ZeroDivisionError):
                cand_norm = math.inf
            if cand_norm < best or alpha < 1e-6:
                break
            alpha *= 0.5
        v = v + alpha * delta
        residual = legendre(v) - drho
        best = float(np.max(np.abs(residual)))
        iterations += 1
    return GradientValue(
        x=np.array(xs), grad=v, multiplier=S.norm(xs, v),
        residual=best, iterations=iterations,
    )


# -- level-set sampling -----------------------------------------------------------


def sample_level_point(S: FinslerStructure, rho: ScalarField, level: float,
                       rng, max_tries: int = 200,
                       bisection_tolerance: float = 1e-10) -> np.ndarray:
    """A point on rho^{-1}(level) inside the domain: rejection sampling in
    the sample box, then projection to the level along the Euclidean raise
    of d rho with bisection."""
    bounds = S.sample_bounds or ((-1.5, 1.5),) * S.n
    span = math.sqrt(sum((hi - lo) ** 2 for lo, hi in bounds))

    def value(x):
        return float(rho.evaluator([float(v) for v in x]))

    for _ in range(max_tries):
        x0 = S.sample_base_point(rng)
        d = _drho(S, rho, list(map(float, x0)))
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            continue
        d = d / norm
        f0 = value(x0) - level
        if f0 == 0.0:
            return np.asarray(x0, float)
        grid = np.linspace(0.0, span, 160)
        direction = -math.copysign(1.0, f0)
        bracket = None
        previous = (0.0, f0)
        for s in grid[1:]:
            p = x0 + direction * s * d
            if not S.in_domain(p):
                break
            f = value(p) - level
            if f == 0.0:
                return p
            if f * previous[1] < 0.0:
                bracket = (previous[0], s)
                break
            previous = (s, f)
        if bracket is None:
            continue
        lo, hi = bracket
        flo = value(x0 + direction * lo * d) - level
        while hi - lo > bisection_tolerance:
            mid = 0.5 * (lo + hi)
            fm = value(x0 + direction * mid * d) - level
            if fm == 0.0:
                lo = hi = mid
                break
            if fm * flo < 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        p = x0 + direction * 0.5 * (lo + hi) * d
        if S.in_domain(p):
            return p
    raise EmptyLevelError(
        f"no point of level {level} found in the domain after {max_tries} tries"
    )


@dataclass
class LevelStatistics:
    level: float
    mean: float
    spread: float
    samples: int
    values: list

    def to_dict(self):
        return {"level": self.level, "mean": self.mean, "spread": self.spread,
                "samples": self.samples}


def transnormality_test(S: FinslerStructure, rho: ScalarField,
                        levels: Sequence[float], samples_per_level: int = 20,
                        seed: int = 42) -> list[LevelStatistics]:
    """Samples each level set and evaluates g(grad rho, grad rho); the field
    is transnormal on those levels iff the per-level spread is small."""
    rng = np.random.default_rng(seed)
    out = []
    for level in levels:
        values = []
        for _ in range(samples_per_level):
            p = sample_level_point(S, rho, level, rng)
            grad = finsler_gradient(S, rho, p)
            values.append(grad.multiplier ** 2)
        arr = np.array(values)
        out.append(LevelStatistics(
            level=float(level), mean=float(arr.mean()),
            spread=float(arr.max() - arr.min()), samples=len(values),
            values=[float(v) for v in values],
        ))
    return out


# -- wavefront radii ----------------------------------------------------------------


def wavefront_radius(profile: TransnormalProfile, a: float, c: float) -> float:
    """r = int_a^c ds / sqrt(b(s)) by adaptive quadrature; an endpoint where
    b vanishes to first order is handled by the substitution s = a + u^2
    (resp. s = c - u^2), which removes the integrable singularity."""
    from scipy.integrate import quad

    if not c > a:
        raise InvalidProfileError(f"need a < c, got a={a}, c={c}")
    b = profile.b_at
    samples = np.linspace(a, c, 513)
    values = np.array([b(s) for s in samples])
    scale = float(np.max(np.abs(values))) or 1.0
    interior = values[1:-1]
    if np.any(interior <= 0.0):
        witness = float(samples[1:-1][np.argmin(interior)])
        raise InvalidProfileError(
            f"b must be positive on the open interval; b({witness:.6g}) = "
            f"{float(np.min(interior)):.3e}"
        )
    zero_tol = 1e-12 * scale

    def slope_at(endpoint, inward):
        # rate at which b rises moving into the interval; must be positive
        h = 1e-7 * (c - a)
        return (b(endpoint + inward * h) - b(endpoint)) / h

    total = 0.0
    mid = 0.5 * (a + c)
    # left half
    if abs(b(a)) <= zero_tol:
        slope = slope_at(a, +1.0)
        if slope <= zero_tol:
            raise InvalidProfileError(
                f"b({a}) = 0 with b'({a}) <= 0: the radius integral may diverge"
            )

        def left_integrand(u):
            if u == 0.0:
                return 2.0 / math.sqrt(slope)
            return 2.0 * u / math.sqrt(b(a + u * u))

        total += quad(left_integrand, 0.0, math.sqrt(mid - a),
                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    else:
        total += quad(lambda s: 1.0 / math.sqrt(b(s)), a, mid,
                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    # right half
    if abs(b(c)) <= zero_tol:
        slope = slope_at(c, -1.0)
        if slope <= zero_tol:
            raise InvalidProfileError(
                f"b({c}) = 0 with the inward slope <= 0: the radius integral "
                "may diverge"
            )

        def right_integrand(u):
            if u == 0.0:
                return 2.0 / math.sqrt(slope)
            return 2.0 * u / math.sqrt(b(c - u * u))

        total += quad(right_integrand, 0.0, math.sqrt(c - mid),
                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    else:
        total += quad(lambda s: 1.0 / math.sqrt(b(s)), mid, c,
                      epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return total


# -- gradient integral curves --------------------------------------------------------


def integral_curve(S: FinslerStructure, rho: ScalarField, x0,
                   t_max: float, step: float = DEFAULT_STEP,
                   direction: int = +1,
                   stop_level: Optional[float] = None,
                   compare_geodesic: bool = False) -> GeodesicPath:
    """Integrate xd = grad rho / F(grad rho) (unit F-speed) from x0.

    ``direction``=-1 follows the reversed trace (used to measure arrival
    lengths from a level back toward a critical point); ``stop_level``
    truncates the curve exactly on rho = stop_level (bisected).  With
    ``compare_geodesic`` the result carries the maximum deviation from the
    geodesic with the same initial data.
    """
    n = S.n
    x = np.array([float(v) for v in x0])
    if not S.in_domain(x):
        raise DomainError(f"initial point {x.tolist()} outside the domain")
    warm = {"v": None}

    def rho_at(p):
        return float(rho.evaluator([float(v) for v in p]))

    def velocity(p):
        grad = finsler_gradient(S, rho, p, initial=warm["v"])
        warm["v"] = grad.grad
        return direction * grad.grad / grad.multiplier

    def rk4(p, h):
        k1 = velocity(p)
        k2 = velocity(p + 0.5 * h * k1)
        k3 = velocity(p + 0.5 * h * k2)
        k4 = velocity(p + h * k3)
        return p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), k1

    def crossed(p):
        if stop_level is None:
            return False
        return (rho_at(p) <= stop_level if direction < 0
                else rho_at(p) >= stop_level)

    times = [0.0]
    points = [x.copy()]
    node_velocities = [velocity(x)]
    f_values = [float(S.norm(x, node_velocities[0]))]
    truncated = False
    t = 0.0
    sizes = _step_sizes(t_max, step)
    stage_errors = (CriticalPointError, ConvergenceFailureError, DomainError,
                    SingularEvaluationError)
    for h in sizes:
        try:
            x_new, _ = rk4(x, h)
            bad_step = not S.in_domain(x_new) or crossed(x_new)
        except stage_errors:
            bad_step = True
        if bad_step:
            lo, hi = 0.0, h
            x_keep = x
            for _ in range(80):
                if hi - lo <= 1e-13:
                    break
                m = 0.5 * (lo + hi)
                try:
                    cand, _ = rk4(x, m)
                    bad = not S.in_domain(cand) or crossed(cand)
                except stage_errors:
                    bad = True
                    cand = None
                if bad:
                    hi = m
                else:
                    lo, x_keep = m, cand
            truncated = True
            if lo > 1e-13:
                t += lo
                x = x_keep
                times.append(t)
                points.append(x.copy())
                v = velocity(x)
                node_velocities.append(v)
                f_values.append(float(S.norm(x, v)))
            break
        t += h
        x = x_new
        times.append(t)
        points.append(x.copy())
        v = velocity(x)
        node_velocities.append(v)
        f_values.append(float(S.norm(x, v)))

    f_arr = np.array(f_values)
    path = GeodesicPath(
        times=np.array(times), points=np.array(points),
        velocities=np.array(node_velocities), F_values=f_arr,
        step=step, method="gradient-flow-rk4",
        speed_drift=float(np.max(np.abs(f_arr - 1.0))),
        truncated=truncated, label=f"integral-curve[{S.label}]",
    )
    if compare_geodesic:
        geo = integrate_geodesic(S, points[0], node_velocities[0],
                                 t_max=float(times[-1]) if times[-1] > 0 else t_max,
                                 step=step)
        m = min(len(geo.times), len(path.times))
        path.geodesic_deviation = float(
            np.max(np.abs(geo.points[:m] - path.points[:m]))
        )
    return path


def rho_second_derivative_check(S: FinslerStructure, rho: ScalarField,
                                profile: TransnormalProfile,
                                curves: int = 20, seed: int = 42,
                                t_span: float = 0.5, step: float = 2e-3,
                                fd_spacing: float = 0.02) -> float:
    """Finite-differences rho along gradient integral curves and compares
    (rho o gamma)'' to b'(rho)/2; returns the maximum residual."""
    rng = np.random.default_rng(seed)
    a, c = profile.value_range
    margin = 0.18 * (c - a)
    worst = 0.0
    done = 0
    while done < curves:
        x0 = S.sample_base_point(rng)
        value = float(rho.evaluator([float(v) for v in x0]))
        if not (a + margin <= value <= c - margin):
            continue
        try:
            path = integral_curve(S, rho, x0, t_max=t_span, step=step)
        except (CriticalPointError, FinslerError):
            continue
        m = max(1, int(round(fd_spacing / step)))
        if len(path.times) < 2 * m + 1:
            continue
        series = np.array([
            float(rho.evaluator([float(v) for v in p])) for p in path.points
        ])
        h = float(path.times[m] - path.times[0])
        for k in range(m, len(series) - m, m):
            fd2 = (series[k + m] - 2.0 * series[k] + series[k - m]) / (h * h)
            worst = max(worst, abs(fd2 - 0.5 * profile.b_prime_at(series[k])))
        done += 1
    return worst


# -- classification -------------------------------------------------------------------


@dataclass(frozen=True)
class ClassificationResult:
    label: str                 # "product" | "euclidean" | "sphere"
    critical_value_count: int
    critical_values: tuple
    description: str

    def to_dict(self):
        return {
            "label": self.label,
            "critical_value_count": self.critical_value_count,
            "critical_values": list(self.critical_values),
            "description": self.description,
        }


_DESCRIPTIONS = {
    "product": ("conformal to a product of an open real interval with a "
                "complete manifold of one lower dimension"),
    "euclidean": "conformal to a Euclidean space of the same dimension",
    "sphere": "conformal to a round unit sphere of the same dimension",
}


def classify_by_critical_points(profile: TransnormalProfile) -> ClassificationResult:
    """Counts zeros of b at the range endpoints: 0 -> product, 1 ->
    euclidean, 2 -> sphere.  A profile vanishing (or negative) in the
    interior is not transnormal-regular and is rejected."""
    a, c = profile.value_range
    grid = np.linspace(a, c, 2001)
    values = np.array([profile.b_at(s) for s in grid])
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.any(values < -1e-12 * scale):
        witness = float(grid[np.argmin(values)])
        raise InvalidProfileError(
            f"b is negative at {witness:.6g} (b = {float(np.min(values)):.3e})"
        )
    interior = values[4:-4]
    if np.min(interior) <= 1e-9 * scale:
        witness = float(grid[4:-4][np.argmin(interior)])
        raise InvalidProfileError(
            f"b vanishes in the interior near {witness:.6g}: the profile is "
            "not transnormal-regular"
        )
    critical = profile.critical_values
    label = {0: "product", 1: "euclidean", 2: "sphere"}[len(critical)]
    return ClassificationResult(
        label=label, critical_value_count=len(critical),
        critical_values=critical, description=_DESCRIPTIONS[label],
    )


def measure_arrival_lengths(S: FinslerStructure, rho: ScalarField,
                            profile: TransnormalProfile,
                            levels: Sequence[float], samples: int = 3,
                            seed: int = 42, step: float = 5e-3,
                            start_fraction: float = 1e-4) -> dict:
    """Finsler distances from the bottom of the profile range to each level,
    measured by integrating gradient curves (unit F-speed, so arrival time
    is distance).

    When the range start is a critical value the curves start just above it,
    on rho = a + start_fraction (b - a), and the measured length includes
    the quadrature radius of that starting level; a regular range start is
    used directly.  Returns {level: [lengths...]}.
    """
    a, c_max = profile.value_range
    critical_start = abs(profile.b_at(a)) <= profile.zero_tolerance * max(
        1.0, abs(profile.b_at(0.5 * (a + c_max))))
    if critical_start:
        start_level = a + start_fraction * (c_max - a)
        offset = wavefront_radius(profile, a, start_level)
    else:
        start_level = a
        offset = 0.0
    rng = np.random.default_rng(seed)
    out: dict = {float(c): [] for c in levels}
    for _ in range(samples):
        x0 = sample_level_point(S, rho, start_level, rng)
        for c in levels:
            budget = 4.0 * wavefront_radius(profile, a, c) + 1.0
            path = integral_curve(S, rho, x0, t_max=budget, step=step,
                                  stop_level=float(c))
            end_value = float(rho.evaluator([float(v) for v in path.points[-1]]))
            if abs(end_value - c) > 1e-6 * max(1.0, abs(c)):
                raise CriticalPointError(
                    f"gradient curve stalled at rho = {end_value:.6g} before "
                    f"reaching level {c}"
                )
            out[float(c)].append(float(path.times[-1]) + offset)
    return out


# -- level spheres ----------------------------------------------------------------------


@dataclass
class LevelSphereReport:
    level: float
    expected_radius: float
    measured: list
    max_deviation: float
    seed: int

    def to_dict(self):
        return {
            "level": self.level,
            "expected_radius": self.expected_radius,
            "measured_radius": (sum(self.measured) / len(self.measured)
                                if self.measured else math.nan),
            "deviation": self.max_deviation,
            "samples": len(self.measured),
            "seed": self.seed,
        }


def level_sphere_check(S: FinslerStructure, rho: ScalarField,
                       profile: TransnormalProfile, c: float,
                       samples: int = 5, seed: int = 42,
                       step: float = 2e-3,
                       stop_fraction: float = 1e-4) -> LevelSphereReport:
    """For sampled points p on rho^{-1}(c), measures the geodesic arrival
    length from the critical level along the gradient trace through p and
    compares it with the wavefront radius int_a^c ds/sqrt(b).

    The trace is followed backward from p until rho falls to a small cutoff;
    the remaining distance to the critical point is the (quadrature) radius
    of the cutoff level, which vanishes with ``stop_fraction``.
    """
    a, _ = profile.value_range
    expected = wavefront_radius(profile, a, c)
    stop_level = a + stop_fraction * (c - a)
    rng = np.random.default_rng(seed)
    measured = []
    t_budget = 4.0 * expected
    for _ in range(samples):
        p = sample_level_point(S, rho, c, rng)
        path = integral_curve(S, rho, p, t_max=t_budget, step=step,
                              direction=-1, stop_level=stop_level)
        end_value = float(rho.evaluator([float(v) for v in path.points[-1]]))
        if end_value > stop_level * 1.01 + 1e-12:
            raise CriticalPointError(
                f"backward gradient trace from level {c} stalled at rho = "
                f"{end_value:.6g} before reaching the cutoff {stop_level:.6g}"
            )
        measured.append(float(path.times[-1])
                        + wavefront_radius(profile, a, end_value))
    deviations = [abs(m - expected) for m in measured]
    return LevelSphereReport(
        level=c, expected_radius=expected, measured=measured,
        max_deviation=max(deviations), seed=seed,
    )
