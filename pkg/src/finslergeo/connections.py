"""Spray, nonlinear connection, Cartan horizontal connection, horizontal
covariant derivatives, contracted curvature and flag curvature.

Curvature here is the y-contracted curvature of the geodesic spray (the
Jacobi endomorphism)

    R^i_k = 2 dG^i/dx^k - y^j d^2 G^i/dx^j dy^k
            + 2 G^j d^2 G^i/dy^j dy^k - G^i_j G^j_k,

which feeds the flag-curvature formula
K = g(R(X, y) y, X) / (g(X, X) g(y, y) - g(X, y)^2) and is independent of the
choice of metric-compatible connection.  Derivatives of the spray are taken
with nested order-1 jets; directional lifts keep the jet depth at four, the
supported maximum.

Everything here is a pure evaluation; scans are deterministic given a seed
(samples are reduced in sample-index order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcalc as dc
from .core import FinslerStructure, chart_values, metric_matrix, metric_matrix_generic
from .diffcalc import Jet, coefficient, lift
from .errors import (
    CriticalPointError,
    DegenerateFlagError,
    SingularEvaluationError,
    UnsupportedValenceError,
)

DEGENERATE_FLAG_FLOOR = 1e-12


@dataclass(frozen=True)
class SprayValue:
    x: np.ndarray
    y: np.ndarray
    G: np.ndarray            # spray coefficients G^i
    Gy: np.ndarray           # nonlinear connection G^i_j = dG^i/dy^j
    homogeneity_defect: float  # max |G^i_j y^j - 2 G^i|


@dataclass(frozen=True)
class CartanConnectionValue:
    x: np.ndarray
    y: np.ndarray
    Gamma: np.ndarray        # Gamma^i_jk, symmetric in (j, k)
    delta_g: np.ndarray      # delta g_ij / delta x^r, indexed [r, i, j]
    Gy: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray


@dataclass(frozen=True)
class CurvatureValue:
    x: np.ndarray
    y: np.ndarray
    R_jac: np.ndarray        # y-contracted curvature R^i_k
    y_contraction_defect: float  # max |R^i_k y^k|
    g_symmetry_defect: float     # max |(g R)_ik - (g R)_ki|


# -- spray ---------------------------------------------------------------------


def _gauss_solve(rows, rhs):
    """Solve A u = b for small systems whose entries are jets; pivots on the
    magnitude of the constant part (A's constant part is a metric, hence
    nonsingular)."""
    n = len(rows)
    a = [row[:] for row in rows]
    b = list(rhs)
    for col in range(n):
        pivot = max(range(col, n),
                    key=lambda r: abs(dc.constant_part(a[r][col])))
        if abs(dc.constant_part(a[pivot][col])) == 0.0:
            raise SingularEvaluationError("singular jet system in spray solve")
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            b[col], b[pivot] = b[pivot], b[col]
        inv = 1.0 / a[col][col]
        for r in range(col + 1, n):
            factor = a[r][col] * inv
            for c in range(col + 1, n):
                a[r][c] = a[r][c] - factor * a[col][c]
            b[r] = b[r] - factor * b[col]
    out = [None] * n
    for r in range(n - 1, -1, -1):
        s = b[r]
        for c in range(r + 1, n):
            s = s - a[r][c] * out[c]
        out[r] = s / a[r][r]
    return out


def spray_vector(S: FinslerStructure, vals):
    """G^i = 1/4 g^{ik} (y^j d^2F^2/dy^k dx^j - dF^2/dx^k) at chart values
    that may carry jets (this is what makes spray derivatives exact)."""
    n = S.n
    f2 = S.F2.evaluator
    y = vals[n:]
    g = metric_matrix_generic(S, vals)
    x_along_y = list(y) + [0.0] * n  # base directional lift along the fiber
    rhs = []
    for k in range(n):
        a_k = dc.directional_partial(f2, vals, [x_along_y, n + k])
        b_k = dc.directional_partial(f2, vals, [k])
        rhs.append((a_k - b_k) * 0.25)
    numeric = (not any(isinstance(r, Jet) for r in rhs)
               and not any(isinstance(v, Jet) for row in g for v in row))
    if numeric:
        gm = np.array(g, dtype=float)
        bv = np.array(rhs, dtype=float)
        try:
            return list(np.linalg.solve(gm, bv))
        except np.linalg.LinAlgError:
            # measure-zero chart degeneracies (e.g. polar axes); the spray
            # is still finite there when the rhs lies in the range
            return list(np.linalg.lstsq(gm, bv, rcond=None)[0])
    return _gauss_solve(g, rhs)


def spray(S: FinslerStructure, x, y) -> SprayValue:
    """Spray coefficients and the nonlinear connection G^i_j at (x, y)."""
    vals = _state(S, x, y)
    n = S.n
    G = np.array(spray_vector(S, vals), dtype=float)
    Gy = np.empty((n, n))
    for j in range(n):
        lifted = lift(vals, n + j)
        col = spray_vector(S, lifted)
        for i in range(n):
            Gy[i, j] = coefficient(col[i], 1)
    yv = np.array(vals[n:])
    defect = float(np.max(np.abs(Gy @ yv - 2.0 * G)))
    return SprayValue(x=np.array(vals[:n]), y=yv, G=G, Gy=Gy,
                      homogeneity_defect=defect)


def _state(S, x, y):
    vals = chart_values(x, y)
    if all(v == 0.0 for v in vals[S.n:]):
        raise SingularEvaluationError("spray requires a nonzero fiber vector")
    return vals


# -- Cartan connection -----------------------------------------------------------


def cartan_connection(S: FinslerStructure, x, y) -> CartanConnectionValue:
    """Gamma^i_jk = 1/2 g^{ir} (dg_rk/dx^j + dg_jr/dx^k - dg_jk/dx^r) with
    the horizontal derivative d/dx^i = partial_x^i - G^j_i partial_y^j."""
    vals = _state(S, x, y)
    n = S.n
    f2 = S.F2.evaluator
    sp = spray(S, x, y)
    g = metric_matrix(S, vals)
    g_inv = np.linalg.inv(g)

    dgdx = np.empty((n, n, n))  # [r, i, j] = d g_ij / d x^r
    dgdy = np.empty((n, n, n))  # [s, i, j] = d g_ij / d y^s
    for i in range(n):
        for j in range(i, n):
            for r in range(n):
                v = dc.nested_partial(f2, vals,
                                      [(n + i, 1), (n + j, 1), (r, 1)]) * 0.5
                dgdx[r, i, j] = dgdx[r, j, i] = v
            for s in range(n):
                lifts = dc._group_multi_index([n + i, n + j, n + s])
                v = dc.nested_partial(f2, vals, lifts) * 0.5
                dgdy[s, i, j] = dgdy[s, j, i] = v

    delta_g = dgdx - np.einsum("sr,sij->rij", sp.Gy, dgdy)
    # term[r, j, k] = delta g_rk/dx^j + delta g_jr/dx^k - delta g_jk/dx^r
    term = (delta_g.transpose(1, 0, 2)
            + delta_g.transpose(1, 2, 0)
            - delta_g)
    gamma = 0.5 * np.einsum("ir,rjk->ijk", g_inv, term)
    return CartanConnectionValue(
        x=np.array(vals[:n]), y=np.array(vals[n:]), Gamma=gamma,
        delta_g=delta_g, Gy=sp.Gy, g=g, g_inv=g_inv,
    )


# -- horizontal covariant derivative ---------------------------------------------


@dataclass(frozen=True)
class TensorField:
    """Descriptor of a tensor field T of valence (p, q): ``evaluator`` maps
    chart values to a nested list of components (contravariant indices
    first), evaluable at jets.  ``depends_on_y`` controls whether the
    horizontal derivative needs the -G^s_r d/dy^s correction."""

    valence: tuple
    evaluator: Callable[[Sequence], object]
    depends_on_y: bool = True
    label: str = ""


_SUPPORTED_VALENCES = {(0, 0), (0, 1), (0, 2), (1, 2)}


def scalar_field_tensor(rho) -> TensorField:
    """Wrap a base scalar field rho(x) as a valence-(0,0) tensor field."""
    return TensorField(valence=(0, 0),
                       evaluator=lambda vals: rho.evaluator(vals[:rho.arity]),
                       depends_on_y=False, label=rho.label)


def metric_tensor_field(S: FinslerStructure) -> TensorField:
    return TensorField(valence=(0, 2),
                       evaluator=lambda vals: metric_matrix_generic(S, vals),
                       depends_on_y=True, label="fundamental tensor")


def _map_nested(fn, obj):
    if isinstance(obj, (list, tuple)):
        return [_map_nested(fn, item) for item in obj]
    return fn(obj)


def horizontal_covariant_derivative(S: FinslerStructure, T: TensorField, x, y):
    """Cartan horizontal covariant derivative of T at (x, y).

    Returns an array whose first axis is the derivative index r:
    out[r, ...] = (nabla_r T)[...].  Supported valences: scalar, (0,1),
    (0,2) and (1,2).
    """
    if tuple(T.valence) not in _SUPPORTED_VALENCES:
        raise UnsupportedValenceError(
            f"valence {T.valence} not supported; expected one of "
            f"{sorted(_SUPPORTED_VALENCES)}"
        )
    vals = _state(S, x, y)
    n = S.n
    conn = cartan_connection(S, x, y)
    gamma = conn.Gamma

    def delta_x(r):
        lifted = lift(vals, r)
        out = _map_nested(lambda v: coefficient(v, 1), T.evaluator(lifted))
        out = np.array(out, dtype=float)
        if T.depends_on_y:
            for s in range(n):
                lifted_y = lift(vals, n + s)
                dTdy = np.array(
                    _map_nested(lambda v: coefficient(v, 1), T.evaluator(lifted_y)),
                    dtype=float,
                )
                out = out - conn.Gy[s, r] * dTdy
        return out

    dT = np.array([delta_x(r) for r in range(n)])
    p, q = T.valence
    if (p, q) == (0, 0):
        return dT
    value = np.array(_map_nested(float, T.evaluator(vals)), dtype=float)
    if (p, q) == (0, 1):
        return _cov_01(dT, value, gamma, n)
    if (p, q) == (0, 2):
        return _cov_02(dT, value, gamma, n)
    return _cov_12(dT, value, gamma, n)


def _cov_01(dT, T, gamma, n):
    # (nabla_r T)_j = delta_r T_j - T_s Gamma^s_jr
    out = np.empty((n, n))
    for r in range(n):
        out[r] = dT[r] - np.einsum("s,sj->j", T, gamma[:, :, r])
    return out


def _cov_02(dT, T, gamma, n):
    # (nabla_r T)_jk = delta_r T_jk - T_sk Gamma^s_jr - T_js Gamma^s_kr
    out = np.empty((n, n, n))
    for r in range(n):
        out[r] = (dT[r]
                  - np.einsum("sk,sj->jk", T, gamma[:, :, r])
                  - np.einsum("js,sk->jk", T, gamma[:, :, r]))
    return out


def _cov_12(dT, T, gamma, n):
    # (nabla_r T)^i_jk = delta_r T^i_jk - T^i_sk Gamma^s_jr
    #                    - T^i_js Gamma^s_kr + T^s_jk Gamma^i_sr
    out = np.empty((n, n, n, n))
    for r in range(n):
        out[r] = (dT[r]
                  - np.einsum("isk,sj->ijk", T, gamma[:, :, r])
                  - np.einsum("ijs,sk->ijk", T, gamma[:, :, r])
                  + np.einsum("sjk,is->ijk", T, gamma[:, :, r]))
    return out


# -- curvature -------------------------------------------------------------------


def _spray_at(S, lifted):
    return spray_vector(S, lifted)


def _extract_vec(col, depth):
    out = []
    for v in col:
        for _ in range(depth):
            v = coefficient(v, 1)
        out.append(float(v))
    return np.array(out)


def curvature_action(S: FinslerStructure, x, y, X) -> np.ndarray:
    """R(X) = R^i_k X^k without assembling the full matrix: six spray
    evaluations in directional jets (the hot path for flag curvature)."""
    vals = _state(S, x, y)
    n = S.n
    Xv = [float(v) for v in X]
    yv = vals[n:]
    zeros = [0.0] * n

    G0 = np.array(spray_vector(S, vals), dtype=float)
    # X^k dG/dx^k
    t1 = _extract_vec(_spray_at(S, lift(vals, Xv + zeros)), 1)
    # y^j X^k d2G/dx^j dy^k
    stage = lift(vals, list(yv) + zeros)
    t2 = _extract_vec(_spray_at(S, lift(stage, zeros + Xv)), 2)
    # G^j X^k d2G/dy^j dy^k
    stage = lift(vals, zeros + list(G0))
    t3 = _extract_vec(_spray_at(S, lift(stage, zeros + Xv)), 2)
    # G^i_j G^j_k X^k via two matrix-vector directional passes
    w1 = _extract_vec(_spray_at(S, lift(vals, zeros + Xv)), 1)
    t4 = _extract_vec(_spray_at(S, lift(vals, zeros + list(w1))), 1)

    return 2.0 * t1 - t2 + 2.0 * t3 - t4


def contracted_curvature(S: FinslerStructure, x, y) -> CurvatureValue:
    """Full matrix R^i_k at (x, y), with the contraction and g-symmetry
    diagnostics attached."""
    vals = _state(S, x, y)
    n = S.n
    yv = np.array(vals[n:])
    zeros = [0.0] * n

    G0 = np.array(spray_vector(S, vals), dtype=float)
    Gy = np.empty((n, n))
    dGdx = np.empty((n, n))
    M1 = np.empty((n, n))
    M2 = np.empty((n, n))
    for k in range(n):
        Gy[:, k] = _extract_vec(_spray_at(S, lift(vals, n + k)), 1)
        dGdx[:, k] = _extract_vec(_spray_at(S, lift(vals, k)), 1)
        stage = lift(vals, list(yv) + zeros)
        M1[:, k] = _extract_vec(_spray_at(S, lift(stage, n + k)), 2)
        stage = lift(vals, zeros + list(G0))
        M2[:, k] = _extract_vec(_spray_at(S, lift(stage, n + k)), 2)

    R = 2.0 * dGdx - M1 + 2.0 * M2 - Gy @ Gy
    g = metric_matrix(S, vals)
    gR = g @ R
    return CurvatureValue(
        x=np.array(vals[:n]), y=yv, R_jac=R,
        y_contraction_defect=float(np.max(np.abs(R @ yv))),
        g_symmetry_defect=float(np.max(np.abs(gR - gR.T))),
    )


def flag_curvature(S: FinslerStructure, x, y, X) -> float:
    """K(x, y, X) = g(R(X, y) y, X) / (g(X, X) g(y, y) - g(X, y)^2), all
    inner products taken with g at the flagpole (x, y)."""
    vals = _state(S, x, y)
    g = metric_matrix(S, vals)
    Xv = np.asarray(X, dtype=float)
    yv = np.array(vals[S.n:])
    gXX = float(Xv @ g @ Xv)
    gyy = float(yv @ g @ yv)
    gXy = float(Xv @ g @ yv)
    denominator = gXX * gyy - gXy * gXy
    if denominator <= DEGENERATE_FLAG_FLOOR * gXX * gyy:
        raise DegenerateFlagError(
            "flag edge is (numerically) parallel to the flagpole; the flag "
            f"plane is degenerate (denominator {denominator:.3e})"
        )
    RX = curvature_action(S, x, y, Xv)
    return float(RX @ g @ Xv) / denominator


# -- analytic warped-metric curvature components ----------------------------------


@dataclass(frozen=True)
class WarpedComponentTable:
    """The three analytic curvature component families of a warped metric
    dt^2 + rho'(t)^2 f at parameter t, against a constant-curvature level
    metric f.

    ``radial_coefficient`` multiplies delta^a_c in the (radial, level,
    radial) components; ``mixed_coefficient`` multiplies f_cb in the (radial
    dual) family; ``level_coefficient`` multiplies (f_cb d^a_d - f_db d^a_c)
    in the pure-level family.  ``assembled_flag_curvature`` is the flag
    curvature of flags containing the radial direction in the assembled
    convention K = -rho'''/rho' (the convention verified numerically; the
    raw radial component carries the opposite sign)."""

    t: float
    radial_coefficient: float       # rho''' / rho'
    mixed_coefficient: float        # -rho' rho'''
    level_coefficient: float        # level_curvature - rho''^2
    assembled_flag_curvature: float  # -rho''' / rho'
    level_curvature: float


def warped_curvature_components(warp, level_curvature: float,
                                t: float) -> WarpedComponentTable:
    """Analytic curvature components of dt^2 + rho'^2 f at t, where ``warp``
    exposes derivatives rho', rho'', rho''' (see
    :class:`~finslergeo.rigidity.SpecialSolution` /
    :class:`~finslergeo.rigidity.WarpProfile`)."""
    d1 = warp.d1(t)
    if abs(d1) < 1e-14:
        raise CriticalPointError(
            f"warp derivative vanishes at t={t}: curvature components are "
            "singular at critical points"
        )
    d2 = warp.d2(t)
    d3 = warp.d3(t)
    return WarpedComponentTable(
        t=t,
        radial_coefficient=d3 / d1,
        mixed_coefficient=-d1 * d3,
        level_coefficient=level_curvature - d2 * d2,
        assembled_flag_curvature=-d3 / d1,
        level_curvature=level_curvature,
    )


# -- constant-curvature scan -------------------------------------------------------


@dataclass
class ScanReport:
    structure: str
    samples: int
    seed: int
    mean_K: float
    max_deviation: float
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "structure": self.structure,
            "samples": self.samples,
            "seed": self.seed,
            "mean_K": self.mean_K,
            "max_dev": self.max_deviation,
            "witnesses": self.witnesses,
        }


def constant_curvature_scan(S: FinslerStructure, samples: int = 200,
                            seed: int = 42) -> ScanReport:
    """Flag curvature over random flags (x, y, X); reports the mean, the
    maximum deviation from it, and witness flags.  Deterministic under seed."""
    rng = np.random.default_rng(seed)
    values = []
    flags = []
    while len(values) < samples:
        x, y = S.sample_state(rng)
        X = S.sample_fiber_vector(rng)
        try:
            k = flag_curvature(S, x, y, X)
        except DegenerateFlagError:
            continue
        values.append(k)
        flags.append((x, y, X))
    arr = np.array(values)
    mean = float(arr.mean())
    deviations = np.abs(arr - mean)
    worst = int(np.argmax(deviations))
    witnesses = []
    for idx in {0, worst}:
        x, y, X = flags[idx]
        witnesses.append({
            "x": [float(v) for v in x],
            "y": [float(v) for v in y],
            "X": [float(v) for v in X],
            "K": float(arr[idx]),
        })
    return ScanReport(structure=S.label, samples=samples, seed=seed,
                      mean_K=mean, max_deviation=float(deviations.max()),
                      witnesses=witnesses)
