import math

import numpy as np
import pytest

from finslergeo import diffcalc as dc
from finslergeo.connections import (
    TensorField,
    cartan_connection,
    constant_curvature_scan,
    contracted_curvature,
    curvature_action,
    flag_curvature,
    horizontal_covariant_derivative,
    metric_tensor_field,
    scalar_field_tensor,
    spray,
    warped_curvature_components,
)
from finslergeo.core import chart_values, euclidean_structure, metric_matrix
from finslergeo.diffcalc import ScalarField
from finslergeo.errors import (
    CriticalPointError,
    DegenerateFlagError,
    UnsupportedValenceError,
)
from finslergeo.presets import cosh_warp_structure, flat_polar_structure
from finslergeo.rigidity import WarpProfile, build_sphere_polar, special_solution

import oracles


def _sphere_chart_metric(x):
    return np.diag([1.0, math.sin(x[0]) ** 2])


# -- spray -------------------------------------------------------------------------


def test_euclidean_spray_vanishes(euclid2):
    value = spray(euclid2, [0.4, 0.1], [1.0, 2.0])
    assert np.allclose(value.G, 0.0)
    assert np.allclose(value.Gy, 0.0)


def test_spray_matches_christoffel_closed_form(diag_sphere_chart):
    """G^i = 1/2 gamma^i_jk y^j y^k for Riemannian metrics, against the
    hand-coded symbols of diag(1, sin^2 x1)."""
    x, y = [0.9, 0.5], [0.7, -0.4]
    value = spray(diag_sphere_chart, x, y)
    t = x[0]
    expected = np.array([
        -0.5 * math.sin(t) * math.cos(t) * y[1] ** 2,
        math.cos(t) / math.sin(t) * y[0] * y[1],
    ])
    assert np.allclose(value.G, expected, atol=1e-7)
    assert value.homogeneity_defect < 1e-7


def test_spray_matches_fd_christoffel_oracle(diag_sphere_chart):
    rng = np.random.default_rng(5)
    for _ in range(10):
        x, y = diag_sphere_chart.sample_state(rng)
        gamma = oracles.christoffel(_sphere_chart_metric, x)
        expected = 0.5 * np.einsum("ijk,j,k->i", gamma, y, y)
        value = spray(diag_sphere_chart, x, y)
        assert np.allclose(value.G, expected, atol=1e-7)


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_spray_two_homogeneity(pond, seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        x, y = pond.sample_state(rng)
        g1 = spray(pond, x, y).G
        g2 = spray(pond, x, 2.0 * np.asarray(y)).G
        scale = max(1.0, float(np.max(np.abs(g2))))
        assert np.max(np.abs(g2 - 4.0 * g1)) / scale < 1e-8
        assert spray(pond, x, y).homogeneity_defect < 1e-7


# -- Cartan connection ----------------------------------------------------------------


def test_euclidean_connection_vanishes(euclid2):
    value = cartan_connection(euclid2, [0.1, 0.2], [1.0, 1.0])
    assert np.max(np.abs(value.Gamma)) < 1e-14


def test_connection_matches_levi_civita(diag_sphere_chart):
    x, y = [0.9, 0.5], [0.7, -0.4]
    value = cartan_connection(diag_sphere_chart, x, y)
    t = x[0]
    assert value.Gamma[0, 1, 1] == pytest.approx(-math.sin(t) * math.cos(t),
                                                 abs=1e-7)
    assert value.Gamma[1, 0, 1] == pytest.approx(math.cos(t) / math.sin(t),
                                                 abs=1e-7)
    assert value.Gamma[1, 1, 0] == pytest.approx(math.cos(t) / math.sin(t),
                                                 abs=1e-7)
    assert np.max(np.abs(value.Gamma - value.Gamma.transpose(0, 2, 1))) < 1e-9


def test_connection_matches_fd_oracle(diag_sphere_chart):
    rng = np.random.default_rng(9)
    for _ in range(6):
        x, y = diag_sphere_chart.sample_state(rng)
        expected = oracles.christoffel(_sphere_chart_metric, x)
        value = cartan_connection(diag_sphere_chart, x, y)
        assert np.allclose(value.Gamma, expected, atol=1e-7)


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_metric_compatibility(catalog, seed):
    """nabla^H g = 0 within 1e-6 at random samples on every catalog
    structure (tested, not assumed)."""
    rng = np.random.default_rng(seed)
    for S in catalog:
        T = metric_tensor_field(S)
        for _ in range(25):
            x, y = S.sample_state(rng)
            nabla_g = horizontal_covariant_derivative(S, T, x, y)
            assert np.max(np.abs(nabla_g)) < 1e-6


# -- horizontal covariant derivative ---------------------------------------------------


def test_scalar_derivative_is_plain_gradient(euclid2):
    rho = ScalarField(2, lambda v: v[0], label="x1")
    T = scalar_field_tensor(rho)
    out = horizontal_covariant_derivative(euclid2, T, [0.3, 0.4], [1.0, 0.0])
    assert np.allclose(out, [1.0, 0.0])


def test_second_scalar_derivative_vanishes_on_flat(euclid2):
    rho = ScalarField(2, lambda v: v[0], label="x1")

    def drho_eval(vals):
        return [dc.nested_partial(rho.evaluator, vals[:2], [(j, 1)])
                for j in range(2)]

    T = TensorField(valence=(0, 1), evaluator=drho_eval, depends_on_y=False)
    out = horizontal_covariant_derivative(euclid2, T, [0.3, 0.4], [1.0, 0.0])
    assert np.max(np.abs(out)) < 1e-14


def test_obata_identity_through_tensor_path(sphere2):
    """nabla nabla rho = -rho g on the polar sphere via the generic
    covariant-derivative route (cross-check of the dedicated residual)."""
    S = sphere2.structure
    rho = ScalarField(2, lambda v: -dc.cos(v[0]), label="-cos t")

    def drho_eval(vals):
        return [dc.nested_partial(rho.evaluator, list(vals[:2]), [(j, 1)])
                for j in range(2)]

    T = TensorField(valence=(0, 1), evaluator=drho_eval, depends_on_y=False)
    rng = np.random.default_rng(17)
    for _ in range(10):
        x, y = S.sample_state(rng)
        hessian = horizontal_covariant_derivative(S, T, x, y)
        g = metric_matrix(S, chart_values(x, y))
        residual = hessian + (-math.cos(x[0])) * g
        assert np.max(np.abs(residual)) < 2e-5


def test_valence_12_leibniz_against_manual():
    """(1,2) covariant derivative of Gamma-free product tensors on the flat
    structure reduces to the plain derivative."""
    S = euclidean_structure(2)

    def t_eval(vals):
        x1 = vals[0]
        return [[[x1 * (1.0 if (i, j, k) == (0, 0, 0) else 0.5)
                  for k in range(2)] for j in range(2)] for i in range(2)]

    T = TensorField(valence=(1, 2), evaluator=t_eval, depends_on_y=False)
    out = horizontal_covariant_derivative(S, T, [0.7, 0.1], [1.0, 0.5])
    assert out[0, 0, 0, 0] == pytest.approx(1.0)
    assert out[0, 1, 1, 1] == pytest.approx(0.5)
    assert np.max(np.abs(out[1])) < 1e-14


def test_unsupported_valence_rejected(euclid2):
    T = TensorField(valence=(2, 0), evaluator=lambda vals: [[1.0]])
    with pytest.raises(UnsupportedValenceError):
        horizontal_covariant_derivative(euclid2, T, [0, 0], [1.0, 0.0])


# -- curvature ---------------------------------------------------------------------------


def test_euclidean_curvature_vanishes(euclid2):
    value = contracted_curvature(euclid2, [0.3, -0.2], [1.0, 0.7])
    assert np.max(np.abs(value.R_jac)) < 1e-13
    assert flag_curvature(euclid2, [0.3, -0.2], [1.0, 0.7], [0.5, -1.0]) == \
        pytest.approx(0.0, abs=1e-13)


def test_sphere_curvature_constant_model(sphere2):
    """R^i_k = F^2 delta - y tensor y-flat at K = 1, by an independently
    coded constant-curvature formula."""
    S = sphere2.structure
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, y = S.sample_state(rng)
        value = contracted_curvature(S, x, y)
        g = metric_matrix(S, chart_values(x, y))
        yv = np.asarray(y)
        model = float(yv @ g @ yv) * np.eye(2) - np.outer(yv, g @ yv)
        assert np.allclose(value.R_jac, model, atol=1e-10)
        assert value.y_contraction_defect < 1e-10
        assert value.g_symmetry_defect < 1e-10


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_curvature_identities_random(pond, seed):
    rng = np.random.default_rng(seed)
    for _ in range(30):
        x, y = pond.sample_state(rng)
        value = contracted_curvature(pond, x, y)
        g = metric_matrix(pond, chart_values(x, y))
        yv = np.asarray(y)
        f2 = float(yv @ g @ yv)
        assert value.y_contraction_defect < 1e-6 * max(1.0, f2)
        assert value.g_symmetry_defect < 1e-6


def test_curvature_action_matches_matrix(pond):
    rng = np.random.default_rng(8)
    for _ in range(15):
        x, y = pond.sample_state(rng)
        X = pond.sample_fiber_vector(rng)
        matrix = contracted_curvature(pond, x, y).R_jac
        action = curvature_action(pond, x, y, X)
        assert np.allclose(matrix @ X, action, atol=1e-9)


def test_flag_curvature_matches_sectional_oracle(diag_sphere_chart):
    """Riemannian cross-check: flag curvature equals the classical
    sectional curvature from the FD Christoffel/Riemann oracle."""
    rng = np.random.default_rng(21)
    for _ in range(6):
        x, y = diag_sphere_chart.sample_state(rng)
        X = diag_sphere_chart.sample_fiber_vector(rng)
        try:
            flag = flag_curvature(diag_sphere_chart, x, y, X)
        except DegenerateFlagError:
            continue
        classical = oracles.sectional_curvature(_sphere_chart_metric, x, y, X)
        assert flag == pytest.approx(classical, abs=1e-6)


def test_flag_curvature_oracle_on_product_metric():
    """Second Riemannian oracle target with off-axis curvature."""
    from finslergeo.core import riemannian_diagonal_structure
    from finslergeo.expressions import parse

    S = riemannian_diagonal_structure(
        2, [parse("1 + x2^2", 2), parse("2 + cos(x1)", 2)],
        label="diag(1+x2^2, 2+cos x1)",
        sample_bounds=((-1.0, 1.0), (-1.0, 1.0)),
    )

    def metric(x):
        return np.diag([1.0 + x[1] ** 2, 2.0 + math.cos(x[0])])

    rng = np.random.default_rng(23)
    for _ in range(6):
        x, y = S.sample_state(rng)
        X = S.sample_fiber_vector(rng)
        try:
            flag = flag_curvature(S, x, y, X)
        except DegenerateFlagError:
            continue
        classical = oracles.sectional_curvature(metric, x, y, X)
        assert flag == pytest.approx(classical, abs=1e-6)


def test_degenerate_flag_rejected(euclid2):
    with pytest.raises(DegenerateFlagError):
        flag_curvature(euclid2, [0.0, 0.0], [1.0, 1.0], [2.0, 2.0])


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_flag_invariances(sphere2, seed):
    """K is invariant under X -> X + lam y, X -> mu X, and y -> lam y."""
    S = sphere2.structure
    rng = np.random.default_rng(seed)
    for _ in range(15):
        x, y = S.sample_state(rng)
        X = S.sample_fiber_vector(rng)
        try:
            base = flag_curvature(S, x, y, X)
        except DegenerateFlagError:
            continue
        shifted = flag_curvature(S, x, y, X + 0.7 * np.asarray(y))
        scaled = flag_curvature(S, x, y, -2.5 * np.asarray(X))
        assert abs(shifted - base) < 1e-9 * max(1.0, abs(base))
        assert abs(scaled - base) < 1e-9 * max(1.0, abs(base))
        pole_scaled = flag_curvature(S, x, 2.0 * np.asarray(y), X)
        assert abs(pole_scaled - base) < 1e-8 * max(1.0, abs(base))


# -- warped analytic components -----------------------------------------------------------


def test_warped_components_sphere_phase():
    profile = special_solution(K=1.0, B=0.0, rho0=-1.0, drho0=0.0)
    table = warped_curvature_components(profile, level_curvature=1.0,
                                        t=math.pi / 4)
    assert table.assembled_flag_curvature == pytest.approx(1.0, rel=1e-12)
    assert table.radial_coefficient == pytest.approx(-1.0, rel=1e-12)


def test_warped_components_hyperbolic():
    table = warped_curvature_components(
        cosh_warp_structure().warp, level_curvature=0.0, t=0.6)
    assert table.assembled_flag_curvature == pytest.approx(-1.0, rel=1e-12)


def test_warped_components_flat_product():
    table = warped_curvature_components(
        flat_polar_structure().warp, level_curvature=3.0, t=1.2)
    assert table.assembled_flag_curvature == 0.0
    assert table.mixed_coefficient == 0.0
    assert table.level_coefficient == pytest.approx(3.0 - 1.0)  # K - rho''^2


def test_warped_components_critical_point_rejected():
    profile = special_solution(K=1.0, B=0.0, rho0=-1.0, drho0=0.0)
    with pytest.raises(CriticalPointError):
        warped_curvature_components(profile, level_curvature=1.0, t=0.0)


# -- scans -------------------------------------------------------------------------------


def test_scan_euclidean(euclid2):
    report = constant_curvature_scan(euclid2, samples=200, seed=42)
    assert report.mean_K == pytest.approx(0.0, abs=1e-9)
    assert report.max_deviation < 1e-9


def test_scan_sphere_c2():
    W = build_sphere_polar(2.0, 2)
    report = constant_curvature_scan(W.structure, samples=200, seed=42)
    assert report.mean_K == pytest.approx(4.0, abs=1e-4)
    assert report.max_deviation < 1e-4


def test_scan_cosh_warp():
    S = cosh_warp_structure().structure
    report = constant_curvature_scan(S, samples=200, seed=42)
    assert report.mean_K == pytest.approx(-1.0, abs=1e-4)
    assert report.max_deviation < 1e-4


def test_scan_deterministic(pond):
    a = constant_curvature_scan(pond, samples=40, seed=7)
    b = constant_curvature_scan(pond, samples=40, seed=7)
    assert a.to_dict() == b.to_dict()
