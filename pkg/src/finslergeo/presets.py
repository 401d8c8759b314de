"""Bundled concrete structures and fields used by the CLI presets and the
test catalog.

The pond: a rotational wind W(x) = (-x2, x1) / 3 over the Euclidean plane
drives a navigation (Randers) metric on the disk x1^2 + x2^2 < 8.9 (the norm
degenerates where |W| >= 1, i.e. on radius 3, so the disk radius stays
strictly below it).  The squared-radius field rho = (x1^2 + x2^2) / 2 is
transnormal for it with profile b(s) = 2 s: wavefronts from the origin are
the circles rho = const at distance sqrt(2 rho), and the water-particle
track through the wavefronts is the unit-speed spiral

    gamma(t) = (sqrt(2) t / 2) (cos(t/3) - sin(t/3), sin(t/3) + cos(t/3)).
"""

from __future__ import annotations

import math

import numpy as np

from . import diffcalc as dc
from .core import FinslerStructure, ZermeloData, euclidean_structure, randers_from_zermelo
from .diffcalc import ScalarField
from .expressions import parse
from .rigidity import WarpedStructure, build_sphere_polar, build_warped_structure
from .transnormal import TransnormalProfile

POND_RADIUS2 = 8.9


def pond_wind():
    """Wind callables over chart values (base point in the first two slots)."""
    return [lambda vals: -vals[1] / 3.0, lambda vals: vals[0] / 3.0]


def pond_zermelo(radius2: float = POND_RADIUS2) -> ZermeloData:
    return ZermeloData(n=2, wind=pond_wind(), domain_radius2=radius2,
                       label="pond")


def pond_structure(radius2: float = POND_RADIUS2, *,
                   validate: bool = True) -> FinslerStructure:
    return randers_from_zermelo(pond_zermelo(radius2), validate=validate)


def pond_rho() -> ScalarField:
    return ScalarField(
        2, lambda vals: 0.5 * (vals[0] * vals[0] + vals[1] * vals[1]),
        label="pond rho = (x1^2 + x2^2)/2",
    )


def pond_profile(radius2: float = POND_RADIUS2) -> TransnormalProfile:
    return TransnormalProfile(
        b=lambda s: 2.0 * s,
        b_prime=lambda s: 2.0,
        value_range=(0.0, radius2 / 2.0),
        rho=pond_rho(),
        label="pond b(s) = 2 s",
    )


def pond_gamma(t):
    """Closed-form particle track; unit F-speed gradient flow of pond_rho."""
    a = t / 3.0
    r = math.sqrt(2.0) * t / 2.0
    return np.array([r * (math.cos(a) - math.sin(a)),
                     r * (math.sin(a) + math.cos(a))])


def pond_gamma_samples(t_start: float = 0.1, t_end: float = 4.0,
                       step: float = 1e-3) -> np.ndarray:
    count = max(2, int(round((t_end - t_start) / step)) + 1)
    ts = np.linspace(t_start, t_end, count)
    return np.array([pond_gamma(t) for t in ts])


def sphere_profile(C: float = 1.0, d: float = 1.0) -> TransnormalProfile:
    """b(s) = d - C^2 s^2 on [-sqrt(d)/C, sqrt(d)/C]: two critical values."""
    r = math.sqrt(d) / C
    return TransnormalProfile(
        b=lambda s: d - C * C * s * s,
        b_prime=lambda s: -2.0 * C * C * s,
        value_range=(-r, r),
        label=f"{d:g} - {C*C:g} s^2",
    )


def constant_profile(value: float = 1.0, length: float = 5.0) -> TransnormalProfile:
    return TransnormalProfile(
        b=lambda s: value, b_prime=lambda s: 0.0,
        value_range=(0.0, length), label=f"b = {value:g}",
    )


def sphere_rho(C: float = 1.0, n: int = 2) -> ScalarField:
    """rho(t) = -cos(C t)/C pulled back through the polar chart."""
    return ScalarField(n, lambda vals: -dc.cos(C * vals[0]) / C,
                       label=f"-cos({C:g} t)/{C:g}")


def riemannian_sphere_chart() -> FinslerStructure:
    """diag(1, sin^2 x1): the round 2-sphere as a diagonal Riemannian metric
    (classical Christoffel oracle target)."""
    from .core import riemannian_diagonal_structure

    return riemannian_diagonal_structure(
        2, [parse("1", 2), parse("sin(x1)^2", 2)],
        label="riemannian-diag(1, sin^2 x1)",
        sample_bounds=((0.4, math.pi - 0.4), (-2.0, 2.0)),
    )


def cosh_warp_structure() -> WarpedStructure:
    """dt^2 + cosh^2(t) du^2: constant flag curvature -1."""
    return build_warped_structure("cosh", n=2, t_range=(-1.2, 1.2),
                                  label="cosh-warp")


def flat_polar_structure() -> WarpedStructure:
    """dt^2 + t^2 du^2: the flat plane in polar coordinates."""
    return build_warped_structure("t", n=2, t_range=(0.35, 2.2),
                                  label="flat-polar")


def preset_structure(name: str, n: int = 2, C: float = 1.0) -> FinslerStructure:
    """CLI preset lookup; raises ValueError for unknown names."""
    if name == "euclidean":
        return euclidean_structure(n)
    if name == "pond":
        return pond_structure()
    if name == "sphere":
        return build_sphere_polar(C, n).structure
    if name == "cosh-warp":
        return cosh_warp_structure().structure
    if name == "riemannian-sphere-chart":
        return riemannian_sphere_chart()
    raise ValueError(
        f"unknown preset {name!r}; expected euclidean | pond | sphere | "
        "cosh-warp | riemannian-sphere-chart or a metric-spec JSON path"
    )


def catalog(n_sphere: int = 2):
    """The structure catalog exercised by the property suites."""
    return [
        euclidean_structure(2),
        pond_structure(),
        build_sphere_polar(1.0, n_sphere).structure,
        riemannian_sphere_chart(),
    ]
