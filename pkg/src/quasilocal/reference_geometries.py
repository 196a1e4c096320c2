"""Closed-form test geometries: round spheres, Schwarzschild coordinate spheres, graphs and ellipsoids.

Known values are derived symbolically with sympy and carry a provenance note.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy

from quasilocal.mesh_core import MetricField, TriMesh, build_icosphere, icosphere_points, integrate, metric_from_positions
from quasilocal.quasilocal_energy import BoundaryData
from quasilocal.tools.constants import LOGGER_MAIN
from quasilocal.tools.errors import InputError
from quasilocal.weyl_embedding import Embedding, Gauge, check_embeddable, embed, shape_data

logger = logging.getLogger(LOGGER_MAIN)


@dataclass(frozen=True)
class KnownValue:
    value: float
    provenance: str


@dataclass(frozen=True, eq=False)
class OracleBundle:
    data: BoundaryData
    known: dict[str, KnownValue] = field(default_factory=dict)
    truth: Embedding | None = None

    def __getitem__(self, name: str) -> float:
        return self.known[name].value


@lru_cache(maxsize=None)
def _round_formulas() -> dict[str, sympy.Expr]:
    r, h, lam = sympy.symbols('r H lambda', positive=True)
    h0 = 2 / r
    area = 4 * sympy.pi * r ** 2
    lambda1 = 2 / r ** 2
    # Rayleigh quotient of B against ∮(Δη)² on a Laplace eigenfunction with eigenvalue lam
    ratio = 1 / h + (h0 - 1 / r - h) / lam
    return {
        'H0': h0,
        'm_BY': sympy.simplify((h0 - h) * area / (8 * sympy.pi)),
        'lambda1': lambda1,
        'II_min': 1 / r,
        'criterion_margin': sympy.expand(lambda1 - h * (h - 1 / r)),
        'beta_low_mode': sympy.simplify(ratio.subs(lam, lambda1)),
        'beta_high_limit': sympy.limit(ratio, lam, sympy.oo),
    }


def _round_value(name: str, radius: float, mean_curvature: float) -> float:
    r, h = sympy.symbols('r H', positive=True)
    return float(_round_formulas()[name].subs({r: radius, h: mean_curvature}))


def round_sphere_known(radius: float, mean_curvature: float) -> dict[str, KnownValue]:
    source = f"round sphere r={radius:g} with constant |H|={mean_curvature:g}"
    known = {name: KnownValue(_round_value(name, radius, mean_curvature), f"{source}: closed form")
             for name in ('H0', 'm_BY', 'lambda1', 'II_min', 'criterion_margin')}
    # the pencil ratio decreases with the eigenvalue only when 1/r > H
    low = _round_value('beta_low_mode', radius, mean_curvature)
    high = _round_value('beta_high_limit', radius, mean_curvature)
    beta_note = "lowest nonconstant mode" if low <= high else "high-frequency limit"
    known['beta'] = KnownValue(min(low, high), f"{source}: Rayleigh quotient on spherical harmonics, {beta_note}")
    known['areal_radius'] = KnownValue(float(radius), f"{source}: defining radius")
    return known


def round_sphere(r: float, H_const: float, subdivisions: int = 4) -> OracleBundle:
    if r <= 0 or H_const <= 0:
        raise InputError("radius and mean curvature must be positive")
    if H_const > 2.0 / r * (1 + 1e-12):
        logger.warning(f"|H|={H_const} exceeds the Euclidean mean curvature {2.0 / r}; the Brown-York mass is negative")
    mesh, sigma = build_icosphere(subdivisions, r)
    data = BoundaryData(sigma, np.full(mesh.vertex_count, float(H_const)), time_symmetric=True)
    return OracleBundle(data, round_sphere_known(r, H_const))


@lru_cache(maxsize=None)
def _schwarzschild_formulas() -> dict[str, sympy.Expr]:
    m, R, r = sympy.symbols('m R r', positive=True)
    lapse = sympy.sqrt(1 - 2 * m / R)
    areal = r * (1 + m / (2 * r)) ** 2
    h = 2 / R * lapse
    h0 = 2 / R
    return {
        'H': h,
        'H0': h0,
        'm_BY': R * (1 - lapse),
        'isotropic_radius': (R - m + sympy.sqrt(R ** 2 - 2 * R * m)) / 2,
        'areal_radius': areal,
        # expansions in the isotropic radius r, truncated after the 1/r² term
        'H_isotropic': sympy.series(h.subs(R, areal), r, sympy.oo, 3).removeO(),
        'H0_isotropic': sympy.series(h0.subs(R, areal), r, sympy.oo, 3).removeO(),
    }


def isotropic_to_areal(m: float, r: float) -> float:
    """Areal radius r(1 + m/2r)² of the isotropic coordinate sphere of radius r."""
    return float(r * (1 + m / (2 * r)) ** 2)


def areal_to_isotropic(m: float, R: float) -> float:
    if R <= 2 * m:
        raise InputError(f"areal radius {R} lies inside the horizon 2m={2 * m}")
    return float((R - m + np.sqrt(R * R - 2 * R * m)) / 2)


def schwarzschild_sphere(m: float, R_areal: float, subdivisions: int = 4) -> OracleBundle:
    """Time-symmetric data of the areal-radius-R coordinate sphere in the Schwarzschild slice."""
    if m <= 0:
        raise InputError(f"mass must be positive, got {m}")
    if R_areal <= 2 * m:
        raise InputError(f"areal radius {R_areal} must exceed the horizon radius 2m={2 * m}")
    formulas = _schwarzschild_formulas()
    ms, Rs, rs = sympy.symbols('m R r', positive=True)
    r_iso = areal_to_isotropic(m, R_areal)
    values = {Rs: R_areal, ms: m}
    source = f"Schwarzschild m={m:g}, areal radius R={R_areal:g}"
    h = float(formulas['H'].subs(values))
    known = {
        'H': KnownValue(h, f"{source}: |H| = (2/R)√(1−2m/R)"),
        'H0': KnownValue(float(formulas['H0'].subs(values)), f"{source}: round sphere of radius R"),
        'm_BY': KnownValue(float(formulas['m_BY'].subs(values)), f"{source}: R(1−√(1−2m/R))"),
        'areal_radius': KnownValue(float(R_areal), f"{source}: defining radius"),
        'isotropic_radius': KnownValue(r_iso, f"{source}: outer root of R = r(1+m/2r)²"),
        'H_isotropic_expansion': KnownValue(float(formulas['H_isotropic'].subs({rs: r_iso, ms: m})),
                                            f"{source}: 2/r − 4m/r² in the isotropic radius"),
        'H0_isotropic_expansion': KnownValue(float(formulas['H0_isotropic'].subs({rs: r_iso, ms: m})),
                                             f"{source}: 2/r − 2m/r² in the isotropic radius"),
        'm_BY_asymptotic': KnownValue(m + m * m / (2 * R_areal), f"{source}: m + m²/2R for large R"),
    }
    round_values = round_sphere_known(R_areal, h)
    for name in ('lambda1', 'II_min', 'criterion_margin', 'beta'):
        known[name] = KnownValue(round_values[name].value, round_values[name].provenance)
    mesh, sigma = build_icosphere(subdivisions, R_areal)
    data = BoundaryData(sigma, np.full(mesh.vertex_count, h), time_symmetric=True)
    return OracleBundle(data, known)


def ellipsoid_curvatures(axes: tuple[float, float, float], points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian and mean (sum of principal) curvature of x²/a² + y²/b² + z²/c² = 1 at surface points."""
    a, b, c = axes
    squared = np.array([a * a, b * b, c * c])
    support = 1.0 / np.sqrt(np.sum(points ** 2 / squared ** 2, axis=1))
    product = a * a * b * b * c * c
    gauss = support ** 4 / product
    mean = support ** 3 * (squared.sum() - np.sum(points ** 2, axis=1)) / product
    return gauss, mean


def _truth(mesh: TriMesh, positions: np.ndarray) -> Embedding:
    return Embedding(mesh, positions, Gauge("sampled", np.zeros(3), np.eye(3)), 0.0)


def ellipsoid_metric(a: float, b: float, c: float, subdivisions: int = 4,
                     seeded: bool = False) -> tuple[MetricField, Embedding]:
    """Intrinsic metric sampled from the ellipsoid with semi-axes (a, b, c) and the sampling embedding."""
    if min(a, b, c) <= 0:
        raise InputError("semi-axes must be positive")
    mesh, _ = build_icosphere(subdivisions)
    positions = icosphere_points(subdivisions) * np.array([a, b, c])
    sampled = metric_from_positions(mesh, positions)
    sigma = sampled if seeded else MetricField(mesh, sampled.lengths)
    return sigma, _truth(mesh, positions)


def graph_sphere(slope, subdivisions: int = 4, axes: tuple[float, float, float] = (1.0, 1.0, 1.0),
                 base: MetricField | None = None) -> OracleBundle:
    """Boundary of a graph over a convex domain: |H| = H₀/√(1 + |∇f|²) with the given boundary slope |∇f|."""
    if base is None:
        sigma, truth = ellipsoid_metric(*axes, subdivisions=subdivisions, seeded=True)
        source = f"graph over the ellipsoid {tuple(axes)}"
    else:
        check_embeddable(base, 0.0)
        sigma, truth = base, embed(base)
        source = "graph over a supplied convex base"
    slope = np.broadcast_to(np.asarray(slope, dtype=np.float64), (sigma.vertex_count,))
    if np.any(slope < 0):
        raise InputError("field 'slope' must be non-negative")
    check_embeddable(sigma, 0.0)
    h0 = shape_data(truth, sigma).mean_curvature
    normH = h0 / np.sqrt(1.0 + slope ** 2)
    data = BoundaryData(sigma, normH, time_symmetric=True)
    known = {
        'm_BY': KnownValue(integrate(sigma, h0 - normH) / (8 * np.pi),
                           f"{source}: (1/8π)∮H₀(1 − 1/√(1+|∇f|²)) by quadrature of the base shape"),
        'H_le_H0': KnownValue(float(np.all(normH <= h0)), f"{source}: slope factor at most one"),
    }
    if base is None and len(set(axes)) == 1 and np.ptp(slope) == 0:
        r = axes[0]
        factor = 1.0 - 1.0 / np.sqrt(1.0 + slope[0] ** 2)
        known['m_BY_closed_form'] = KnownValue(_round_value('m_BY', r, 0.0) * factor,
                                               f"{source}: (1/8π)(2/r)(1 − 1/√(1+s²))·4πr²")
    return OracleBundle(data, known, truth)
