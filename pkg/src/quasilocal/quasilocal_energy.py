"""Wang-Yau quasi-local energy, Brown-York and Liu-Yau masses from boundary data (σ, |H|, V)."""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict

from quasilocal.mesh_core import (MetricField, ScalarField, VectorField, check_scalar, check_vector,
                                  gaussian_curvature, gradient, integrate, laplacian)
from quasilocal.tools.constants import CURVATURE_MARGIN, HAT_EMBED_TOL, LOGGER_MAIN
from quasilocal.tools.errors import EmbeddingNonConvergence, InputError, NotAdmissibleHint
from quasilocal.tools.settings import EmbedConfig
from quasilocal.weyl_embedding import Embedding, ShapeData, continuation_embed, embed, shape_data

logger = logging.getLogger(LOGGER_MAIN)

EIGHT_PI = 8.0 * np.pi
_HAT_CACHE_SIZE = 8
_HAT_CONTINUATION_STEPS = 8


@dataclass(frozen=True)
class HatGeometry:
    """σ̂ = σ + dτ⊗dτ together with its embedding and shape."""
    sigma: MetricField
    embedding: Embedding
    shape: ShapeData

    @property
    def total_mean_curvature(self) -> float:
        return integrate(self.sigma, self.shape.mean_curvature)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary data (σ, |H|, V) of a spacelike 2-sphere.

    For time-symmetric data V vanishes and normH is the mean curvature of Σ in
    the time-symmetric slice.
    """
    sigma: MetricField
    normH: ScalarField
    V: VectorField | None = None
    time_symmetric: bool = False
    embed_config: EmbedConfig = field(default_factory=lambda: EmbedConfig(tol=HAT_EMBED_TOL))

    def __post_init__(self):
        normH = check_scalar(self.sigma, self.normH, "normH").copy()
        if not np.all(np.isfinite(normH)) or np.any(normH <= 0):
            raise InputError("field 'normH' must be positive everywhere")
        V = np.zeros((self.sigma.mesh.face_count, 2)) if self.V is None else check_vector(self.sigma, self.V, "V").copy()
        if self.time_symmetric and np.any(V != 0):
            raise InputError("field 'V' must vanish for time-symmetric data")
        normH.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, 'normH', normH)
        object.__setattr__(self, 'V', V)

    @cached_property
    def embedding(self) -> Embedding:
        return embed(self.sigma, self.embed_config)

    @cached_property
    def shape(self) -> ShapeData:
        return shape_data(self.embedding, self.sigma)

    @cached_property
    def _hat_cache(self) -> OrderedDict:
        return OrderedDict()

    def hat_geometry(self, tau: ScalarField, hat_tol: float = HAT_EMBED_TOL) -> HatGeometry:
        """Embed σ̂(τ), warm-started from the embedding of σ; results are memoized per τ."""
        tau = check_scalar(self.sigma, tau, "tau")
        key = (tau.tobytes(), hat_tol)
        if key in self._hat_cache:
            self._hat_cache.move_to_end(key)
            return self._hat_cache[key]
        if np.ptp(tau) == 0:
            geometry = HatGeometry(self.sigma, self.embedding, self.shape)
        else:
            hat = hat_metric(self.sigma, tau, margin=self.embed_config.curvature_margin)
            config = self.embed_config.model_copy(update={'tol': hat_tol})
            try:
                X_hat = embed(hat, config, initial=self.embedding.positions)
            except EmbeddingNonConvergence:
                logger.warning("warm-started hat embedding failed; following the straight metric path instead")
                X_hat = continuation_embed(hat, self.sigma, self.embedding, _HAT_CONTINUATION_STEPS, config)
            geometry = HatGeometry(hat, X_hat, shape_data(X_hat, hat))
        self._hat_cache[key] = geometry
        if len(self._hat_cache) > _HAT_CACHE_SIZE:
            self._hat_cache.popitem(last=False)
        return geometry

    def with_fields(self, normH: ScalarField | None = None, V: VectorField | None = None) -> 'BoundaryData':
        V = self.V if V is None else V
        return BoundaryData(self.sigma, self.normH if normH is None else normH, V,
                            self.time_symmetric and not np.any(V), self.embed_config)


class EnergyReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    e_wy: float
    hat_area: float
    hat_total_mean_curvature: float
    sigma_integral: float
    theta: np.ndarray
    admissible_hint: bool
    m_by: float | None = None
    m_ly: float | None = None


def hat_metric(sigma: MetricField, tau: ScalarField, margin: float | None = CURVATURE_MARGIN) -> MetricField:
    """Edge lengths ℓ̂² = ℓ² + (τ_i − τ_j)²; refuses metrics with K̂ ≤ margin unless margin is None."""
    tau = check_scalar(sigma, tau, "tau")
    jumps = tau[sigma.mesh.edges[:, 0]] - tau[sigma.mesh.edges[:, 1]]
    hat = MetricField(sigma.mesh, np.sqrt(sigma.lengths ** 2 + jumps ** 2))
    if margin is not None:
        curvature = gaussian_curvature(hat)
        worst = int(np.argmin(curvature))
        if curvature[worst] <= margin:
            raise NotAdmissibleHint(worst, float(curvature[worst]))
    return hat


def gradient_norm_squared(sigma: MetricField, tau: ScalarField) -> ScalarField:
    """Per-vertex |∇τ|² from mass-weighted averages of the face gradients."""
    face = np.sum(gradient(sigma, tau) ** 2, axis=1) * sigma.face_areas / 3.0
    return np.bincount(sigma.mesh.faces.ravel(), weights=np.repeat(face, 3),
                       minlength=sigma.vertex_count) / sigma.vertex_areas


def theta_field(sigma: MetricField, normH: ScalarField, tau: ScalarField) -> ScalarField:
    """θ with sinh θ = −Δτ / (|H| √(1 + |∇τ|²))."""
    normH = check_scalar(sigma, normH, "normH")
    tau = check_scalar(sigma, tau, "tau")
    if np.any(normH <= 0):
        raise InputError("field 'normH' must be positive everywhere")
    laplace_tau = laplacian(sigma).apply(tau)
    return np.arcsinh(-laplace_tau / (normH * np.sqrt(1.0 + gradient_norm_squared(sigma, tau))))


def physical_integral(data: BoundaryData, tau: ScalarField, theta: ScalarField) -> float:
    """∮_Σ [√(1+|∇τ|²) cosh θ |H| − ⟨∇τ, ∇θ⟩ − ⟨V, ∇τ⟩] dv_σ."""
    sigma = data.sigma
    grad_tau = gradient(sigma, tau)
    stretch = np.sqrt(1.0 + gradient_norm_squared(sigma, tau))
    vertex_term = integrate(sigma, stretch * np.cosh(theta) * data.normH)
    coupling = np.sum(grad_tau * gradient(sigma, theta), axis=1) + np.sum(data.V * grad_tau, axis=1)
    return vertex_term - float(sigma.face_areas @ coupling)


def wang_yau_energy(data: BoundaryData, tau: ScalarField, hat_tol: float = HAT_EMBED_TOL) -> EnergyReport:
    tau = check_scalar(data.sigma, tau, "tau")
    hat = data.hat_geometry(tau, hat_tol)
    theta = theta_field(data.sigma, data.normH, tau)
    hat_total = hat.total_mean_curvature
    sigma_total = physical_integral(data, tau, theta)
    energy = (hat_total - sigma_total) / EIGHT_PI
    at_zero = bool(np.ptp(tau) == 0)
    report = EnergyReport(
        e_wy=float(energy),
        hat_area=hat.sigma.area,
        hat_total_mean_curvature=hat_total,
        sigma_integral=sigma_total,
        theta=theta,
        admissible_hint=bool(gaussian_curvature(hat.sigma).min() > data.embed_config.curvature_margin),
        m_by=float(energy) if at_zero and data.time_symmetric else None,
        m_ly=float(energy) if at_zero else None,
    )
    logger.info(f"E_WY = {report.e_wy:.12g} (hat area {report.hat_area:.6g})")
    return report


def brown_york_mass(data: BoundaryData) -> float:
    """(1/8π)∮(H₀ − H) dv_σ for time-symmetric data."""
    if not data.time_symmetric:
        raise InputError("the Brown-York mass needs time-symmetric data")
    mass = (integrate(data.sigma, data.shape.mean_curvature) - integrate(data.sigma, data.normH)) / EIGHT_PI
    logger.info(f"m_BY = {mass:.12g}")
    return float(mass)


def liu_yau_mass(data: BoundaryData) -> float:
    """E_WY at τ = 0, i.e. (1/8π)∮(H₀ − |H|) dv_σ."""
    return wang_yau_energy(data, np.zeros(data.sigma.vertex_count)).e_wy


def reference_mass(data: BoundaryData) -> float:
    return brown_york_mass(data) if data.time_symmetric else liu_yau_mass(data)


@dataclass(frozen=True)
class LocalMinimumCheck:
    excess: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.excess >= self.bound


def local_minimum_check(data: BoundaryData, tau: ScalarField, beta: float, coefficient: float = 0.125) -> LocalMinimumCheck:
    """Compare 8π(E_WY(τ) − E_WY(0)) with coefficient·β·∮(Δτ)²."""
    tau = check_scalar(data.sigma, tau, "tau")
    excess = EIGHT_PI * (wang_yau_energy(data, tau).e_wy - reference_mass(data))
    laplace_tau = laplacian(data.sigma).apply(tau)
    return LocalMinimumCheck(float(excess), float(coefficient * beta * integrate(data.sigma, laplace_tau ** 2)))


def energy_path_derivative(data: BoundaryData, tau: ScalarField, s: float, step: float = 1e-3) -> float:
    """d/ds E_WY(sτ) by a central difference."""
    tau = check_scalar(data.sigma, tau, "tau")
    forward = wang_yau_energy(data, (s + step) * tau).e_wy
    backward = wang_yau_energy(data, (s - step) * tau).e_wy
    return (forward - backward) / (2.0 * step)
