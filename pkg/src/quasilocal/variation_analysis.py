"""First and second variation of the quasi-local energy and the stability inequalities built on them.

Everything fourth order is assembled in weak form from the cotangent stiffness
L, the lumped mass M and the per-face gradient matrix G:

    B = L diag(1/(|H| M)) L + Gᵀ diag(A_f (T_f − |H|_f I)) G,   T = tr(II₀) I − II₀
    D = L M⁻¹ L                                                   (Galerkin matrix of ∮ΔηΔφ)

so that ηᵀBη = ∮[(Δη)²/|H| + (H₀ − |H|)|∇η|² − II₀(∇η, ∇η)] with no discrete Hessian.
"""
import logging
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict

from quasilocal.mesh_core import (GalerkinOperator, MetricField, ScalarField, check_scalar, face_average,
                                  first_nonzero_eigenvalue, generalized_eigenpairs, gradient, icosphere_points,
                                  laplacian)
from quasilocal.quasilocal_energy import (EIGHT_PI, BoundaryData, gradient_norm_squared, reference_mass,
                                          theta_field)
from quasilocal.tools.constants import DIRECTION_SAMPLE_SUBDIVISIONS, HAT_EMBED_TOL, LOGGER_MAIN
from quasilocal.tools.errors import InputError
from quasilocal.tools.settings import StabilityConfig
from quasilocal.weyl_embedding import Embedding, ShapeData, shape_data

logger = logging.getLogger(LOGGER_MAIN)

Prefactor = Literal["none", "eight_pi"]


class StabilityReport(BaseModel):
    """Stability coefficient and the inequalities around it.

    β and the gap carry no 1/8π; minimal_second_variation is the second variation
    of the unit minimizing η in the chosen prefactor convention.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    beta: float
    minimizing_eta: np.ndarray
    lambda1: float
    eigenvalue_criterion_margin: float
    beta_lower_bound: float
    linear_bound_gap: float
    eigenvalues: np.ndarray
    participation: np.ndarray
    prefactor: str = "none"
    minimal_second_variation: float = 0.0


def _assemble(sigma: MetricField, flux: np.ndarray) -> np.ndarray:
    """Entries ∑_f ⟨flux_f, ∇φ_i⟩ for per-face vectors already weighted by area."""
    return sigma.gradient_matrix.T @ flux.ravel()


def _face_block_operator(sigma: MetricField, tensors: np.ndarray) -> sp.csr_matrix:
    """Gᵀ diag(A_f tensors_f) G."""
    f = sigma.mesh.face_count
    rows = 2 * np.arange(f)[:, None, None] + np.arange(2)[None, :, None]
    cols = 2 * np.arange(f)[:, None, None] + np.arange(2)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    blocks = sp.csr_matrix(((sigma.face_areas[:, None, None] * tensors).ravel(), (rows.ravel(), cols.ravel())),
                           shape=(2 * f, 2 * f))
    grad = sigma.gradient_matrix
    return (grad.T @ blocks @ grad).tocsr()


def newton_tensor(shape: ShapeData) -> np.ndarray:
    """T = H₀σ − II₀ per face, with H₀ the face trace of II₀."""
    second = shape.second_fundamental
    return shape.face_mean_curvature[:, None, None] * np.eye(2) - second


def el_galerkin(data: BoundaryData, tau: ScalarField, hat_tol: float = HAT_EMBED_TOL) -> np.ndarray:
    """Weak Euler-Lagrange residual, one entry per hat function φ_i.

    g_i = ∮_Σ̂ (Ĥσ̂ − ĥ)(∇̂τ, ∇̂φ_i) dv̂ − ∮_Σ ⟨cosh θ |H| ∇τ/√(1+|∇τ|²) − ∇θ − V, ∇φ_i⟩ dv.
    The first term is the by-parts form of (Ĥσ̂ − ĥ):∇̂²τ, using that Ĥσ̂ − ĥ is
    divergence free on σ̂. The entries sum to zero because the φ_i sum to one.
    """
    sigma = data.sigma
    tau = check_scalar(sigma, tau, "tau")
    hat = data.hat_geometry(tau, hat_tol)
    hat_flux = hat.sigma.face_areas[:, None] * np.einsum('fde,fe->fd', newton_tensor(hat.shape),
                                                        gradient(hat.sigma, tau))
    theta = theta_field(sigma, data.normH, tau)
    weight = np.cosh(theta) * data.normH / np.sqrt(1.0 + gradient_norm_squared(sigma, tau))
    grad_tau = gradient(sigma, tau)
    flux = sigma.face_areas[:, None] * (face_average(sigma, weight)[:, None] * grad_tau
                                        - gradient(sigma, theta) - data.V)
    return _assemble(hat.sigma, hat_flux) - _assemble(sigma, flux)


def el_residual(data: BoundaryData, tau: ScalarField, weighting: Literal["sigma", "hat"] = "sigma",
                hat_tol: float = HAT_EMBED_TOL) -> ScalarField:
    """Mass-normalized residual field; integrates to zero against the chosen volume form."""
    g = el_galerkin(data, tau, hat_tol)
    if weighting == "hat":
        return g / data.hat_geometry(tau, hat_tol).sigma.vertex_areas
    return g / data.sigma.vertex_areas


def residual_norm(sigma: MetricField, galerkin: np.ndarray) -> float:
    """L² norm of the mass-normalized field g/M."""
    return float(np.sqrt(np.sum(galerkin ** 2 / sigma.vertex_areas)))


def biharmonic_operator(sigma: MetricField) -> GalerkinOperator:
    stiffness = sigma.stiffness
    return GalerkinOperator((stiffness @ sp.diags(1.0 / sigma.vertex_areas) @ stiffness).tocsr(), sigma.vertex_areas)


def linearized_operator(data: BoundaryData) -> GalerkinOperator:
    """Galerkin matrix of B(η, φ) at τ = 0."""
    sigma = data.sigma
    stiffness = sigma.stiffness
    fourth = stiffness @ sp.diags(1.0 / (data.normH * sigma.vertex_areas)) @ stiffness
    face_h = face_average(sigma, data.normH)
    tensors = newton_tensor(data.shape) - face_h[:, None, None] * np.eye(2)
    matrix = (fourth + _face_block_operator(sigma, tensors)).tocsr()
    return GalerkinOperator((0.5 * (matrix + matrix.T)).tocsr(), sigma.vertex_areas)


def _scaled(value: float, prefactor: Prefactor) -> float:
    if prefactor == "eight_pi":
        return value / EIGHT_PI
    if prefactor != "none":
        raise InputError(f"unknown prefactor convention '{prefactor}'")
    return value


def second_variation(data: BoundaryData, eta: ScalarField, prefactor: Prefactor = "none",
                     operator: GalerkinOperator | None = None) -> float:
    """ηᵀBη, the bracketed integral of the second variation; divided by 8π when prefactor is 'eight_pi'."""
    eta = check_scalar(data.sigma, eta, "eta")
    operator = operator or linearized_operator(data)
    return _scaled(operator.form(eta), prefactor)


def _laplace_terms(sigma: MetricField, eta: ScalarField) -> np.ndarray:
    """Per-vertex (Δη)² M, the lumped weights of ∮(Δη)²."""
    stiff_eta = sigma.stiffness @ eta
    return stiff_eta ** 2 / sigma.vertex_areas


def _trace_defect(sigma: MetricField, shape: ShapeData) -> np.ndarray:
    """Per-face tr(II₀) minus the face average of the vertex H₀; O(h²) on smooth surfaces."""
    return shape.face_mean_curvature - face_average(sigma, shape.mean_curvature)


def i1_form(data: BoundaryData, eta: ScalarField) -> float:
    """I₁(η, η) = ∮[(Δη)²/H − (Δη)²/H₀ + (H₀ − H)|∇η|²].

    Both terms sample H₀ at the vertices, so H ≤ H₀ vertexwise makes every
    term non-negative. The trace defect of the face II₀ is carried by i2_form.
    """
    sigma = data.sigma
    eta = check_scalar(sigma, eta, "eta")
    shape = data.shape
    vertex = _laplace_terms(sigma, eta) @ (1.0 / data.normH - 1.0 / shape.mean_curvature)
    face_gap = face_average(sigma, shape.mean_curvature - data.normH)
    grad_sq = np.sum(gradient(sigma, eta) ** 2, axis=1)
    return float(vertex + sigma.face_areas @ (face_gap * grad_sq))


def i2_form(X: Embedding, sigma: MetricField, eta: ScalarField, shape: ShapeData | None = None) -> float:
    """I₂(η, η) = ∮[(Δη)²/H₀ − II₀(∇η, ∇η)], non-negative on convex surfaces.

    The gradient part is T(∇η, ∇η) − H₀|∇η|² with T = tr(II₀)σ − II₀ as in the
    second variation, so that i1_form + i2_form reproduces second_variation.
    """
    eta = check_scalar(sigma, eta, "eta")
    shape = shape or shape_data(X, sigma)
    grad = gradient(sigma, eta)
    form = np.einsum('fd,fde,fe->f', grad, shape.second_fundamental, grad)
    defect = _trace_defect(sigma, shape) * np.sum(grad ** 2, axis=1)
    return float(_laplace_terms(sigma, eta) @ (1.0 / shape.mean_curvature) + sigma.face_areas @ (defect - form))


def _pencil_shift(data: BoundaryData, lambda1: float) -> float:
    """A value strictly below every eigenvalue of (B, D)."""
    face_h = face_average(data.sigma, data.normH)
    excess = np.linalg.eigvalsh(newton_tensor(data.shape) - face_h[:, None, None] * np.eye(2))[:, 0]
    worst = max(0.0, -float(excess.min()))
    return 0.5 / float(data.normH.max()) - worst / lambda1


def pencil_eigenpairs(data: BoundaryData, k: int, dense_limit: int, lambda1: float | None = None,
                      nearest: float | None = None, operator: GalerkinOperator | None = None):
    sigma = data.sigma
    operator = operator or linearized_operator(data)
    lambda1 = lambda1 if lambda1 is not None else first_nonzero_eigenvalue(sigma, dense_limit=dense_limit).value
    return generalized_eigenpairs(operator.matrix, biharmonic_operator(sigma).matrix, sigma.vertex_areas, k,
                                  _pencil_shift(data, lambda1), dense_limit=dense_limit, nearest=nearest)


def kernel_ratio(data: BoundaryData, dense_limit: int, operator: GalerkinOperator | None = None
                 ) -> tuple[float, np.ndarray]:
    """Smallest |eigenvalue| of (B, D) on mean-zero fields, relative to the high-frequency limit 1/min|H|.

    This is the scale-free form of "smallest deflated eigenvalue of B below
    tol·‖B‖": B is measured in the D norm instead of the max norm, and since
    (B, D) tends to 1/|H| on fine modes, ratio·‖B‖_D ≈ |μ_min|. A threshold on
    the matrix entries of B depends on the mesh size while this ratio does
    not. Round data of mass m at areal radius R give (1 − x)(1 + 2x) ≈ 3m/R with
    x = √(1 − 2m/R); flat data sit at the O(h²) discretization floor.

    Returns the ratio and the corresponding near-null field.
    """
    values, vectors = pencil_eigenpairs(data, 1, dense_limit, nearest=0.0, operator=operator)
    ratio = abs(float(values[0])) * float(data.normH.min())
    return ratio, vectors[:, 0]


def eigenvalue_criterion(data: BoundaryData, lambda1: float | None = None) -> float:
    """λ₁ − H^max(H^max − II₀^min); positive values imply a positive β."""
    lambda1 = lambda1 if lambda1 is not None else first_nonzero_eigenvalue(data.sigma).value
    h_max = float(data.normH.max())
    return float(lambda1 - h_max * (h_max - data.shape.min_principal))


def beta_lower_bound(data: BoundaryData, margin: float, lambda1: float) -> float:
    """δ₁/H^max with δ₁ = min(1, δ/λ₁); zero when the criterion fails."""
    if margin <= 0:
        return 0.0
    return min(1.0, margin / lambda1) / float(data.normH.max())


def linear_function_bound(data: BoundaryData, X: Embedding, operator: GalerkinOperator | None = None) -> float:
    """min over unit a of Q(a·X) − 8π m, sampled on icosphere directions and polished on the sphere."""
    operator = operator or linearized_operator(data)
    coordinates = X.positions - X.positions.mean(axis=0)
    gram = coordinates.T @ (operator.matrix @ coordinates)
    gram = 0.5 * (gram + gram.T)
    directions = icosphere_points(DIRECTION_SAMPLE_SUBDIVISIONS)
    values = np.einsum('nk,kl,nl->n', directions, gram, directions)
    a = directions[int(np.argmin(values))]
    best = float(values.min())
    # one Newton step for the Rayleigh quotient restricted to the tangent plane at a
    mu = float(a @ gram @ a)
    projector = np.eye(3) - np.outer(a, a)
    hessian = projector @ (gram - mu * np.eye(3)) @ projector
    step = -np.linalg.pinv(hessian) @ (projector @ (gram @ a - mu * a))
    polished = (a + step) / np.linalg.norm(a + step)
    best = min(best, float(polished @ gram @ polished))
    gap = best - EIGHT_PI * reference_mass(data)
    logger.debug(f"linear function bound gap {gap:.6g}")
    return gap


def harmonic_basis(X: Embedding, sigma: MetricField) -> np.ndarray:
    """Mean-zero coordinate functions, spanning the degree-1 harmonics of round data."""
    coordinates = X.positions
    return coordinates - (sigma.vertex_areas @ coordinates) / sigma.area


def participation(sigma: MetricField, values: ScalarField, basis: np.ndarray) -> float:
    """Mass-weighted share of a field lying in the span of the basis columns."""
    values = check_scalar(sigma, values, "field")
    mass = sigma.vertex_areas
    gram = basis.T @ (mass[:, None] * basis)
    coefficients = np.linalg.solve(gram, basis.T @ (mass * values))
    projected = basis @ coefficients
    total = float(values @ (mass * values))
    return float(projected @ (mass * projected)) / total if total > 0 else 0.0


def normalize_field(sigma: MetricField, values: ScalarField) -> ScalarField:
    """Scale to ∮η² = 1 with the first significant entry positive."""
    values = values / np.sqrt(values @ (sigma.vertex_areas * values))
    first = np.flatnonzero(np.abs(values) > 1e-8 * np.abs(values).max())[0]
    return values * np.sign(values[first])


def stability_beta(data: BoundaryData, config: StabilityConfig | None = None) -> StabilityReport:
    config = config or StabilityConfig()
    sigma = data.sigma
    operator = linearized_operator(data)
    lambda1 = first_nonzero_eigenvalue(sigma, dense_limit=config.dense_limit).value
    values, vectors = pencil_eigenpairs(data, config.eigen_count, config.dense_limit, lambda1, operator=operator)
    basis = harmonic_basis(data.embedding, sigma)
    margin = eigenvalue_criterion(data, lambda1)
    eta = normalize_field(sigma, vectors[:, 0])
    report = StabilityReport(
        beta=float(values[0]),
        minimizing_eta=eta,
        lambda1=lambda1,
        eigenvalue_criterion_margin=margin,
        beta_lower_bound=beta_lower_bound(data, margin, lambda1),
        linear_bound_gap=linear_function_bound(data, data.embedding, operator),
        eigenvalues=values,
        participation=np.array([participation(sigma, vectors[:, k], basis) for k in range(len(values))]),
        prefactor=config.prefactor,
        minimal_second_variation=second_variation(data, eta, config.prefactor, operator),
    )
    logger.info(f"beta = {report.beta:.9g}, lambda_1 = {lambda1:.9g}, criterion margin = {margin:.6g}")
    return report
