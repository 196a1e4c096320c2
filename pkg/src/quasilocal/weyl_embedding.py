"""Isometric embedding of positively curved sphere metrics into R³ and its linearization.

The embedding is found by Newton/Gauss-Newton on the per-edge strain
``(|x_i − x_j|² − ℓ²) / (2ℓ²)``. A closed convex triangulated sphere has exactly
``3V − 6`` edges, so once six coordinates are pinned to remove the rigid motions
the strain Jacobian is square, and it is nonsingular for infinitesimally rigid
(convex) polyhedra.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls
from scipy.sparse.linalg import lsqr, spsolve, splu
from scipy.spatial.transform import Rotation

from quasilocal.mesh_core import (MetricField, ScalarField, SymTensorField, TriMesh, blend_metrics, check_tensor,
                                  edge_tensor, gaussian_curvature, generalized_eigenpairs, tensor_on_edges)
from quasilocal.tools.constants import LOGGER_MAIN
from quasilocal.tools.errors import EmbeddingNonConvergence, InputError, NotEmbeddableHere, ShapeFitError
from quasilocal.tools.settings import EmbedConfig

logger = logging.getLogger(LOGGER_MAIN)

_ARMIJO = 1e-4
_MIN_LINE_STEP = 2.0 ** -30
_MAX_DAMPING = 1e8
PRINCIPAL_GAP = 1e-4
SHAPE_FD_STEP = 1e-6


@dataclass(frozen=True)
class Gauge:
    """How raw solver positions were moved: x ↦ (x − centroid) @ rotation."""
    mode: str
    centroid: np.ndarray
    rotation: np.ndarray

    def describe(self) -> str:
        return f"mode={self.mode} centroid={' '.join(f'{c:.17g}' for c in self.centroid)}"


@dataclass(frozen=True, eq=False)
class Embedding:
    mesh: TriMesh
    positions: np.ndarray
    gauge: Gauge
    residual: float
    iterations: int = 0
    history: tuple[float, ...] = ()
    picard_fallback: bool = False

    @cached_property
    def linear_system(self) -> '_LinearizedSystem':
        return _LinearizedSystem(self.mesh, self.positions)

    @property
    def volume(self) -> float:
        return signed_volume(self.mesh, self.positions)

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(_edge_vectors(self.mesh, self.positions), axis=1)


@dataclass(frozen=True)
class Displacement:
    """Solution Y of 2dX·dY = ρ with Y(vertex 0) = 0 and no infinitesimal rotation about vertex 0."""
    values: np.ndarray
    residual_norm: float
    flat_warning: bool = False


@dataclass(frozen=True, eq=False)
class ShapeData:
    normals: np.ndarray
    mean_curvature: ScalarField
    gauss_curvature: ScalarField
    second_fundamental: SymTensorField
    edge_curvature: np.ndarray = field(repr=False)

    @cached_property
    def principal_curvatures(self) -> np.ndarray:
        """(F, 2) ascending eigenvalues of II₀ per face."""
        return np.linalg.eigvalsh(self.second_fundamental)

    @property
    def face_mean_curvature(self) -> np.ndarray:
        return np.trace(self.second_fundamental, axis1=1, axis2=2)

    @property
    def min_principal(self) -> float:
        return float(self.principal_curvatures[:, 0].min())

    @property
    def convex(self) -> bool:
        return bool(np.all(self.mean_curvature > 0) and self.min_principal > 0)


def _edge_vectors(mesh: TriMesh, positions: np.ndarray) -> np.ndarray:
    return positions[mesh.edges[:, 0]] - positions[mesh.edges[:, 1]]


def signed_volume(mesh: TriMesh, positions: np.ndarray) -> float:
    p = positions[mesh.faces]
    return float(np.einsum('ij,ij->', p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0)


def _strain(mesh: TriMesh, positions: np.ndarray, squared: np.ndarray) -> np.ndarray:
    d = _edge_vectors(mesh, positions)
    return (np.einsum('ij,ij->i', d, d) - squared) / (2.0 * squared)


def _edge_jacobian(mesh: TriMesh, positions: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
    """Rows weights_e·(x_i − x_j)·(δy_i − δy_j) over the stacked 3V displacement."""
    d = _edge_vectors(mesh, positions) * weights[:, None]
    n_edges = len(d)
    rows = np.repeat(np.arange(n_edges), 3)
    cols_i = (3 * mesh.edges[:, 0][:, None] + np.arange(3)).ravel()
    cols_j = (3 * mesh.edges[:, 1][:, None] + np.arange(3)).ravel()
    return sp.csr_matrix((np.concatenate([d.ravel(), -d.ravel()]),
                          (np.concatenate([rows, rows]), np.concatenate([cols_i, cols_j]))),
                         shape=(n_edges, 3 * mesh.vertex_count))


def _free_columns(positions: np.ndarray) -> np.ndarray:
    """Every coordinate except the six that pin a rigid motion.

    Vertex 0 is fixed; vertex 1 keeps only its coordinate along the dominant
    axis of x₁ − x₀; vertex 2 loses the coordinate along the dominant axis of
    the normal of the triangle (x₀, x₁, x₂).
    """
    x0, x1, x2 = positions[0], positions[1], positions[2]
    axis1 = int(np.argmax(np.abs(x1 - x0)))
    axis2 = int(np.argmax(np.abs(np.cross(x1 - x0, x2 - x0))))
    pinned = [0, 1, 2] + [3 + k for k in range(3) if k != axis1] + [6 + axis2]
    return np.setdiff1d(np.arange(3 * len(positions)), pinned)


def _rotation_about_anchor(positions: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """Remove the least-squares infinitesimal rotation ω × (x − x₀) from a displacement."""
    arm = positions - positions[0]
    # ω × r = −[r]ₓ ω, stacked over vertices
    basis = np.zeros((len(arm), 3, 3))
    basis[:, 0, 1], basis[:, 0, 2] = arm[:, 2], -arm[:, 1]
    basis[:, 1, 0], basis[:, 1, 2] = -arm[:, 2], arm[:, 0]
    basis[:, 2, 0], basis[:, 2, 1] = arm[:, 1], -arm[:, 0]
    stacked = basis.reshape(-1, 3)
    omega, *_ = np.linalg.lstsq(stacked, displacement.ravel(), rcond=None)
    return displacement - (stacked @ omega).reshape(-1, 3)


def remove_rigid_motion(positions: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """Project a displacement into the gauge used by linearized_embed."""
    displacement = np.asarray(displacement, dtype=np.float64)
    return _rotation_about_anchor(positions, displacement - displacement[0])


class _LinearizedSystem:
    """Pinned square system 2(x_i − x_j)·(y_i − y_j) = ρ_e at a fixed placement."""

    def __init__(self, mesh: TriMesh, positions: np.ndarray):
        self.mesh = mesh
        self.positions = positions
        self.free = _free_columns(positions)
        self.matrix = _edge_jacobian(mesh, positions, np.full(mesh.edge_count, 2.0))[:, self.free].tocsc()
        try:
            self.factor = splu(self.matrix)
        except RuntimeError:
            logger.warning("linearized embedding system is singular beyond rigid motions; using least squares")
            self.factor = None

    def solve(self, rho_edges: np.ndarray) -> Displacement:
        if self.factor is not None:
            y_free = self.factor.solve(rho_edges)
            flat = False
        else:
            y_free = lsqr(self.matrix, rho_edges, atol=1e-14, btol=1e-14, iter_lim=20 * len(rho_edges))[0]
            flat = True
        y = np.zeros(3 * self.mesh.vertex_count)
        y[self.free] = y_free
        values = _rotation_about_anchor(self.positions, y.reshape(-1, 3))
        residual = float(np.linalg.norm(self.matrix @ y_free - rho_edges))
        return Displacement(values, residual, flat)


def gauge_positions(positions: np.ndarray) -> tuple[np.ndarray, Gauge]:
    """Move the centroid to the origin and rotate into a canonical frame.

    The inertia principal frame (ascending moments) is used when its moments are
    separated; otherwise the frame is anchored on vertices 0 and 1. Column signs
    make the first vertex with a non-negligible projection positive.
    """
    centroid = positions.mean(axis=0)
    centered = positions - centroid
    moments, axes = np.linalg.eigh(centered.T @ centered)
    scale = np.sqrt(moments[-1])
    if np.all(np.diff(moments) > PRINCIPAL_GAP * moments[-1]):
        mode = "principal"
        frame = axes.copy()
        for k in range(2):
            projection = centered @ frame[:, k]
            first = np.flatnonzero(np.abs(projection) > 1e-8 * scale)[0]
            frame[:, k] *= np.sign(projection[first])
        frame[:, 2] = np.cross(frame[:, 0], frame[:, 1])
    else:
        mode = "vertex"
        e1 = centered[0] / np.linalg.norm(centered[0])
        e2 = centered[1] - (centered[1] @ e1) * e1
        e2 /= np.linalg.norm(e2)
        frame = np.stack([e1, e2, np.cross(e1, e2)], axis=1)
    return centered @ frame, Gauge(mode, centroid, frame)


def rigid_align(positions: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float]:
    """Best rotation and translation of positions onto reference; returns the moved positions and their RMS gap."""
    source = positions - positions.mean(axis=0)
    target = reference - reference.mean(axis=0)
    rotation, _ = Rotation.align_vectors(target, source)
    aligned = rotation.apply(source) + reference.mean(axis=0)
    return aligned, float(np.sqrt(np.mean(np.sum((aligned - reference) ** 2, axis=1))))


def check_embeddable(sigma: MetricField, margin: float, parameter: float | None = None):
    curvature = gaussian_curvature(sigma)
    worst = int(np.argmin(curvature))
    if curvature[worst] <= margin:
        raise NotEmbeddableHere(worst, float(curvature[worst]), parameter)


def _spectral_positions(sigma: MetricField) -> np.ndarray:
    """Initial placement from the first three nonconstant Laplace eigenvectors, scaled to fit the edge lengths."""
    mass = sigma.vertex_areas
    _, vectors = generalized_eigenpairs(-sigma.stiffness, sp.diags(mass), mass, 3, -0.8 * np.pi / sigma.area)
    edges = sigma.mesh.edges
    spread = (vectors[edges[:, 0]] - vectors[edges[:, 1]]) ** 2
    weights, _ = nnls(spread, sigma.lengths ** 2)
    if np.any(weights <= 0):
        weights = np.full(3, max(weights.mean(), 1e-12))
    positions = vectors * np.sqrt(weights)
    if signed_volume(sigma.mesh, positions) < 0:
        positions[:, 0] *= -1.0
    return positions


def _newton_step(jacobian: sp.csc_matrix, strain: np.ndarray, damping: float | None) -> np.ndarray:
    if damping is None:
        try:
            return splu(jacobian).solve(-strain)
        except RuntimeError:
            damping = 1e-6
    normal = (jacobian.T @ jacobian).tocsc()
    return spsolve(normal + damping * sp.diags(normal.diagonal()), -(jacobian.T @ strain))


def _gauss_newton(sigma: MetricField, positions: np.ndarray, tol: float, max_iter: int,
                  initial_damping: float) -> tuple[np.ndarray, float, int, tuple[float, ...]]:
    mesh = sigma.mesh
    squared = sigma.lengths ** 2
    x = positions.ravel().copy()
    free = _free_columns(positions)
    strain = _strain(mesh, positions, squared)
    history = [float(np.sqrt(np.mean(strain ** 2)))]
    damping = None
    iteration = 0
    while history[-1] >= tol and iteration < max_iter:
        iteration += 1
        current = x.reshape(-1, 3)
        jacobian = _edge_jacobian(mesh, current, 1.0 / squared)[:, free].tocsc()
        step = _newton_step(jacobian, strain, damping)
        slope = float(strain @ (jacobian @ step))
        energy = 0.5 * float(strain @ strain)
        t = 1.0
        while t >= _MIN_LINE_STEP:
            trial = x.copy()
            trial[free] += t * step
            trial_strain = _strain(mesh, trial.reshape(-1, 3), squared)
            if 0.5 * float(trial_strain @ trial_strain) <= energy + _ARMIJO * t * slope:
                break
            t *= 0.5
        else:
            damping = initial_damping if damping is None else 100.0 * damping
            logger.debug(f"embedding line search failed at iteration {iteration}; damping {damping:.1e}")
            if damping > _MAX_DAMPING:
                break
            continue
        x, strain = trial, trial_strain
        damping = None if damping is None or damping <= initial_damping else damping / 10.0
        history.append(float(np.sqrt(np.mean(strain ** 2))))
        logger.debug(f"embedding iteration {iteration}: step {t:.3g}, relative edge RMS {history[-1]:.3e}")
    return x.reshape(-1, 3), history[-1], iteration, tuple(history)


def _finish(sigma: MetricField, positions: np.ndarray, tol: float, max_iter: int, damping: float,
            picard_fallback: bool = False) -> Embedding:
    positions, residual, iterations, history = _gauss_newton(sigma, positions, tol, max_iter, damping)
    if residual >= tol:
        raise EmbeddingNonConvergence(residual, iterations, positions)
    if signed_volume(sigma.mesh, positions) < 0:
        positions = positions * np.array([-1.0, 1.0, 1.0])
    gauged, gauge = gauge_positions(positions)
    return Embedding(sigma.mesh, gauged, gauge, residual, iterations, history, picard_fallback)


def embed(sigma: MetricField, config: EmbedConfig | None = None, initial: np.ndarray | None = None) -> Embedding:
    """Isometric embedding of a positively curved metric, unique up to the gauge.

    The starting placement is ``initial`` when given, else the metric's seed
    positions, else a spectral placement from Laplace eigenvectors.
    """
    config = config or EmbedConfig()
    check_embeddable(sigma, config.curvature_margin)
    if initial is not None:
        start = np.asarray(initial, dtype=np.float64)
        if start.shape != (sigma.vertex_count, 3):
            raise InputError(f"initial positions have shape {start.shape}, expected ({sigma.vertex_count}, 3)")
    elif sigma.seed_positions is not None:
        start = sigma.seed_positions
    else:
        start = _spectral_positions(sigma)
    result = _finish(sigma, start, config.tol, config.max_iter, config.damping)
    logger.info(f"embedding converged in {result.iterations} iterations, relative edge RMS {result.residual:.3e}")
    return result


def linearized_embed(X: Embedding, sigma: MetricField, rho: SymTensorField) -> Displacement:
    """Solve 2dX·dY = ρ on every edge."""
    if X.mesh.vertex_count != sigma.vertex_count:
        raise InputError("embedding and metric live on different meshes")
    return X.linear_system.solve(tensor_on_edges(sigma, rho))


def continuation_embed(sigma_target: MetricField, sigma_start: MetricField, X_start: Embedding, steps: int,
                       config: EmbedConfig | None = None) -> Embedding:
    """Follow the straight path from σ_start to σ_target, one Picard solve of the embedding equation per step."""
    config = config or EmbedConfig()
    if steps < 1:
        raise InputError(f"steps must be positive, got {steps}")
    if sigma_target.vertex_count != sigma_start.vertex_count or X_start.mesh.vertex_count != sigma_start.vertex_count:
        raise InputError("continuation endpoints live on different meshes")
    if np.array_equal(sigma_target.lengths, sigma_start.lengths):
        gauged, gauge = gauge_positions(X_start.positions)
        return Embedding(X_start.mesh, gauged, gauge, X_start.residual, 0, X_start.history, X_start.picard_fallback)

    positions = X_start.positions
    fallback = False
    for k in range(1, steps + 1):
        t = k / steps
        sigma_t = blend_metrics(sigma_start, sigma_target, t)
        check_embeddable(sigma_t, config.curvature_margin, parameter=t)
        system = _LinearizedSystem(sigma_t.mesh, positions)
        d = _edge_vectors(sigma_t.mesh, positions)
        defect = sigma_t.lengths ** 2 - np.einsum('ij,ij->i', d, d)
        displacement = np.zeros_like(positions)
        previous = None
        for iteration in range(config.picard_max_iter):
            dy = _edge_vectors(sigma_t.mesh, displacement)
            update = system.solve(defect - np.einsum('ij,ij->i', dy, dy)).values
            increment = float(np.linalg.norm(update - displacement))
            displacement = update
            if previous is not None and increment > config.picard_contraction * previous:
                fallback = True
                logger.warning(f"Picard iteration not contracting at t={t:.4g} "
                               f"(ratio {increment / previous:.3f}); continuing with Gauss-Newton")
                break
            if increment <= config.tol * np.linalg.norm(positions):
                break
            previous = increment
        logger.debug(f"continuation step t={t:.4g}: {iteration + 1} Picard iterations")
        positions, residual, _, _ = _gauss_newton(sigma_t, positions + displacement, config.tol, config.max_iter,
                                                  config.damping)
        if residual >= config.tol:
            raise EmbeddingNonConvergence(residual, config.max_iter, positions)
    return _finish(sigma_target, positions, config.tol, config.max_iter, config.damping, fallback)


def vertex_normals(mesh: TriMesh, positions: np.ndarray) -> np.ndarray:
    """Area-weighted face normals accumulated at vertices; outward for positively oriented placements."""
    p = positions[mesh.faces]
    face_normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    normals = np.zeros_like(positions)
    for c in range(3):
        np.add.at(normals, mesh.faces[:, c], face_normals)
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def _tangent_frames(mesh: TriMesh, positions: np.ndarray, normals: np.ndarray) -> np.ndarray:
    t1 = positions[mesh.first_neighbor()] - positions
    t1 -= np.einsum('ij,ij->i', t1, normals)[:, None] * normals
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    return np.stack([t1, np.cross(normals, t1)], axis=-1)


def _fit_vertex_forms(mesh: TriMesh, positions: np.ndarray):
    """Per-vertex chart metric and second fundamental form from an implicit quadric over the 2-ring.

    In tangent coordinates (u, v, w) scaled by the ring radius, the fitted surface is
    w = a u² + b uv + c v² + d u + e v + f w² + g uw + k vw, which holds exactly on spheres.
    """
    normals = vertex_normals(mesh, positions)
    tangents = _tangent_frames(mesh, positions, normals)
    rings = mesh.two_ring
    sizes = np.array([len(r) for r in rings])
    metric = np.empty((mesh.vertex_count, 2, 2))
    form = np.empty((mesh.vertex_count, 2, 2))
    for size in np.unique(sizes):
        verts = np.flatnonzero(sizes == size)
        neighbors = np.stack([rings[v] for v in verts])
        rel = positions[neighbors] - positions[verts][:, None, :]
        u = np.einsum('bnk,bk->bn', rel, tangents[verts, :, 0])
        v = np.einsum('bnk,bk->bn', rel, tangents[verts, :, 1])
        w = np.einsum('bnk,bk->bn', rel, normals[verts])
        scale = np.sqrt(np.mean(u ** 2 + v ** 2, axis=1))
        U, V, W = u / scale[:, None], v / scale[:, None], w / scale[:, None]
        design = np.stack([U * U, U * V, V * V, U, V, W * W, U * W, V * W], axis=-1)
        ranks = np.atleast_1d(np.linalg.matrix_rank(design[..., :5]))
        if np.any(ranks < 5):
            worst = int(np.argmin(ranks))
            raise ShapeFitError(int(verts[worst]), int(ranks[worst]))
        a, b, c, d, e, f, g, k = np.einsum('bkn,bn->bk', np.linalg.pinv(design), W).T
        w_uu = (2 * a + 2 * g * d + 2 * f * d * d) / scale
        w_uv = (b + g * e + k * d + 2 * f * d * e) / scale
        w_vv = (2 * c + 2 * k * e + 2 * f * e * e) / scale
        root = np.sqrt(1.0 + d * d + e * e)
        form[verts] = -np.stack([np.stack([w_uu, w_uv], -1), np.stack([w_uv, w_vv], -1)], -2) / root[:, None, None]
        slope = np.stack([d, e], axis=-1)
        metric[verts] = np.eye(2) + slope[:, :, None] * slope[:, None, :]
    return normals, tangents, metric, form


def _normal_curvature(direction: np.ndarray, metric: np.ndarray, form: np.ndarray) -> np.ndarray:
    return np.einsum('ea,eab,eb->e', direction, form, direction) / np.einsum('ea,eab,eb->e', direction, metric, direction)


def _edge_curvature(mesh: TriMesh, positions: np.ndarray, fits=None) -> np.ndarray:
    """Normal curvature along every edge, averaged over the fits at its two endpoints."""
    _, tangents, metric, form = fits if fits is not None else _fit_vertex_forms(mesh, positions)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    d = positions[j] - positions[i]
    at_i = _normal_curvature(np.einsum('eka,ek->ea', tangents[i], d), metric[i], form[i])
    at_j = _normal_curvature(np.einsum('eka,ek->ea', tangents[j], d), metric[j], form[j])
    return 0.5 * (at_i + at_j)


def shape_data(X: Embedding, sigma: MetricField) -> ShapeData:
    if X.mesh.vertex_count != sigma.vertex_count:
        raise InputError("embedding and metric live on different meshes")
    fits = _fit_vertex_forms(X.mesh, X.positions)
    normals, _, metric, form = fits
    inverse = np.linalg.inv(metric)
    mean = np.einsum('vab,vba->v', inverse, form)
    gauss = np.linalg.det(form) / np.linalg.det(metric)
    kappa = _edge_curvature(X.mesh, X.positions, fits)
    second = edge_tensor(sigma, sigma.lengths ** 2 * kappa)
    shape = ShapeData(normals, mean, gauss, second, kappa)
    logger.debug(f"shape data: H0 in [{mean.min():.6g}, {mean.max():.6g}], min principal {shape.min_principal:.6g}")
    return shape


def d_second_fundamental(X: Embedding, sigma: MetricField, eta: SymTensorField) -> SymTensorField:
    """Derivative of the second fundamental form along the metric perturbation η.

    II is differentiated as a covariant tensor on the fixed edge vectors: with
    Y = linearized_embed(η) and q_e = ℓ_e² κ̄_e, dq_e = η_e κ̄_e + ℓ_e² dκ̄_e[Y].
    The result is expressed in the face frames of σ.

    dκ̄_e[Y] is a central difference of the quadric-fit edge curvature along Y,
    not an assembled closed-form variation of the normal and connection. It is
    therefore the derivative of the discrete II₀ that shape_data returns, up to
    O(step²), which keeps it consistent with the II₀ used everywhere else.
    """
    eta = check_tensor(sigma, eta, "eta")
    eta_edges = tensor_on_edges(sigma, eta)
    if not np.any(eta_edges):
        return np.zeros_like(eta)
    Y = linearized_embed(X, sigma, eta)
    extent = float(np.ptp(X.positions, axis=0).max())
    step = SHAPE_FD_STEP * extent / max(float(np.abs(Y.values).max()), 1e-300)
    kappa = _edge_curvature(X.mesh, X.positions)
    forward = _edge_curvature(X.mesh, X.positions + step * Y.values)
    backward = _edge_curvature(X.mesh, X.positions - step * Y.values)
    derivative = eta_edges * kappa + sigma.lengths ** 2 * (forward - backward) / (2.0 * step)
    return edge_tensor(sigma, derivative)


def weak_divergence_residual(X: Embedding, sigma: MetricField, shape: ShapeData) -> np.ndarray:
    """Per-vertex weak form of div(T∇X) + 2K n with T = H₀σ − II₀, which vanishes for smooth surfaces.

    Row i is ∑_f A_f F_f T_f ∇φ_i − 2 K_i M_i n_i, where F_f maps the face frame
    into R³. Since the identity div(T∇X) = −2Kn uses div T = 0, the residual
    measures how well the discrete H₀σ − II₀ is divergence free.
    """
    p = X.positions[sigma.mesh.faces]
    corners = sigma.frame_corners
    spans = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    layout = np.stack([corners[:, 1], corners[:, 2]], axis=-1)
    frames = spans @ np.linalg.inv(layout)
    tensor = shape.face_mean_curvature[:, None, None] * np.eye(2) - shape.second_fundamental
    flux = np.einsum('fkd,fde,fce->fck', frames, tensor, sigma.gradient_basis) * sigma.face_areas[:, None, None]
    residual = np.zeros((sigma.vertex_count, 3))
    for c in range(3):
        np.add.at(residual, sigma.mesh.faces[:, c], flux[:, c])
    return residual - 2.0 * (shape.gauss_curvature * sigma.vertex_areas)[:, None] * shape.normals
