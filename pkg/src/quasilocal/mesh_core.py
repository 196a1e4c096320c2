"""Triangulated spheres with intrinsic edge-length metrics and their discrete operators.

Metrics are piecewise flat: every triangle is laid out in its own orthonormal
frame from its three side lengths (corner 0 at the origin, corner 1 on the
positive first axis, corner 2 in the upper half plane). Per-face vector and
tensor fields are stored in that frame. Scalar fields live on vertices.

Conventions
-----------
* ``stiffness`` is the cotangent matrix with positive off-diagonal weights and
  zero row sums, so ``Δ = M⁻¹ L`` has a non-positive spectrum.
* ``M`` is the barycentric lumped mass (one third of the incident areas).
* divergence is the negative adjoint of gradient, so the discrete Green
  identity ``∮ φ Δη = −∮ ⟨∇φ, ∇η⟩`` holds by construction.
"""
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from quasilocal.tools.constants import DENSE_EIGEN_LIMIT, LOGGER_MAIN, MAX_SUBDIVISIONS
from quasilocal.tools.errors import DegenerateTriangle, EigenSolverError, InputError

logger = logging.getLogger(LOGGER_MAIN)

ScalarField = npt.NDArray[np.float64]
VectorField = npt.NDArray[np.float64]
SymTensorField = npt.NDArray[np.float64]

# corner c is opposite the edge running from corner c+1 to corner c+2
_NEXT = np.array([1, 2, 0])
_PREV = np.array([2, 0, 1])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed, consistently oriented triangulation of the sphere."""
    vertex_count: int
    faces: np.ndarray

    def __post_init__(self):
        faces = np.array(self.faces, dtype=np.int64, copy=True)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise InputError(f"faces must be an (F, 3) array, got shape {faces.shape}")
        if faces.min(initial=0) < 0 or faces.max(initial=-1) >= self.vertex_count:
            raise InputError(f"face vertex ids must lie in [0, {self.vertex_count})")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) or np.any(faces[:, 0] == faces[:, 2]):
            raise InputError("faces must reference three distinct vertices")
        faces.setflags(write=False)
        object.__setattr__(self, 'faces', faces)
        self._validate_topology()

    def _validate_topology(self):
        directed = np.stack([self.faces, self.faces[:, _NEXT]], axis=-1).reshape(-1, 2)
        if len(np.unique(directed, axis=0)) != len(directed):
            raise InputError("faces are not consistently oriented: a directed edge appears twice")
        undirected = np.sort(directed, axis=1)
        _, counts = np.unique(undirected, axis=0, return_counts=True)
        if np.any(counts != 2):
            raise InputError("surface is not closed: every edge must border exactly two faces")
        if np.bincount(self.faces.ravel(), minlength=self.vertex_count).min() == 0:
            raise InputError("mesh has isolated vertices")
        euler = self.vertex_count - len(counts) + self.face_count
        if euler != 2:
            raise InputError(f"Euler characteristic is {euler}; only topological spheres are supported")

    @property
    def face_count(self) -> int:
        return len(self.faces)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def opposite_pairs(self) -> np.ndarray:
        """(F, 3, 2) vertex ids of the edge opposite each corner."""
        return np.stack([self.faces[:, _NEXT], self.faces[:, _PREV]], axis=-1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Canonical edges (i < j) sorted lexicographically; the row index is the edge id."""
        edges = np.unique(np.sort(self.opposite_pairs.reshape(-1, 2), axis=1), axis=0)
        edges.setflags(write=False)
        return edges

    @cached_property
    def face_edges(self) -> np.ndarray:
        """(F, 3) id of the edge opposite each corner."""
        pairs = np.sort(self.opposite_pairs, axis=2)
        keys = pairs[..., 0] * self.vertex_count + pairs[..., 1]
        edge_keys = self.edges[:, 0] * self.vertex_count + self.edges[:, 1]
        return np.searchsorted(edge_keys, keys)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.vertex_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        ones = np.ones(2 * len(i))
        return sp.csr_matrix((ones, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))

    @cached_property
    def two_ring(self) -> list[np.ndarray]:
        """Vertices within two edges of each vertex, excluding the vertex itself."""
        a = self.adjacency
        reach = ((a + a @ a) > 0).tolil()
        reach.setdiag(0)
        reach = reach.tocsr()
        reach.eliminate_zeros()
        return [reach.indices[reach.indptr[v]:reach.indptr[v + 1]] for v in range(self.vertex_count)]

    def first_neighbor(self) -> np.ndarray:
        """Lowest-id neighbor of every vertex; anchors the per-vertex tangent frames."""
        a = self.adjacency.tocsr()
        a.sort_indices()
        return a.indices[a.indptr[:-1]]


@dataclass(frozen=True, eq=False)
class MetricField:
    """Piecewise-flat metric given by one positive length per edge."""
    mesh: TriMesh
    lengths: np.ndarray
    seed_positions: np.ndarray | None = None

    def __post_init__(self):
        lengths = np.array(self.lengths, dtype=np.float64, copy=True)
        if lengths.shape != (self.mesh.edge_count,):
            raise InputError(f"lengths has shape {lengths.shape}, expected ({self.mesh.edge_count},)")
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
            raise InputError("lengths must be finite and positive")
        lengths.setflags(write=False)
        object.__setattr__(self, 'lengths', lengths)
        if self.seed_positions is not None:
            seeds = np.array(self.seed_positions, dtype=np.float64, copy=True)
            if seeds.shape != (self.mesh.vertex_count, 3):
                raise InputError(f"seed positions have shape {seeds.shape}, expected ({self.mesh.vertex_count}, 3)")
            seeds.setflags(write=False)
            object.__setattr__(self, 'seed_positions', seeds)
        sides = self.face_lengths
        slack = sides.sum(axis=1, keepdims=True) - 2 * sides
        bad = np.flatnonzero(np.any(slack <= 1e-14 * sides.max(axis=1, keepdims=True), axis=1))
        if len(bad):
            raise DegenerateTriangle(int(bad[0]), "violates the strict triangle inequality")

    @property
    def vertex_count(self) -> int:
        return self.mesh.vertex_count

    @cached_property
    def face_lengths(self) -> np.ndarray:
        """(F, 3) side length opposite each corner."""
        return self.lengths[self.mesh.face_edges]

    @cached_property
    def face_areas(self) -> np.ndarray:
        # Kahan's ordering keeps Heron's formula accurate for needle triangles
        s = -np.sort(-self.face_lengths, axis=1)
        a, b, c = s[:, 0], s[:, 1], s[:, 2]
        product = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
        return 0.25 * np.sqrt(np.maximum(product, 0.0))

    @cached_property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        return np.bincount(self.mesh.faces.ravel(), weights=np.repeat(self.face_areas / 3.0, 3),
                           minlength=self.vertex_count)

    @cached_property
    def _law_of_cosines(self) -> np.ndarray:
        # l_{c+1}² + l_{c+2}² − l_c² for every corner c
        sq = self.face_lengths ** 2
        return sq[:, _NEXT] + sq[:, _PREV] - sq

    @cached_property
    def cotangents(self) -> np.ndarray:
        areas = self.face_areas
        bad = np.flatnonzero(areas <= 1e-14 * self.face_lengths.max(axis=1) ** 2)
        if len(bad):
            raise DegenerateTriangle(int(bad[0]), "zero area makes the cotangent weights overflow")
        return self._law_of_cosines / (4.0 * areas[:, None])

    @cached_property
    def angles(self) -> np.ndarray:
        return np.arctan2(4.0 * self.face_areas[:, None], self._law_of_cosines)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        n = self.vertex_count
        weights = 0.5 * self.cotangents
        i = self.mesh.opposite_pairs[..., 0].ravel()
        j = self.mesh.opposite_pairs[..., 1].ravel()
        w = weights.ravel()
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([w, w, -w, -w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def frame_corners(self) -> np.ndarray:
        """(F, 3, 2) corner positions in the per-face orthonormal frame."""
        sides = self.face_lengths
        l0, l1, l2 = sides[:, 0], sides[:, 1], sides[:, 2]
        corners = np.zeros((self.mesh.face_count, 3, 2))
        corners[:, 1, 0] = l2
        corners[:, 2, 0] = (l2 ** 2 + l1 ** 2 - l0 ** 2) / (2.0 * l2)
        corners[:, 2, 1] = 2.0 * self.face_areas / l2
        return corners

    @cached_property
    def frame_edges(self) -> np.ndarray:
        """(F, 3, 2) vector of the edge opposite each corner, from corner c+1 to corner c+2."""
        p = self.frame_corners
        return p[:, _PREV] - p[:, _NEXT]

    @cached_property
    def gradient_basis(self) -> np.ndarray:
        """(F, 3, 2) gradient of each corner's hat function."""
        e = self.frame_edges
        rotated = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return rotated / (2.0 * self.face_areas[:, None, None])

    @cached_property
    def gradient_matrix(self) -> sp.csr_matrix:
        """(2F, V) map from vertex values to stacked per-face gradients."""
        f = self.mesh.face_count
        rows = (2 * np.arange(f)[:, None, None] + np.arange(2)[None, None, :]).repeat(3, axis=1)
        cols = np.broadcast_to(self.mesh.faces[:, :, None], (f, 3, 2))
        return sp.csr_matrix((self.gradient_basis.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(2 * f, self.vertex_count))

    def scaled(self, factor: float) -> 'MetricField':
        seeds = None if self.seed_positions is None else self.seed_positions * factor
        return MetricField(self.mesh, self.lengths * factor, seeds)


@dataclass(frozen=True, eq=False)
class GalerkinOperator:
    """Sparse symmetric matrix over vertex fields together with the lumped mass."""
    matrix: sp.csr_matrix
    mass: np.ndarray

    def apply(self, f: ScalarField) -> ScalarField:
        """Strong form M⁻¹ A f."""
        return (self.matrix @ f) / self.mass

    def form(self, f: ScalarField, g: ScalarField | None = None) -> float:
        g = f if g is None else g
        return float(f @ (self.matrix @ g))

    def asymmetry(self) -> float:
        scale = abs(self.matrix).max()
        return float(abs(self.matrix - self.matrix.T).max() / scale) if scale else 0.0


@dataclass(frozen=True)
class FirstEigenvalue:
    value: float
    multiplicity: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float


def check_scalar(sigma: MetricField, values, name: str) -> ScalarField:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sigma.vertex_count,):
        raise InputError(f"field '{name}' has {values.size} values, expected one per vertex ({sigma.vertex_count})")
    return values


def check_vector(sigma: MetricField, values, name: str) -> VectorField:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sigma.mesh.face_count, 2):
        raise InputError(f"field '{name}' has shape {values.shape}, expected ({sigma.mesh.face_count}, 2)")
    return values


def check_tensor(sigma: MetricField, values, name: str) -> SymTensorField:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sigma.mesh.face_count, 2, 2):
        raise InputError(f"field '{name}' has shape {values.shape}, expected ({sigma.mesh.face_count}, 2, 2)")
    return 0.5 * (values + values.transpose(0, 2, 1))


@lru_cache(maxsize=None)
def _icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    points = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                       [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                       [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=np.float64)
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    faces = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                      [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                      [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                      [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    for _ in range(subdivisions):
        pairs = np.sort(np.stack([faces, faces[:, _NEXT]], axis=-1), axis=-1)
        edges, inverse = np.unique(pairs.reshape(-1, 2), axis=0, return_inverse=True)
        midpoints = points[edges[:, 0]] + points[edges[:, 1]]
        midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)
        # mid[f, c] is the midpoint of the edge from corner c to corner c+1
        mid = (len(points) + inverse.reshape(-1, 3)).astype(np.int64)
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        ab, bc, ca = mid[:, 0], mid[:, 1], mid[:, 2]
        faces = np.concatenate([np.stack([a, ab, ca], axis=1), np.stack([b, bc, ab], axis=1),
                                np.stack([c, ca, bc], axis=1), np.stack([ab, bc, ca], axis=1)])
        points = np.concatenate([points, midpoints])
    normals = np.cross(points[faces[:, 1]] - points[faces[:, 0]], points[faces[:, 2]] - points[faces[:, 0]])
    inward = np.einsum('ij,ij->i', normals, points[faces].mean(axis=1)) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    points.setflags(write=False)
    faces.setflags(write=False)
    return faces, points


def icosphere_points(subdivisions: int, radius: float = 1.0) -> np.ndarray:
    """Vertex positions of the projected icosphere, in the vertex order of build_icosphere."""
    _check_subdivisions(subdivisions)
    return _icosphere(subdivisions)[1] * radius


def _check_subdivisions(subdivisions: int):
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise InputError(f"subdivisions must lie in [0, {MAX_SUBDIVISIONS}], got {subdivisions}")


def metric_from_positions(mesh: TriMesh, positions: np.ndarray) -> MetricField:
    """Induced edge-length metric of a vertex placement, keeping the placement as seed."""
    positions = np.asarray(positions, dtype=np.float64)
    lengths = np.linalg.norm(positions[mesh.edges[:, 0]] - positions[mesh.edges[:, 1]], axis=1)
    return MetricField(mesh, lengths, positions)


def build_icosphere(subdivisions: int, radius: float = 1.0) -> tuple[TriMesh, MetricField]:
    _check_subdivisions(subdivisions)
    if radius <= 0:
        raise InputError(f"radius must be positive, got {radius}")
    faces, points = _icosphere(subdivisions)
    mesh = TriMesh(len(points), faces)
    return mesh, metric_from_positions(mesh, points * radius)


def blend_metrics(start: MetricField, target: MetricField, t: float) -> MetricField:
    """Metric (1−t)σ_start + tσ_target, i.e. linear interpolation of squared lengths."""
    if start.mesh is not target.mesh and not np.array_equal(start.mesh.faces, target.mesh.faces):
        raise InputError("metrics live on different meshes")
    squared = (1.0 - t) * start.lengths ** 2 + t * target.lengths ** 2
    return MetricField(start.mesh, np.sqrt(squared))


def laplacian(sigma: MetricField) -> GalerkinOperator:
    return GalerkinOperator(sigma.stiffness, sigma.vertex_areas)


def gaussian_curvature(sigma: MetricField) -> ScalarField:
    angle_sums = np.bincount(sigma.mesh.faces.ravel(), weights=sigma.angles.ravel(), minlength=sigma.vertex_count)
    return (2.0 * np.pi - angle_sums) / sigma.vertex_areas


def gradient(sigma: MetricField, f: ScalarField) -> VectorField:
    f = check_scalar(sigma, f, "f")
    return np.einsum('fcd,fc->fd', sigma.gradient_basis, f[sigma.mesh.faces])


def divergence(sigma: MetricField, v: VectorField) -> ScalarField:
    v = check_vector(sigma, v, "v")
    weighted = (sigma.face_areas[:, None] * v).ravel()
    return -(sigma.gradient_matrix.T @ weighted) / sigma.vertex_areas


def integrate(sigma: MetricField, f: ScalarField) -> float:
    return float(sigma.vertex_areas @ check_scalar(sigma, f, "f"))


def integrate_faces(sigma: MetricField, values: np.ndarray) -> float:
    return float(sigma.face_areas @ values)


def mean_zero(sigma: MetricField, f: ScalarField) -> ScalarField:
    f = check_scalar(sigma, f, "f")
    return f - integrate(sigma, f) / sigma.area


def face_average(sigma: MetricField, f: ScalarField) -> np.ndarray:
    return f[sigma.mesh.faces].mean(axis=1)


def generalized_eigenpairs(a: sp.spmatrix, b: sp.spmatrix, weights: np.ndarray, k: int,
                           shift: float, dense_limit: int = DENSE_EIGEN_LIMIT,
                           dense: bool | None = None, nearest: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the pencil (a, b) on fields with weights·η = 0, in ascending order.

    Both matrices are symmetric and b is positive definite on that subspace. The
    excluded direction is removed exactly: by an orthonormal complement in the
    dense path, and by moving it far above the spectrum in the sparse path.
    Without ``nearest`` the k smallest eigenpairs are returned and ``shift`` must
    lie below them; with ``nearest`` the k eigenpairs closest to it.
    """
    n = a.shape[0]
    k = min(k, n - 2)
    if dense is None:
        dense = n <= dense_limit
    if dense:
        basis = scipy.linalg.null_space(weights[None, :])
        a_r = basis.T @ (a @ basis)
        b_r = basis.T @ (b @ basis)
        subset = [0, k - 1] if nearest is None else None
        values, vectors = scipy.linalg.eigh(0.5 * (a_r + a_r.T), 0.5 * (b_r + b_r.T), subset_by_index=subset)
        if nearest is not None:
            chosen = np.sort(np.argsort(np.abs(values - nearest), kind='stable')[:k])
            values, vectors = values[chosen], vectors[:, chosen]
        return values, basis @ vectors
    target = shift if nearest is None else nearest
    return _sparse_eigenpairs(sp.csc_matrix(a), sp.csc_matrix(b), weights, k, target)


def _sparse_eigenpairs(a, b, weights, k, shift):
    n = a.shape[0]
    scale = max(abs(shift), abs(a).max() / max(abs(b).max(), 1e-300), 1.0)
    park = abs(shift) + 1e6 * scale
    w = weights / np.linalg.norm(weights)
    # a + park·wwᵀ against b + wwᵀ sends the excluded direction to eigenvalue park
    coupling = park - shift
    bordered = sp.bmat([[a - shift * b, sp.csc_matrix(w[:, None])],
                        [sp.csc_matrix(w[None, :]), sp.csc_matrix([[-1.0 / coupling]])]], format='csc')
    factor = splu(bordered)

    def solve(x):
        return factor.solve(np.append(x, 0.0))[:n]

    a_op = LinearOperator((n, n), matvec=lambda x: a @ x + park * w * (w @ x), dtype=np.float64)
    b_op = LinearOperator((n, n), matvec=lambda x: b @ x + w * (w @ x), dtype=np.float64)
    inverse = LinearOperator((n, n), matvec=solve, dtype=np.float64)

    result = None
    for attempt in Retrying(stop=stop_after_attempt(3), retry=retry_if_exception_type(ArpackNoConvergence), reraise=True):
        with attempt:
            number = attempt.retry_state.attempt_number
            ncv = min(n, max(2 * k + 1, 20) * number)
            try:
                result = eigsh(a_op, k=k, M=b_op, sigma=shift, OPinv=inverse, which='LM', ncv=ncv,
                               maxiter=2000 * number, v0=np.ones(n) / np.sqrt(n) + np.linspace(0, 1e-3, n))
            except ArpackNoConvergence as exc:
                logger.warning(f"ARPACK did not converge (attempt {number}, ncv={ncv}); retrying")
                if number == 3:
                    raise EigenSolverError("sparse eigensolve did not converge",
                                           _partial_residual(a_op, b_op, exc)) from exc
                raise
    values, vectors = result
    order = np.argsort(values)
    return values[order], vectors[:, order]


def _partial_residual(a_op, b_op, exc: ArpackNoConvergence) -> float:
    if exc.eigenvectors is None or exc.eigenvectors.size == 0:
        return float('inf')
    residuals = [np.linalg.norm(a_op @ v - lam * (b_op @ v)) for lam, v in zip(exc.eigenvalues, exc.eigenvectors.T)]
    return float(max(residuals))


def first_nonzero_eigenvalue(sigma: MetricField, k: int = 6, dense_limit: int = DENSE_EIGEN_LIMIT,
                             dense: bool | None = None, rtol: float = 1e-6) -> FirstEigenvalue:
    """λ₁ of −Δ as the smallest eigenvalue of (−L, M) on mean-zero fields."""
    mass = sp.diags(sigma.vertex_areas)
    shift = -0.1 * 8.0 * np.pi / sigma.area
    values, vectors = generalized_eigenpairs(-sigma.stiffness, mass, sigma.vertex_areas, k, shift,
                                             dense_limit=dense_limit, dense=dense)
    lam = float(values[0])
    if lam <= 0:
        raise EigenSolverError(f"first nonzero eigenvalue came out non-positive ({lam:.3e})", abs(lam))
    multiplicity = int(np.sum(np.abs(values - lam) <= rtol * lam))
    v = vectors[:, 0]
    residual = float(np.linalg.norm(-sigma.stiffness @ v - lam * sigma.vertex_areas * v))
    logger.debug(f"lambda_1 = {lam:.12g} (multiplicity {multiplicity}, residual {residual:.2e})")
    return FirstEigenvalue(lam, multiplicity, values, vectors, residual)


def identity_tensor(sigma: MetricField) -> SymTensorField:
    """σ itself, which is the identity in every face frame."""
    return np.broadcast_to(np.eye(2), (sigma.mesh.face_count, 2, 2)).copy()


def tensor_on_edges(sigma: MetricField, rho: SymTensorField) -> np.ndarray:
    """Per-edge values ρ(e, e), averaged over the two faces sharing the edge."""
    rho = check_tensor(sigma, rho, "rho")
    e = sigma.frame_edges
    values = np.einsum('fkd,fde,fke->fk', e, rho, e)
    return np.bincount(sigma.mesh.face_edges.ravel(), weights=values.ravel(), minlength=sigma.mesh.edge_count) / 2.0


def edge_tensor(sigma: MetricField, values: np.ndarray) -> SymTensorField:
    """Per-face symmetric tensor S with S(e, e) equal to the given value on each of the face's edges."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sigma.mesh.edge_count,):
        raise InputError(f"edge values have shape {values.shape}, expected ({sigma.mesh.edge_count},)")
    e = sigma.frame_edges
    rows = np.stack([e[..., 0] ** 2, 2.0 * e[..., 0] * e[..., 1], e[..., 1] ** 2], axis=-1)
    coefficients = np.linalg.solve(rows, values[sigma.mesh.face_edges][..., None])[..., 0]
    tensor = np.empty((sigma.mesh.face_count, 2, 2))
    tensor[:, 0, 0] = coefficients[:, 0]
    tensor[:, 0, 1] = tensor[:, 1, 0] = coefficients[:, 1]
    tensor[:, 1, 1] = coefficients[:, 2]
    return tensor
