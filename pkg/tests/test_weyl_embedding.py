import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from quasilocal.mesh_core import MetricField, build_icosphere, edge_tensor, metric_from_positions, tensor_on_edges
from quasilocal.reference_geometries import ellipsoid_curvatures, ellipsoid_metric, isotropic_to_areal
from quasilocal.tools.errors import InputError, NotEmbeddableHere
from quasilocal.tools.settings import EmbedConfig
from quasilocal.weyl_embedding import (continuation_embed, d_second_fundamental, embed, gauge_positions,
                                       linearized_embed, remove_rigid_motion, rigid_align, shape_data,
                                       weak_divergence_residual)

TIGHT = EmbedConfig(tol=1e-13)


@pytest.fixture(scope="module")
def seeded_ellipsoid():
    sigma, truth = ellipsoid_metric(1.0, 1.0, 1.2, subdivisions=3, seeded=True)
    return sigma, embed(sigma, TIGHT)


def test_round_sphere_from_seeds(unit_sphere):
    _, sigma = unit_sphere
    X = embed(sigma)
    assert X.residual < 1e-8
    assert_allclose(np.linalg.norm(X.positions, axis=1), 1.0, atol=1e-8)
    assert np.abs(X.positions.mean(axis=0)).max() < 1e-12
    assert X.volume > 0
    assert all(a >= b for a, b in zip(X.history, X.history[1:]))


def test_ellipsoid_recovered_from_spectral_start():
    sigma, truth = ellipsoid_metric(1.0, 1.0, 1.2, subdivisions=3)
    assert sigma.seed_positions is None
    X = embed(sigma)
    aligned, rms = rigid_align(X.positions, truth.positions)
    assert np.linalg.norm(aligned - truth.positions, axis=1).max() < 1e-2
    assert rms < 1e-2


def test_embedding_is_deterministic():
    sigma, _ = ellipsoid_metric(1.0, 1.1, 1.3, subdivisions=2)
    first, second = embed(sigma), embed(sigma)
    assert np.array_equal(first.positions, second.positions)
    assert first.gauge.mode == second.gauge.mode


def test_dimpled_metric_is_not_embeddable(unit_sphere):
    mesh, sigma = unit_sphere
    positions = np.array(sigma.seed_positions)
    positions[0] *= 0.8
    with pytest.raises(NotEmbeddableHere) as info:
        embed(metric_from_positions(mesh, positions))
    assert info.value.curvature <= 0
    assert info.value.diagnostics()["vertex"] == info.value.vertex


def test_initial_positions_shape_is_checked(unit_sphere):
    _, sigma = unit_sphere
    with pytest.raises(InputError):
        embed(sigma, initial=np.zeros((3, 3)))


def test_linearized_embedding_recovers_affine_strain(seeded_ellipsoid):
    sigma, X = seeded_ellipsoid
    A = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.4]])
    Y_true = X.positions @ A
    edges = sigma.mesh.edges
    d = X.positions[edges[:, 0]] - X.positions[edges[:, 1]]
    rho = edge_tensor(sigma, 2.0 * np.einsum('ei,ij,ej->e', d, A, d))
    Y = linearized_embed(X, sigma, rho)
    assert not Y.flat_warning
    assert Y.residual_norm < 1e-10
    assert_allclose(Y.values, remove_rigid_motion(X.positions, Y_true), atol=1e-8)


def test_second_fundamental_derivative_matches_finite_differences(seeded_ellipsoid):
    sigma, X = seeded_ellipsoid
    edges = sigma.mesh.edges
    midpoints = 0.5 * (X.positions[edges[:, 0]] + X.positions[edges[:, 1]])
    values = sigma.lengths ** 2 * (1.0 + 0.5 * midpoints[:, 2] ** 2 + 0.3 * midpoints[:, 0] * midpoints[:, 1])
    eta = edge_tensor(sigma, values)
    analytic = tensor_on_edges(sigma, d_second_fundamental(X, sigma, eta))

    def edge_forms(t):
        sigma_t = MetricField(sigma.mesh, np.sqrt(sigma.lengths ** 2 + t * values))
        X_t = embed(sigma_t, TIGHT, initial=X.positions)
        return sigma_t.lengths ** 2 * shape_data(X_t, sigma_t).edge_curvature

    t = 1e-4
    numeric = (edge_forms(t) - edge_forms(-t)) / (2 * t)
    assert np.linalg.norm(numeric - analytic) <= 1e-3 * np.linalg.norm(analytic)


def test_zero_perturbation_has_zero_derivative(seeded_ellipsoid):
    sigma, X = seeded_ellipsoid
    zero = np.zeros((sigma.mesh.face_count, 2, 2))
    assert not np.any(d_second_fundamental(X, sigma, zero))


def test_continuation_from_round_to_ellipsoid(unit_sphere):
    _, round_sigma = unit_sphere
    target, truth = ellipsoid_metric(1.0, 1.0, 1.2, subdivisions=3)
    X = continuation_embed(target, round_sigma, embed(round_sigma), steps=4)
    aligned, _ = rigid_align(X.positions, truth.positions)
    assert np.linalg.norm(aligned - truth.positions, axis=1).max() < 1e-2


def test_continuation_needs_positive_steps(unit_sphere):
    _, sigma = unit_sphere
    with pytest.raises(InputError):
        continuation_embed(sigma, sigma, embed(sigma), steps=0)


def test_round_sphere_shape_is_umbilic(unit_sphere):
    _, sigma = unit_sphere
    shape = shape_data(embed(sigma), sigma)
    assert_allclose(shape.mean_curvature, 2.0, rtol=1e-8)
    assert_allclose(shape.gauss_curvature, 1.0, rtol=1e-8)
    assert_allclose(shape.principal_curvatures, 1.0, rtol=1e-8)
    assert shape.convex


def test_ellipsoid_shape_matches_closed_form():
    sigma, truth = ellipsoid_metric(1.0, 1.0, 1.2, subdivisions=4, seeded=True)
    shape = shape_data(truth, sigma)
    gauss, mean = ellipsoid_curvatures((1.0, 1.0, 1.2), truth.positions)
    assert_allclose(shape.mean_curvature, mean, rtol=2e-2)
    assert_allclose(shape.gauss_curvature, gauss, rtol=4e-2)


def test_weak_divergence_residual_decays_under_refinement():
    norms = []
    for subdivisions in (2, 4):
        _, sigma = build_icosphere(subdivisions)
        X = embed(sigma)
        residual = weak_divergence_residual(X, sigma, shape_data(X, sigma))
        norms.append(np.sqrt(np.sum(np.sum(residual ** 2, axis=1) / sigma.vertex_areas)))
    assert norms[1] < norms[0]


def _surface_norm(sigma, tensors):
    return np.sqrt(sigma.face_areas @ np.sum(tensors ** 2, axis=(1, 2)))


def test_linearized_embedding_of_zero_is_zero(seeded_ellipsoid):
    sigma, X = seeded_ellipsoid
    Y = linearized_embed(X, sigma, np.zeros((sigma.mesh.face_count, 2, 2)))
    assert not np.any(Y.values)


def test_linearized_embedding_of_scaling_is_position(seeded_ellipsoid):
    sigma, X = seeded_ellipsoid
    rho = edge_tensor(sigma, 2.0 * sigma.lengths ** 2)
    Y = linearized_embed(X, sigma, rho)
    assert_allclose(Y.values, X.positions - X.positions[0], atol=1e-8)


def test_linearized_embedding_is_linear(seeded_ellipsoid, rng):
    sigma, X = seeded_ellipsoid
    first = edge_tensor(sigma, sigma.lengths ** 2 * rng.normal(size=sigma.mesh.edge_count))
    second = edge_tensor(sigma, sigma.lengths ** 2 * rng.normal(size=sigma.mesh.edge_count))
    combined = linearized_embed(X, sigma, 2.0 * first - 0.5 * second).values
    separate = 2.0 * linearized_embed(X, sigma, first).values - 0.5 * linearized_embed(X, sigma, second).values
    assert np.abs(combined - separate).max() <= 1e-10 * np.abs(separate).max()


@pytest.mark.parametrize("axes,mode", [((1.0, 1.0, 1.2), "vertex"), ((1.0, 1.1, 1.3), "principal")])
def test_gauge_ignores_rigid_motions(axes, mode):
    sigma, _ = ellipsoid_metric(*axes, subdivisions=2, seeded=True)
    X = embed(sigma, TIGHT)
    assert X.gauge.mode == mode
    rotation = Rotation.from_euler('zyx', [0.7, -0.4, 1.9]).as_matrix()
    moved = embed(sigma, TIGHT, initial=X.positions @ rotation.T + np.array([3.0, -1.0, 0.5]))
    assert moved.gauge.mode == mode
    assert np.abs(moved.positions - X.positions).max() < 1e-10
    again, _ = gauge_positions(X.positions @ rotation.T - 2.0)
    assert np.abs(again - X.positions).max() < 1e-10


def test_isotropic_schwarzschild_sphere_embeds_round():
    mesh, coordinate = build_icosphere(3, 10.0)
    # the induced metric is (1 + m/2r)⁴ times the coordinate sphere metric
    sigma = MetricField(mesh, (1.0 + 1.0 / 20.0) ** 2 * coordinate.lengths)
    X = embed(sigma)
    radius = isotropic_to_areal(1.0, 10.0)
    assert_allclose(radius, 11.025, rtol=1e-14)
    assert_allclose(np.linalg.norm(X.positions, axis=1), radius, rtol=1e-6)


def test_continuation_between_equal_metrics_is_identity(unit_sphere):
    _, sigma = unit_sphere
    X = embed(sigma)
    same = continuation_embed(sigma, sigma, X, steps=3)
    assert same.iterations == 0
    assert np.abs(same.positions - X.positions).max() < 1e-12


def test_continuation_grows_round_sphere(unit_sphere):
    mesh, sigma = unit_sphere
    target = MetricField(mesh, 1.05 * sigma.lengths)
    X = continuation_embed(target, sigma, embed(sigma), steps=5)
    assert_allclose(np.linalg.norm(X.positions, axis=1), 1.05, rtol=1e-6)
    assert X.volume > 0


@pytest.mark.parametrize("axes", [(1.0, 1.0, 1.0), (1.0, 1.0, 1.2)])
def test_second_fundamental_derivative_along_scaling(axes):
    # the metric (1 + t)²σ has second fundamental form (1 + t)II₀
    sigma, truth = ellipsoid_metric(*axes, subdivisions=3, seeded=True)
    X = embed(sigma, TIGHT)
    second = shape_data(X, sigma).second_fundamental
    derivative = d_second_fundamental(X, sigma, edge_tensor(sigma, 2.0 * sigma.lengths ** 2))
    assert np.abs(derivative - second).max() < 1e-6 * np.abs(second).max()


@pytest.mark.parametrize("axes", [(1.0, 1.0, 1.0), (1.0, 1.0, 1.2)])
def test_weak_divergence_residual_is_small(axes):
    sigma, truth = ellipsoid_metric(*axes, subdivisions=4, seeded=True)
    shape = shape_data(truth, sigma)
    residual = weak_divergence_residual(truth, sigma, shape)
    norm = np.sqrt(np.sum(np.sum(residual ** 2, axis=1) / sigma.vertex_areas))
    assert norm < 5e-2 * _surface_norm(sigma, shape.second_fundamental)
