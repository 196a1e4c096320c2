import numpy as np
import pytest
from numpy.testing import assert_allclose

from quasilocal.mesh_core import (MetricField, TriMesh, build_icosphere, check_scalar, divergence,
                                  first_nonzero_eigenvalue, gaussian_curvature, gradient, integrate, laplacian,
                                  mean_zero, metric_from_positions)
from quasilocal.tools.errors import DegenerateTriangle, InputError


@pytest.mark.parametrize("subdivisions,radius", [(2, 1.0), (3, 1.0), (3, 7.5)])
def test_gauss_bonnet(subdivisions, radius):
    _, sigma = build_icosphere(subdivisions, radius)
    assert_allclose(integrate(sigma, gaussian_curvature(sigma)), 4 * np.pi, rtol=1e-9)


def test_gauss_bonnet_on_ellipsoid(ellipsoid):
    sigma, _ = ellipsoid
    assert_allclose(integrate(sigma, gaussian_curvature(sigma)), 4 * np.pi, rtol=1e-9)


def test_green_identity(ellipsoid, smooth_field):
    sigma, truth = ellipsoid
    phi = smooth_field(truth.positions, sigma.vertex_areas)
    eta = smooth_field(truth.positions, sigma.vertex_areas)
    lhs = integrate(sigma, phi * laplacian(sigma).apply(eta))
    rhs = -float(sigma.face_areas @ np.sum(gradient(sigma, phi) * gradient(sigma, eta), axis=1))
    assert_allclose(lhs, rhs, rtol=1e-10)


def test_divergence_is_negative_adjoint_of_gradient(ellipsoid, smooth_field, rng):
    sigma, truth = ellipsoid
    phi = smooth_field(truth.positions, sigma.vertex_areas)
    v = rng.normal(size=(sigma.mesh.face_count, 2))
    lhs = integrate(sigma, phi * divergence(sigma, v))
    rhs = -float(sigma.face_areas @ np.sum(gradient(sigma, phi) * v, axis=1))
    assert_allclose(lhs, rhs, rtol=1e-10)


def test_laplacian_annihilates_constants(unit_sphere):
    _, sigma = unit_sphere
    assert np.abs(laplacian(sigma).apply(np.ones(sigma.vertex_count))).max() < 1e-10
    assert laplacian(sigma).asymmetry() < 1e-14


def test_gradient_of_linear_function_is_planar_projection(ellipsoid):
    sigma, truth = ellipsoid
    p = truth.positions[sigma.mesh.faces]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    squared = np.sum(gradient(sigma, truth.positions[:, 2]) ** 2, axis=1)
    assert_allclose(squared, 1 - normals[:, 2] ** 2, atol=1e-10)


def test_first_eigenvalue_of_unit_sphere(unit_sphere):
    _, sigma = unit_sphere
    first = first_nonzero_eigenvalue(sigma)
    assert_allclose(first.value, 2.0, rtol=2e-2)
    assert first.multiplicity == 3
    assert first.residual < 1e-8


def test_sparse_and_dense_eigensolvers_agree(unit_sphere):
    _, sigma = unit_sphere
    dense = first_nonzero_eigenvalue(sigma, dense=True)
    sparse = first_nonzero_eigenvalue(sigma, dense=False)
    assert_allclose(sparse.eigenvalues[:4], dense.eigenvalues[:4], rtol=1e-8)


def test_eigenvalue_scales_with_metric(unit_sphere):
    _, sigma = unit_sphere
    doubled = sigma.scaled(2.0)
    assert_allclose(doubled.area, 4 * sigma.area, rtol=1e-12)
    assert_allclose(first_nonzero_eigenvalue(doubled).value, first_nonzero_eigenvalue(sigma).value / 4, rtol=1e-10)


def test_mean_zero(unit_sphere):
    _, sigma = unit_sphere
    f = mean_zero(sigma, sigma.seed_positions[:, 2] ** 2)
    assert abs(integrate(sigma, f)) < 1e-12


def test_open_mesh_is_rejected(unit_sphere):
    mesh, _ = unit_sphere
    with pytest.raises(InputError, match="not closed"):
        TriMesh(mesh.vertex_count, mesh.faces[1:])


def test_inconsistent_orientation_is_rejected(unit_sphere):
    mesh, _ = unit_sphere
    faces = mesh.faces.copy()
    faces[0] = faces[0][[0, 2, 1]]
    with pytest.raises(InputError, match="oriented"):
        TriMesh(mesh.vertex_count, faces)


def test_triangle_inequality_violation(unit_sphere):
    mesh, sigma = unit_sphere
    lengths = sigma.lengths.copy()
    lengths[0] = 10.0
    with pytest.raises(DegenerateTriangle) as info:
        MetricField(mesh, lengths)
    assert info.value.diagnostics()["face"] == info.value.face


def test_non_positive_length_is_rejected(unit_sphere):
    mesh, sigma = unit_sphere
    lengths = sigma.lengths.copy()
    lengths[3] = 0.0
    with pytest.raises(InputError):
        MetricField(mesh, lengths)


def test_field_shape_errors_name_the_field(unit_sphere):
    _, sigma = unit_sphere
    with pytest.raises(InputError, match="tau"):
        check_scalar(sigma, np.zeros(sigma.vertex_count + 1), "tau")


def test_metric_from_positions_keeps_seed(unit_sphere):
    mesh, sigma = unit_sphere
    again = metric_from_positions(mesh, sigma.seed_positions)
    assert np.array_equal(again.lengths, sigma.lengths)
