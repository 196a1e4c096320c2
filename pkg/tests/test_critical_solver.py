import numpy as np
import pytest
from numpy.testing import assert_allclose

from quasilocal import critical_solver
from quasilocal.critical_solver import DataFamily, continuation_solve, linear_prediction, newton_solve
from quasilocal.mesh_core import gradient
from quasilocal.quasilocal_energy import BoundaryData
from quasilocal.reference_geometries import round_sphere, schwarzschild_sphere
from quasilocal.tools.errors import ContinuationStalled, InputError, KernelObstruction, NonConvergence
from quasilocal.tools.settings import SolverConfig

EPSILON = 1e-3


def _boosted(bundle, epsilon):
    """Schwarzschild data with connection form V = ε∇ψ for a smooth ψ."""
    data = bundle.data
    x, y, z = (data.sigma.seed_positions / 10.0).T
    psi = x * y + 0.5 * z ** 2 + 0.3 * x
    return BoundaryData(data.sigma, data.normH, epsilon * gradient(data.sigma, psi))


@pytest.fixture(scope="module")
def coarse_schwarzschild():
    return schwarzschild_sphere(1.0, 10.0, subdivisions=2)


def test_flat_data_has_kernel_obstruction(flat_sphere):
    data = flat_sphere.data
    with pytest.raises(KernelObstruction) as info:
        newton_solve(data, np.zeros(data.sigma.vertex_count))
    assert info.value.ratio < SolverConfig().kernel_tol
    assert "kernel_ratio" in info.value.diagnostics()


def test_zero_is_critical_for_time_symmetric_data(schwarzschild):
    data = schwarzschild.data
    report = newton_solve(data, np.zeros(data.sigma.vertex_count))
    assert report.newton_iterations == 0
    assert not np.any(report.tau)
    assert not report.kernel_warning


def test_newton_converges_on_boosted_data(schwarzschild):
    data = _boosted(schwarzschild, EPSILON)
    report = newton_solve(data, np.zeros(data.sigma.vertex_count))
    assert report.residual_norm < 1e-9
    assert report.newton_iterations <= 6
    assert all(b < a for a, b in zip(report.residual_history, report.residual_history[1:]))
    prediction = linear_prediction(data)
    relative = np.linalg.norm(report.tau - prediction) / np.linalg.norm(prediction)
    assert relative < 5 * EPSILON
    assert abs(data.sigma.vertex_areas @ report.tau) < 1e-12 * data.sigma.area * np.abs(report.tau).max()


def test_solution_scales_linearly_with_boost(coarse_schwarzschild):
    small = newton_solve(_boosted(coarse_schwarzschild, EPSILON), np.zeros(162)).tau
    large = newton_solve(_boosted(coarse_schwarzschild, 2 * EPSILON), np.zeros(162)).tau
    assert_allclose(large, 2 * small, rtol=0, atol=10 * EPSILON * np.abs(small).max())


@pytest.mark.parametrize("config", [
    SolverConfig(fd_jacobian=True),
    SolverConfig(krylov=False),
])
def test_jacobian_variants_converge(coarse_schwarzschild, config):
    data = _boosted(coarse_schwarzschild, EPSILON)
    reference = newton_solve(data, np.zeros(data.sigma.vertex_count))
    report = newton_solve(data, np.zeros(data.sigma.vertex_count), config)
    assert report.residual_norm < config.tol
    assert_allclose(report.tau, reference.tau, atol=1e-6 * np.abs(reference.tau).max())


def test_iteration_cap_raises_non_convergence(coarse_schwarzschild):
    data = _boosted(coarse_schwarzschild, EPSILON)
    with pytest.raises(NonConvergence) as info:
        newton_solve(data, np.zeros(data.sigma.vertex_count), SolverConfig(max_newton=1, tol=1e-30))
    assert info.value.iterations == 1
    assert info.value.tau.shape == (data.sigma.vertex_count,)


def test_initial_guess_length_is_checked(schwarzschild):
    with pytest.raises(InputError, match="tau_init"):
        newton_solve(schwarzschild.data, np.zeros(3))


@pytest.fixture(scope="module")
def boost_family(coarse_schwarzschild):
    parameters = np.array([0.0, 0.5, 1.0])
    return DataFamily(parameters, tuple(_boosted(coarse_schwarzschild, t * EPSILON) for t in parameters))


def test_family_interpolation(boost_family):
    assert boost_family.at(0.5) is boost_family.members[1]
    middle = boost_family.at(0.25)
    assert_allclose(middle.V, 0.25 * boost_family.members[2].V, rtol=1e-12, atol=1e-18)
    assert not middle.time_symmetric
    with pytest.raises(InputError):
        boost_family.at(1.5)


def test_family_validation(coarse_schwarzschild):
    data = coarse_schwarzschild.data
    with pytest.raises(InputError):
        DataFamily(np.array([0.0, 0.0]), (data, data))
    with pytest.raises(InputError):
        DataFamily(np.array([0.0]), (data, data))


def test_continuation_reaches_the_end(boost_family):
    reports = continuation_solve(boost_family, np.zeros(162))
    assert reports[0].parameter == 0.0
    assert reports[-1].parameter == 1.0
    assert reports[-1].continuation_steps == 2
    assert all(report.residual_norm < SolverConfig().tol for report in reports)
    direct = newton_solve(boost_family.members[-1], np.zeros(162))
    assert_allclose(reports[-1].tau, direct.tau, atol=1e-6 * np.abs(direct.tau).max())


def test_continuation_stalls_when_corrector_keeps_failing(boost_family, monkeypatch):
    solve = critical_solver.newton_solve

    def failing(data, tau_init, config=None, operator=None):
        if data is boost_family.members[0]:
            return solve(data, tau_init, config, operator)
        raise NonConvergence("forced failure", np.asarray(tau_init), 1.0, 0)

    monkeypatch.setattr(critical_solver, "newton_solve", failing)
    with pytest.raises(ContinuationStalled) as info:
        continuation_solve(boost_family, np.zeros(162), SolverConfig(continuation_min_step=0.1))
    assert info.value.parameter == 0.0
    assert info.value.step < 0.1


def test_continuation_towards_flat_data_warns_before_failing():
    radius = 10.0
    masses = [1.0, 0.25, 0.1]
    members = [schwarzschild_sphere(m, radius, subdivisions=3).data for m in masses]
    approaching = DataFamily(np.array([0.0, 0.75, 0.9]), tuple(members))
    reports = continuation_solve(approaching, np.zeros(642))
    assert [report.kernel_warning for report in reports] == [False, True, True]
    ratios = [report.kernel_ratio for report in reports]
    assert ratios[0] > ratios[1] > ratios[2] > SolverConfig().kernel_tol
    # (1 − x)(1 + 2x) with x = √(1 − 2m/R) for degree-one harmonics on round data
    x = np.sqrt(1.0 - 2.0 * np.array(masses) / radius)
    assert_allclose(ratios, (1 - x) * (1 + 2 * x), rtol=0.1, atol=1e-2)

    flat = round_sphere(radius, 2.0 / radius, subdivisions=3).data
    reaching = DataFamily(np.array([0.0, 0.75, 0.9, 1.0]), (*members, flat))
    with pytest.raises(KernelObstruction):
        continuation_solve(reaching, np.zeros(642))
