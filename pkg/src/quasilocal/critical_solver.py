"""Newton and continuation solvers for critical time functions of the quasi-local energy."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import LinearOperator, gmres, splu

from quasilocal.mesh_core import MetricField, ScalarField, check_scalar, mean_zero
from quasilocal.quasilocal_energy import BoundaryData
from quasilocal.tools.constants import DENSE_EIGEN_LIMIT, LOGGER_MAIN
from quasilocal.tools.errors import (ContinuationStalled, GeometryError, InputError, KernelObstruction,
                                     NonConvergence)
from quasilocal.tools.settings import SolverConfig
from quasilocal.variation_analysis import el_galerkin, kernel_ratio, linearized_operator, residual_norm

logger = logging.getLogger(LOGGER_MAIN)


class SolveReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tau: np.ndarray
    residual_norm: float
    newton_iterations: int
    continuation_steps: int = 0
    kernel_warning: bool = False
    kernel_ratio: float
    parameter: float | None = None
    residual_history: list[float]
    quadratic_constant: float | None = None


@dataclass(frozen=True, eq=False)
class DataFamily:
    """Boundary data at increasing parameters, interpolated piecewise linearly in lengths, normH and V."""
    parameters: np.ndarray
    members: tuple[BoundaryData, ...]

    def __post_init__(self):
        parameters = np.asarray(self.parameters, dtype=np.float64)
        if len(parameters) != len(self.members) or len(parameters) == 0:
            raise InputError("a family needs one parameter per member and at least one member")
        if np.any(np.diff(parameters) <= 0):
            raise InputError("family parameters must be strictly increasing")
        faces = self.members[0].sigma.mesh.faces
        for member in self.members[1:]:
            if not np.array_equal(member.sigma.mesh.faces, faces):
                raise InputError("all family members must share one mesh")
        object.__setattr__(self, 'parameters', parameters)
        object.__setattr__(self, 'members', tuple(self.members))

    @property
    def span(self) -> float:
        return float(self.parameters[-1] - self.parameters[0])

    def at(self, t: float) -> BoundaryData:
        if not self.parameters[0] <= t <= self.parameters[-1]:
            raise InputError(f"parameter {t} lies outside the family range")
        exact = np.flatnonzero(self.parameters == t)
        if len(exact):
            return self.members[int(exact[0])]
        k = int(np.searchsorted(self.parameters, t)) - 1
        left, right = self.members[k], self.members[k + 1]
        w = (t - self.parameters[k]) / (self.parameters[k + 1] - self.parameters[k])
        sigma = MetricField(left.sigma.mesh, (1 - w) * left.sigma.lengths + w * right.sigma.lengths)
        V = (1 - w) * left.V + w * right.V
        return BoundaryData(sigma, (1 - w) * left.normH + w * right.normH, V,
                            left.time_symmetric and right.time_symmetric, left.embed_config)


class _BorderedSolver:
    """Solves [[A, m], [mᵀ, 0]] [x; λ] = [b; 0], i.e. A x = b on mass-mean-zero x."""

    def __init__(self, matrix: sp.spmatrix, mass: np.ndarray):
        self.n = len(mass)
        self.mass = mass
        bordered = sp.bmat([[matrix, sp.csc_matrix(mass[:, None])],
                            [sp.csc_matrix(mass[None, :]), None]], format='csc')
        self.factor = splu(bordered)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factor.solve(rhs)


def _unit(n: int, j: int) -> np.ndarray:
    e = np.zeros(n)
    e[j] = 1.0
    return e


def _newton_direction(data: BoundaryData, tau: np.ndarray, galerkin: np.ndarray, frozen: _BorderedSolver,
                      config: SolverConfig) -> np.ndarray:
    sigma = data.sigma
    mass = sigma.vertex_areas
    n = sigma.vertex_count
    scale = 1.0 + float(np.abs(tau).max())

    def directional(v: np.ndarray) -> np.ndarray:
        size = float(np.abs(v).max())
        if size == 0:
            return np.zeros(n)
        h = config.fd_step * scale / size
        return (el_galerkin(data, tau + h * v, config.hat_tol) - galerkin) / h

    if config.fd_jacobian:
        jacobian = np.column_stack([directional(_unit(n, j)) for j in range(n)])
        bordered = np.block([[jacobian, mass[:, None]], [mass[None, :], np.zeros((1, 1))]])
        return np.linalg.solve(bordered, np.append(-galerkin, 0.0))[:n]
    if not config.krylov:
        return frozen.solve(np.append(-galerkin, 0.0))[:n]

    def bordered_matvec(x: np.ndarray) -> np.ndarray:
        v, multiplier = x[:n], x[n]
        return np.append(directional(v) + multiplier * mass, mass @ v)

    system = LinearOperator((n + 1, n + 1), matvec=bordered_matvec, dtype=np.float64)
    preconditioner = LinearOperator((n + 1, n + 1), matvec=frozen.solve, dtype=np.float64)
    solution, info = gmres(system, np.append(-galerkin, 0.0), M=preconditioner, rtol=1e-6, atol=0.0,
                           restart=20, maxiter=5)
    if info != 0:
        logger.debug(f"GMRES stopped with info={info}; using its last iterate")
    return solution[:n]


def newton_solve(data: BoundaryData, tau_init: ScalarField, config: SolverConfig | None = None,
                 operator=None) -> SolveReport:
    """Damped Newton on the weak Euler-Lagrange residual over mean-zero τ."""
    config = config or SolverConfig()
    sigma = data.sigma
    tau = mean_zero(sigma, check_scalar(sigma, tau_init, "tau_init"))
    operator = operator or linearized_operator(data)
    # kernel_tol = 1e-2 in this ratio puts flat data below and Schwarzschild m/R ≳ 4e-3 above
    ratio, near_null = kernel_ratio(data, DENSE_EIGEN_LIMIT, operator)
    if ratio < config.kernel_tol:
        raise KernelObstruction(ratio, near_null)
    kernel_warning = ratio < config.kernel_warn
    if kernel_warning:
        logger.warning(f"linearization is nearly singular (kernel ratio {ratio:.3e})")

    galerkin = el_galerkin(data, tau, config.hat_tol)
    residual = residual_norm(sigma, galerkin)
    history = [residual]
    frozen = _BorderedSolver(operator.matrix, sigma.vertex_areas)
    iterations = 0
    while residual >= config.tol:
        if iterations == config.max_newton:
            raise NonConvergence("Newton iteration did not converge", tau, residual, iterations)
        iterations += 1
        direction = _newton_direction(data, tau, galerkin, frozen, config)
        t = 1.0
        while True:
            trial = mean_zero(sigma, tau + t * direction)
            try:
                trial_galerkin = el_galerkin(data, trial, config.hat_tol)
                trial_residual = residual_norm(sigma, trial_galerkin)
            except GeometryError as exc:
                logger.debug(f"trial step {t:.3g} left the admissible set: {exc}")
                trial_residual = np.inf
            if trial_residual <= (1.0 - config.armijo * t) * residual:
                break
            t *= 0.5
            if t < config.min_line_step:
                raise NonConvergence("line search failed", tau, residual, iterations)
        tau, galerkin, residual = trial, trial_galerkin, trial_residual
        history.append(residual)
        logger.debug(f"Newton iteration {iterations}: step {t:.3g}, residual {residual:.3e}")

    quadratic = history[-1] / history[-2] ** 2 if len(history) >= 2 and history[-2] > 0 else None
    logger.info(f"Newton converged in {iterations} iterations, residual {residual:.3e}")
    return SolveReport(tau=tau, residual_norm=residual, newton_iterations=iterations,
                       kernel_warning=kernel_warning, kernel_ratio=ratio, residual_history=history,
                       quadratic_constant=quadratic)


def continuation_solve(family: DataFamily, tau_start: ScalarField, config: SolverConfig | None = None
                       ) -> list[SolveReport]:
    """Predictor-corrector continuation through the family knots, halving steps on corrector failure."""
    config = config or SolverConfig()
    t = float(family.parameters[0])
    first = newton_solve(family.at(t), tau_start, config)
    reports = [first.model_copy(update={'parameter': t})]
    tau = first.tau
    previous: tuple[float, np.ndarray] | None = None
    min_step = config.continuation_min_step * family.span
    steps = 0
    for target in family.parameters[1:]:
        h = float(target) - t
        while t < target:
            h = min(h, float(target) - t)
            t_new = t + h if t + h < target else float(target)
            predictor = tau if previous is None else tau + (tau - previous[1]) * (t_new - t) / (t - previous[0])
            data = family.at(t_new)
            try:
                report = newton_solve(data, predictor, config)
            except (NonConvergence, GeometryError) as exc:
                h *= 0.5
                logger.warning(f"corrector failed at t={t_new:.6g} ({exc}); halving the step to {h:.3e}")
                if h < min_step:
                    raise ContinuationStalled(t, tau, h) from exc
                continue
            steps += 1
            previous = (t, tau)
            t, tau = t_new, report.tau
            reports.append(report.model_copy(update={'parameter': t, 'continuation_steps': steps}))
            logger.info(f"continuation step {steps}: t={t:.6g}, kernel ratio {report.kernel_ratio:.3e}")
    return reports


def linear_prediction(data: BoundaryData, operator=None) -> ScalarField:
    """First-order solution −B⁻¹ g(0) on mean-zero fields."""
    sigma = data.sigma
    operator = operator or linearized_operator(data)
    galerkin = el_galerkin(data, np.zeros(sigma.vertex_count))
    solver = _BorderedSolver(operator.matrix, sigma.vertex_areas)
    return solver.solve(np.append(-galerkin, 0.0))[:sigma.vertex_count]
