from typing import Any

import numpy as np


class QuasiLocalError(Exception):
    """Base class for every error raised by the toolkit."""

    def diagnostics(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self)}


class InputError(QuasiLocalError, ValueError):
    """Invalid arguments, malformed fields or inconsistent mesh references."""


class FormatError(InputError):
    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "path": str(self.path), "line": self.line}


class GeometryError(QuasiLocalError):
    """The geometry violates a precondition of the requested computation."""


class DegenerateTriangle(GeometryError):
    def __init__(self, face: int, message: str):
        self.face = face
        super().__init__(f"face {face}: {message}")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "face": self.face}


class NotEmbeddableHere(GeometryError):
    def __init__(self, vertex: int, curvature: float, parameter: float | None = None):
        self.vertex = vertex
        self.curvature = curvature
        self.parameter = parameter
        where = f" at path parameter t={parameter:.6g}" if parameter is not None else ""
        super().__init__(f"Gaussian curvature {curvature:.6g} at vertex {vertex} is not positive{where}")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "vertex": self.vertex, "curvature": self.curvature,
                "parameter": self.parameter}


class NotAdmissibleHint(NotEmbeddableHere):
    """The hat metric σ + dτ⊗dτ lost positive curvature."""


class NumericalError(QuasiLocalError):
    """An iterative method failed; carries the best state reached."""


class EigenSolverError(NumericalError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual norm {residual:.3e})")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "residual": self.residual}


class EmbeddingNonConvergence(NumericalError):
    def __init__(self, residual: float, iterations: int, positions: np.ndarray):
        self.residual = residual
        self.iterations = iterations
        self.positions = positions
        super().__init__(f"embedding did not converge after {iterations} iterations, "
                         f"best relative edge RMS {residual:.3e}")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "residual": self.residual, "iterations": self.iterations}


class ShapeFitError(NumericalError):
    def __init__(self, vertex: int, rank: int):
        self.vertex = vertex
        self.rank = rank
        super().__init__(f"quadric fit at vertex {vertex} is rank deficient (rank {rank})")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "vertex": self.vertex, "rank": self.rank}


class KernelObstruction(NumericalError):
    def __init__(self, ratio: float, near_null: np.ndarray):
        self.ratio = ratio
        self.near_null = near_null
        super().__init__(f"linearization is singular on mean-zero fields (kernel ratio {ratio:.3e})")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "kernel_ratio": self.ratio, "near_null": self.near_null.tolist()}


class NonConvergence(NumericalError):
    def __init__(self, message: str, tau: np.ndarray, residual: float, iterations: int):
        self.tau = tau
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "residual": self.residual, "iterations": self.iterations,
                "tau": self.tau.tolist()}


class ContinuationStalled(NumericalError):
    def __init__(self, parameter: float, tau: np.ndarray, step: float):
        self.parameter = parameter
        self.tau = tau
        self.step = step
        super().__init__(f"continuation stalled after t={parameter:.6g} (step {step:.3e} below minimum)")

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "parameter": self.parameter, "step": self.step,
                "tau": self.tau.tolist()}
