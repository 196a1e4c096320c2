from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt
from pydantic_settings import BaseSettings, SettingsConfigDict

from quasilocal.tools import constants
from quasilocal.tools.errors import InputError


class EmbedConfig(BaseModel):
    """Settings of the Weyl embedding solver."""
    model_config = ConfigDict(frozen=True)

    tol: PositiveFloat = Field(constants.EMBED_TOL, description="Target relative edge RMS")
    max_iter: PositiveInt = Field(100, description="Gauss-Newton iteration cap")
    curvature_margin: PositiveFloat = Field(constants.CURVATURE_MARGIN, description="Required K > margin at every vertex")
    damping: PositiveFloat = Field(1e-6, description="Initial Levenberg damping, relative to the Gauss-Newton diagonal")
    picard_contraction: PositiveFloat = Field(constants.PICARD_CONTRACTION, description="Largest accepted Picard increment ratio")
    picard_max_iter: PositiveInt = Field(50, description="Picard iteration cap per continuation step")


class SolverConfig(BaseModel):
    """Settings of the Newton and continuation solvers for the critical-point equation."""
    model_config = ConfigDict(frozen=True)

    tol: PositiveFloat = Field(constants.NEWTON_TOL, description="L2 residual norm at convergence")
    max_newton: PositiveInt = Field(20, description="Newton iteration cap")
    fd_jacobian: bool = Field(False, description="Assemble the full Jacobian by finite differences of the residual")
    krylov: bool = Field(True, description="GMRES on directional derivatives, preconditioned by the frozen operator")
    fd_step: PositiveFloat = Field(1e-7, description="Relative finite-difference step")
    armijo: PositiveFloat = Field(1e-4, description="Sufficient-decrease constant of the line search")
    min_line_step: PositiveFloat = Field(1.0 / 64, description="Smallest damped Newton step")
    kernel_tol: PositiveFloat = Field(constants.KERNEL_TOL, description="Kernel ratio below which the linearization is singular")
    kernel_warn: PositiveFloat = Field(constants.KERNEL_WARN, description="Kernel ratio below which a warning is raised")
    continuation_min_step: PositiveFloat = Field(constants.CONTINUATION_MIN_STEP, description="Smallest step, relative to the parameter range")
    hat_tol: PositiveFloat = Field(constants.HAT_EMBED_TOL, description="Embedding tolerance for hat metrics")


class StabilityConfig(BaseModel):
    """Settings of the second-variation analysis."""
    model_config = ConfigDict(frozen=True)

    prefactor: Literal["none", "eight_pi"] = Field("none", description="Whether second_variation carries 1/8π")
    dense_limit: PositiveInt = Field(constants.DENSE_EIGEN_LIMIT, description="Largest vertex count solved with dense LAPACK")
    eigen_count: PositiveInt = Field(6, description="Number of pencil eigenpairs reported")


class OracleConfig(BaseModel):
    """Parameters of the reference geometry emitted by the oracle subcommand."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["round", "schwarzschild", "graph", "ellipsoid"] = "round"
    radius: PositiveFloat = 1.0
    mean_curvature: PositiveFloat = 1.0
    mass: PositiveFloat = 1.0
    areal_radius: PositiveFloat = 10.0
    axes: tuple[PositiveFloat, PositiveFloat, PositiveFloat] = (1.0, 1.0, 1.0)
    slope: float = Field(0.0, ge=0.0, description="Boundary gradient |∇f| of the graph")


class RunConfig(BaseModel):
    """Everything one CLI invocation needs, merged from the YAML file and the command line."""
    model_config = ConfigDict(frozen=True)

    subcommand: Literal["embed", "energy", "stability", "solve", "sweep", "oracle", "cases"]
    inputs: dict[str, Path] = Field(default_factory=dict, description="Named input files")
    output_dir: Path = Field(Path("."), description="Directory receiving every artifact")
    subdivisions: int = Field(4, ge=0, le=constants.MAX_SUBDIVISIONS)
    debug: bool = False
    embed: EmbedConfig = Field(default_factory=EmbedConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    stability: StabilityConfig = Field(default_factory=StabilityConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)

    def missing_inputs(self) -> list[str]:
        return [f"{name}={path}" for name, path in self.inputs.items() if not path.exists()]


class RuntimeSettings(BaseSettings):
    """Environment overrides, optionally read from a .env file."""
    model_config = SettingsConfigDict(env_prefix=constants.ENV_PREFIX, env_file=".env", extra="ignore")

    threads: PositiveInt = 1
    deterministic: bool = True
    log_dir: str = constants.LOG_DIR

    @property
    def workers(self) -> int:
        return 1 if self.deterministic else self.threads


def load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        loaded = yaml.safe_load(f) or {}
    if not isinstance(loaded, dict):
        raise InputError(f"config file {path} must hold a mapping")
    return loaded
