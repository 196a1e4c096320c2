"""Command-line surface: embed, energy, stability, solve, sweep, oracle and cases."""
import asyncio
import logging
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from pydantic import ValidationError

from quasilocal import critical_solver, quasilocal_energy, reference_geometries, variation_analysis, weyl_embedding
from quasilocal.tools import formats, utils
from quasilocal.tools.constants import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, LOGGER_MAIN, LOGGER_SESSION_FILE_PATTERN
from quasilocal.tools.errors import InputError, QuasiLocalError
from quasilocal.tools.settings import RunConfig, RuntimeSettings, load_config_file

logger = logging.getLogger(LOGGER_MAIN)

# command line flag -> (section, key) of RunConfig
_OVERRIDES = {
    'tol': ('solver', 'tol'),
    'max_newton': ('solver', 'max_newton'),
    'fd_jacobian': ('solver', 'fd_jacobian'),
    'min_step': ('solver', 'continuation_min_step'),
    'embed_tol': ('embed', 'tol'),
    'prefactor': ('stability', 'prefactor'),
    'm': ('oracle', 'mass'),
    'R': ('oracle', 'areal_radius'),
    'r': ('oracle', 'radius'),
    'H': ('oracle', 'mean_curvature'),
    'axes': ('oracle', 'axes'),
    'slope': ('oracle', 'slope'),
}
_INPUTS = ('metric', 'data', 'tau', 'family', 'cases_dir')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='quasilocal', description='Quasi-local energy of spacelike 2-spheres')
    parser.add_argument('-d', '--debug', action='store_true', help='Enable debug logging level')
    parser.add_argument('-c', '--config', type=Path, help='YAML file with RunConfig settings')
    parser.add_argument('-o', '--out', type=Path, help='Output directory')
    parser.add_argument('-s', '--subdivisions', type=int, help='Icosphere subdivision level for generated meshes')
    commands = parser.add_subparsers(dest='subcommand', required=True)

    embed = commands.add_parser('embed', help='Embed a metric in R^3 and write its shape data')
    embed.add_argument('--metric', type=Path, required=True, help='Mesh file with edge lengths')
    embed.add_argument('--embed-tol', type=float, help='Target relative edge RMS')

    energy = commands.add_parser('energy', help='Evaluate E_WY for boundary data and a time function')
    energy.add_argument('--data', type=Path, required=True, help='Boundary data JSON')
    energy.add_argument('--tau', type=Path, help='Time function CSV (zero when omitted)')

    stability = commands.add_parser('stability', help='Stability coefficient and pencil spectrum')
    stability.add_argument('--data', type=Path, required=True, help='Boundary data JSON')
    stability.add_argument('--prefactor', choices=['none', 'eight_pi'], help='Second-variation normalization')

    solve = commands.add_parser('solve', help='Solve for a critical time function')
    source = solve.add_mutually_exclusive_group(required=True)
    source.add_argument('--data', type=Path, help='Boundary data JSON')
    source.add_argument('--family', type=Path, help='Data family JSON for continuation')
    solve.add_argument('--tau', type=Path, help='Initial time function CSV')
    _solver_flags(solve)

    sweep = commands.add_parser('sweep', help='Continuation through a family with per-step energy and beta')
    sweep.add_argument('--family', type=Path, required=True, help='Data family JSON')
    _solver_flags(sweep)

    oracle = commands.add_parser('oracle', help='Emit a reference geometry with its known values')
    oracle.add_argument('kind', choices=['round', 'schwarzschild', 'graph', 'ellipsoid'])
    oracle.add_argument('--m', type=float, help='Schwarzschild mass')
    oracle.add_argument('--R', type=float, help='Schwarzschild areal radius')
    oracle.add_argument('--r', type=float, help='Round sphere radius')
    oracle.add_argument('--H', type=float, help='Round sphere mean curvature')
    oracle.add_argument('--axes', type=float, nargs=3, help='Ellipsoid semi-axes')
    oracle.add_argument('--slope', type=float, help='Graph boundary slope |grad f|')

    cases = commands.add_parser('cases', help='Run every acceptance case file concurrently')
    cases.add_argument('--cases-dir', type=Path, help='Directory holding case JSON files')
    return parser


def _solver_flags(parser: ArgumentParser):
    parser.add_argument('--tol', type=float, help='Residual norm at convergence')
    parser.add_argument('--max-newton', type=int, help='Newton iteration cap')
    parser.add_argument('--fd-jacobian', action='store_true', default=None, help='Finite-difference Jacobian')
    parser.add_argument('--min-step', type=float, help='Smallest continuation step, relative to the range')


def build_config(args: Namespace) -> RunConfig:
    """Merge the YAML file, then command line flags, into a validated RunConfig."""
    settings = load_config_file(args.config)
    settings['subcommand'] = args.subcommand
    if args.subcommand == 'oracle':
        settings.setdefault('oracle', {})['kind'] = args.kind
    for flag, (section, key) in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings.setdefault(section, {})[key] = value
    inputs = {name: getattr(args, name) for name in _INPUTS if getattr(args, name, None) is not None}
    if inputs:
        settings['inputs'] = {**settings.get('inputs', {}), **inputs}
    if args.out is not None:
        settings['output_dir'] = args.out
    if args.subdivisions is not None:
        settings['subdivisions'] = args.subdivisions
    settings['debug'] = args.debug or settings.get('debug', False)
    try:
        config = RunConfig.model_validate(settings)
    except ValidationError as exc:
        raise InputError(f"invalid configuration: {exc}") from None
    missing = config.missing_inputs()
    if missing:
        raise InputError(f"input files not found: {', '.join(missing)}")
    return config


def run_embed(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    sigma = formats.read_mesh(config.inputs['metric']).metric()
    X = weyl_embedding.embed(sigma, config.embed)
    shape = weyl_embedding.shape_data(X, sigma)
    formats.write_embedding(config.output_dir / 'embedding.mesh', X)
    formats.write_table(config.output_dir / 'shape.csv', formats.shape_table(shape))
    summary = {'residual': X.residual, 'iterations': X.iterations, 'gauge': X.gauge.mode, 'volume': X.volume}
    formats.write_json(config.output_dir / 'embed_report.json', summary)
    return summary


def _read_tau(config: RunConfig, data: quasilocal_energy.BoundaryData) -> np.ndarray:
    if 'tau' not in config.inputs:
        return np.zeros(data.sigma.vertex_count)
    return formats.read_field(config.inputs['tau'], 'tau', data.sigma.vertex_count)


def run_energy(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    data = formats.read_boundary(config.inputs['data'])
    tau = _read_tau(config, data)
    report = quasilocal_energy.wang_yau_energy(data, tau, config.solver.hat_tol)
    extra = {}
    if data.time_symmetric:
        extra['m_by_closed'] = quasilocal_energy.brown_york_mass(data)
    formats.write_report(config.output_dir / 'energy_report.json', report, **extra)
    formats.write_field(config.output_dir / 'theta.csv', report.theta, 'theta')
    return {'e_wy': report.e_wy, **extra}


def run_stability(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    data = formats.read_boundary(config.inputs['data'])
    report = variation_analysis.stability_beta(data, config.stability)
    formats.write_report(config.output_dir / 'stability_report.json', report)
    spectrum = pd.DataFrame({'k': np.arange(len(report.eigenvalues)), 'eigenvalue': report.eigenvalues,
                             'participation': report.participation})
    formats.write_table(config.output_dir / 'spectrum.csv', spectrum)
    formats.write_field(config.output_dir / 'eta.csv', report.minimizing_eta, 'eta')
    return {'beta': report.beta, 'margin': report.eigenvalue_criterion_margin}


def run_solve(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    if 'family' in config.inputs:
        family = formats.read_family(config.inputs['family'])
        first = family.members[0]
        reports = critical_solver.continuation_solve(family, _read_tau(config, first), config.solver)
        for k, report in enumerate(reports):
            formats.write_report(config.output_dir / f'solve_report_{k:03d}.json', report)
        final = reports[-1]
    else:
        data = formats.read_boundary(config.inputs['data'])
        final = critical_solver.newton_solve(data, _read_tau(config, data), config.solver)
        formats.write_report(config.output_dir / 'solve_report.json', final)
    formats.write_field(config.output_dir / 'tau.csv', final.tau, 'tau')
    return {'residual_norm': final.residual_norm, 'newton_iterations': final.newton_iterations}


async def _sweep_rows(family: critical_solver.DataFamily, reports: list, config: RunConfig, workers: int) -> list[dict]:
    semaphore = asyncio.Semaphore(workers)

    async def evaluate(report):
        async with semaphore:
            data = family.at(report.parameter)
            energy = await asyncio.to_thread(quasilocal_energy.wang_yau_energy, data, report.tau, config.solver.hat_tol)
            stability = await asyncio.to_thread(variation_analysis.stability_beta, data, config.stability)
        return {'t': report.parameter, 'e_wy': energy.e_wy, 'beta': stability.beta,
                'residual': report.residual_norm, 'kernel_ratio': report.kernel_ratio}

    return await asyncio.gather(*(evaluate(report) for report in reports))


def run_sweep(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    family = formats.read_family(config.inputs['family'])
    tau_start = np.zeros(family.members[0].sigma.vertex_count)
    reports = critical_solver.continuation_solve(family, tau_start, config.solver)
    rows = asyncio.run(_sweep_rows(family, reports, config, runtime.workers))
    formats.write_table(config.output_dir / 'sweep.csv', pd.DataFrame(rows))
    return {'steps': len(rows)}


def run_oracle(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    settings = config.oracle
    n = config.subdivisions
    match settings.kind:
        case 'round':
            bundle = reference_geometries.round_sphere(settings.radius, settings.mean_curvature, n)
        case 'schwarzschild':
            bundle = reference_geometries.schwarzschild_sphere(settings.mass, settings.areal_radius, n)
        case 'graph':
            bundle = reference_geometries.graph_sphere(settings.slope, n, settings.axes)
        case 'ellipsoid':
            sigma, truth = reference_geometries.ellipsoid_metric(*settings.axes, subdivisions=n)
            formats.write_metric(config.output_dir / 'ellipsoid.mesh', sigma)
            formats.write_embedding(config.output_dir / 'ellipsoid_truth.mesh', truth)
            return {'vertices': sigma.vertex_count}
    formats.write_boundary(config.output_dir / f'{settings.kind}.json', bundle.data)
    known = {name: {'value': item.value, 'provenance': item.provenance} for name, item in bundle.known.items()}
    formats.write_json(config.output_dir / f'{settings.kind}_known.json', {'known': known})
    return {name: item.value for name, item in bundle.known.items()}


def run_cases(config: RunConfig, runtime: RuntimeSettings) -> dict[str, Any]:
    from quasilocal.case_runner import CaseRunner

    runner = CaseRunner(debug=config.debug, workers=runtime.workers, log_dir=runtime.log_dir)
    cases_dir = config.inputs.get('cases_dir')
    results = asyncio.run(runner.run_cases(cases_dir.resolve()) if cases_dir else runner.run_cases())
    failed = [name for name, result in results.items() if not result.passed]
    if failed:
        raise InputError(f"{len(failed)} case(s) failed: {', '.join(sorted(failed))}")
    return {'cases': len(results)}


COMMANDS: dict[str, Callable[[RunConfig, RuntimeSettings], dict[str, Any]]] = {
    'embed': run_embed,
    'energy': run_energy,
    'stability': run_stability,
    'solve': run_solve,
    'sweep': run_sweep,
    'oracle': run_oracle,
    'cases': run_cases,
}


def execute(config: RunConfig, runtime: RuntimeSettings | None = None) -> dict[str, Any]:
    """Run one subcommand without touching logging handlers."""
    runtime = runtime or RuntimeSettings()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return COMMANDS[config.subcommand](config, runtime)


def cli(argv: list[str] | None = None) -> int:
    """Parse argv, run the subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    runtime = RuntimeSettings()
    utils.setup_logging(LOGGER_MAIN, debug=args.debug, file_pattern=LOGGER_SESSION_FILE_PATTERN,
                        console_output=True, log_dir=runtime.log_dir)
    output_dir = args.out or Path('.')
    try:
        config = build_config(args)
        output_dir = config.output_dir
        summary = execute(config, runtime)
    except InputError as exc:
        logger.error(f"input error: {exc}")
        return EXIT_INPUT
    except QuasiLocalError as exc:
        output_dir.mkdir(parents=True, exist_ok=True)
        formats.write_diagnostics(output_dir / 'diagnostics.json', exc)
        logger.error(f"{type(exc).__name__}: {exc}; diagnostics written to {output_dir / 'diagnostics.json'}")
        return EXIT_NUMERICAL
    logger.info(f"{args.subcommand} finished: {summary}")
    return EXIT_OK
