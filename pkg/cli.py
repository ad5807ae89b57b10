#!/usr/bin/env python3
"""
dressed-pairs command-line entry point.

Subcommands fiber, sweep, scatter, localize and calibrate each write their
results and a manifest.json into <out-dir>/<command>/. Exit status is 0 on
success, 2 on validation errors and 3 on numerical failures.
"""

import sys
import math
import logging
import argparse
from pathlib import Path
from typing import List, Optional

import numpy as np

from backend.calibration import UpsilonCalibrator, binding_energy_report
from backend.dispersion_analysis import DispersionAnalyzer, symmetry_decompose
from backend.persistence import (
    FiberCache, RunManifest, write_density_csv, write_frame, write_json, write_propagators,
)
from backend.scattering import ScatteringEngine
from backend.spectral_solver import SpectralSolver
from backend.torus_grid import LatticeMap, TorusGrid, inner_product, save_grid_function_npz, to_lattice
from config.constants import EXIT_CODES, GRID_DEFAULTS, SCATTERING_DEFAULTS, TOOL_VERSION
from utils.config_loader import LoadedConfig, load_config, parse_repulsion
from utils.helpers import format_energy, format_repulsion, parse_torus_point
from utils.validators import NumericalFailure, PairModelError, ParameterValidationError

logger = logging.getLogger('dressed_pairs.cli')

DEFAULT_GRID_N = {
    'fiber': GRID_DEFAULTS['sweep_N'],
    'sweep': GRID_DEFAULTS['sweep_N'],
    'scatter': 8,
    'localize': GRID_DEFAULTS['localization_N'],
    'calibrate': GRID_DEFAULTS['sweep_N'],
}


def _torus_point(text: str):
    try:
        return parse_torus_point(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _repulsion(text: str) -> float:
    try:
        return parse_repulsion(text)
    except PairModelError as e:
        raise argparse.ArgumentTypeError(str(e))


def _times(text: str):
    parts = text.split(',')
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"--times expects `s,t`, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"--times expects two numbers, got {text!r}")


# Options whose values may start with "-", e.g. --k -pi,0
VALUE_OPTIONS = ('--k', '--times')


def join_option_values(argv: List[str]) -> List[str]:
    """Rewrite `--k -pi,0` as `--k=-pi,0` so argparse does not read the value as a flag"""
    joined: List[str] = []
    index = 0
    while index < len(argv):
        token = argv[index]
        following = argv[index + 1] if index + 1 < len(argv) else None
        if token in VALUE_OPTIONS and following is not None and following.startswith('-') \
                and not following.startswith('--') and following != '-h':
            joined.append(f"{token}={following}")
            index += 2
            continue
        joined.append(token)
        index += 1
    return joined


def uniform_kgrid(M: int):
    if M < 1:
        raise ParameterValidationError(f"kdensity must be >= 1, got {M}")
    axis = -math.pi + 2.0 * math.pi * np.arange(M) / M
    return [(float(k1), float(k2)) for k1 in axis for k2 in axis]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dressed-pairs',
        description="Dressed fermion pairs of a two-fermion / one-boson exchange lattice model",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {TOOL_VERSION}")
    parser.add_argument('--config', type=Path, default=None,
                        help="key = value configuration file (prototypical parameters when omitted)")
    parser.add_argument('--grid-N', type=int, default=None, help="grid points per axis (even, >= 4)")
    parser.add_argument('--threads', type=int, default=1, help="worker threads for fiber sweeps")
    parser.add_argument('--out-dir', type=Path, default=Path('results'), help="output directory")
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help="logging level")
    commands = parser.add_subparsers(dest='command', required=True)

    fiber = commands.add_parser('fiber', help="ground state of one fiber")
    fiber.add_argument('--k', type=_torus_point, required=True, help='total quasi-momentum, e.g. "-pi,0" or pi/2,0')
    fiber.add_argument('--U', type=_repulsion, default=None, help="on-site repulsion in eV or `hardcore`")
    fiber.add_argument('--window', type=int, default=GRID_DEFAULTS['window'],
                       help="lattice half-width of the density output (capped at N/2)")

    sweep = commands.add_parser('sweep', help="dispersion table over a uniform k grid")
    sweep.add_argument('--kdensity', type=int, default=16, help="k points per axis")
    sweep.add_argument('--U', type=_repulsion, default=None, help="on-site repulsion in eV or `hardcore`")
    sweep.add_argument('--skip-mass', action='store_true', help="do not evaluate mass tensors")

    scatter = commands.add_parser('scatter', help="finite-time interaction-picture propagator")
    scatter.add_argument('--k', type=_torus_point, required=True)
    scatter.add_argument('--times', type=_times, required=True, help='"s,t" in 1/eV')
    scatter.add_argument('--U', type=_repulsion, default=None, help="finite on-site repulsion in eV")
    scatter.add_argument('--steps', type=int, default=SCATTERING_DEFAULTS['default_ode_steps'])
    scatter.add_argument('--order', type=int, default=4, help="truncation order of the series path")
    scatter.add_argument('--methods', default='exact,ode,series',
                         help="comma separated subset of exact, ode, series")

    localize = commands.add_parser('localize', help="real-space density and localization lengths")
    localize.add_argument('--k', type=_torus_point, required=True)
    localize.add_argument('--U', type=_repulsion, default=None)
    localize.add_argument('--window', type=int, default=GRID_DEFAULTS['window'])
    localize.add_argument('--gap-kdensity', type=int, default=0,
                          help="k points per axis for the uniform Combes-Thomas gap (0: fiber gap)")

    calibrate = commands.add_parser('calibrate', help="fit the exchange amplitude to a pair fraction")
    calibrate.add_argument('--rho', type=float, default=0.9, help="target pair fraction in (0, 1)")
    calibrate.add_argument('--k', type=_torus_point, default=(-math.pi, 0.0))
    calibrate.add_argument('--tol', type=float, default=None)
    return parser


def _density(grid: TorusGrid, psi_hat: np.ndarray, window: int) -> LatticeMap:
    psi = to_lattice(grid, psi_hat, window)
    weights = np.abs(psi.values) ** 2
    total = float(weights.sum())
    return LatticeMap(window, weights / total if total > 0 else weights)


def cmd_fiber(args, config: LoadedConfig, grid: TorusGrid, out_dir: Path, manifest: RunManifest) -> None:
    solver = SpectralSolver(config.params, grid)
    state = solver.solve_E(args.k, args.U)
    payload = state.to_dict()
    payload['u_label'] = config.params.u_label
    payload['binding_energy'] = binding_energy_report(state).to_dict()
    if inner_product(grid, state.psi_hat, state.psi_hat).real > 0:
        payload['sym_weights'] = symmetry_decompose(grid, state.psi_hat)._asdict()
    else:
        payload['sym_weights'] = None

    window = min(args.window, grid.N // 2)
    manifest.add_output(write_json(out_dir / 'fiber.json', payload))
    manifest.add_output(write_density_csv(out_dir / 'fiber_density.csv', _density(grid, state.psi_hat, window)))
    manifest.add_output(save_grid_function_npz(grid, state.psi_hat, out_dir / 'fiber_psi.npz'))
    manifest.extra['k'] = list(state.k)
    print(f"✅ E(U={format_repulsion(state.U)}, k={state.k}) = {format_energy(state.E)}")
    print(f"   gap = {format_energy(state.gap)}, rho = {state.pair_fraction_rho:.6f}")


def cmd_sweep(args, config: LoadedConfig, grid: TorusGrid, out_dir: Path, manifest: RunManifest) -> None:
    params = config.params if args.U is None else config.params.with_U(args.U)
    M = args.kdensity
    kgrid = uniform_kgrid(M)

    cache = FiberCache(args.out_dir / 'cache', config.fingerprint, grid.N)
    analyzer = DispersionAnalyzer(params, grid)
    table = analyzer.sweep(kgrid, params.U, threads=args.threads, cache=cache,
                           compute_mass=not args.skip_mass)

    manifest.add_output(write_frame(out_dir / 'sweep.csv', table.to_dataframe()))
    manifest.add_output(write_json(out_dir / 'sweep.json', table.to_dict()))
    manifest.extra.update({'kdensity': M, 'cache': table.cache_stats, 'failures': len(table.failures)})
    stats = table.cache_stats
    print(f"✅ {len(table.records)} fibers, {len(table.failures)} failures")
    print(f"   cache: {stats['hits']} hits, {stats['misses']} misses ({stats['hit_rate_percent']:.1f}% hits)")


def cmd_scatter(args, config: LoadedConfig, grid: TorusGrid, out_dir: Path, manifest: RunManifest) -> None:
    s, t = args.times
    params = config.params if args.U is None else config.params.with_U(args.U)
    engine = ScatteringEngine(params, grid)
    methods = [name.strip() for name in args.methods.split(',') if name.strip()]
    unknown = sorted(set(methods) - {'exact', 'ode', 'series'})
    if unknown:
        raise ParameterValidationError(f"unknown scatter methods {unknown}")

    records = []
    for method in methods:
        if method == 'exact':
            records.append(engine.propagate_exact(args.k, s, t))
        elif method == 'ode':
            records.append(engine.propagate_ode(args.k, s, t, steps=args.steps))
        else:
            records.append(engine.dyson_blocks(args.k, s, t, args.order))

    manifest.add_output(write_json(out_dir / 'scatter.json', {
        'records': [record.summary() for record in records],
        'u_label': params.u_label,
    }))
    manifest.add_output(write_propagators(out_dir / 'scatter_propagators.npz', records))
    manifest.extra.update({'k': list(args.k), 'times': [s, t]})
    for record in records:
        print(f"✅ {record.method}: oracle error {record.oracle_error:.3e}, "
              f"unitarity error {record.unitarity_error:.3e}")


def cmd_localize(args, config: LoadedConfig, grid: TorusGrid, out_dir: Path, manifest: RunManifest) -> None:
    analyzer = DispersionAnalyzer(config.params, grid)
    window = min(args.window, grid.N // 2)
    gap_kgrid = uniform_kgrid(args.gap_kdensity) if args.gap_kdensity else None
    pair = analyzer.real_space_pair(args.k, args.U, window=window, gap_kgrid=gap_kgrid)
    manifest.add_output(write_json(out_dir / 'localize.json', pair.to_dict()))
    manifest.add_output(write_density_csv(out_dir / 'localize_density.csv', pair.density))
    manifest.extra['k'] = list(pair.k)
    print(f"✅ xi_a = {pair.xi_a:.4g} nm, xi_b = {pair.xi_b:.4g} nm "
          f"(confined axes: {', '.join(pair.confined_axes) or 'none'})")
    if pair.combes_certificate is not None:
        certificate = pair.combes_certificate
        print(f"   Combes-Thomas bound C = {certificate.C:.4g}, alpha = {certificate.alpha:.4g}, "
              f"holds = {certificate.holds}")


def cmd_calibrate(args, config: LoadedConfig, grid: TorusGrid, out_dir: Path, manifest: RunManifest) -> None:
    calibrator = UpsilonCalibrator(config.params, grid)
    kwargs = {} if args.tol is None else {'tol': args.tol}
    result = calibrator.calibrate_upsilon(args.k, args.rho, **kwargs)
    fitted = config.params.with_upsilon_peak(result.fitted_upsilon_peak, args.k)
    state = SpectralSolver(fitted, grid).solve_E(args.k)

    payload = result.to_dict()
    payload['binding_energy'] = binding_energy_report(state).to_dict()
    payload['E_eV'] = state.E
    payload['u_label'] = config.params.u_label
    manifest.add_output(write_json(out_dir / 'calibrate.json', payload))
    manifest.extra.update({'K': list(result.K), 'target_rho': args.rho})
    print(f"✅ upsilon_hat(K) = {format_energy(result.fitted_upsilon_peak, include_kelvin=False)} "
          f"gives rho = {result.achieved_rho:.6f} ({result.iterations} iterations)")


COMMANDS = {
    'fiber': cmd_fiber,
    'sweep': cmd_sweep,
    'scatter': cmd_scatter,
    'localize': cmd_localize,
    'calibrate': cmd_calibrate,
}


def main(argv: Optional[List[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(join_option_values(list(argv)))
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        config = load_config(args.config)
        grid = TorusGrid(args.grid_N or DEFAULT_GRID_N[args.command])
        if args.threads < 1:
            raise ParameterValidationError(f"threads must be >= 1, got {args.threads}")
        out_dir = args.out_dir / args.command
        out_dir.mkdir(parents=True, exist_ok=True)
        U = getattr(args, 'U', None)
        manifest = RunManifest(
            command=args.command,
            config_hash=config.fingerprint,
            grid_N=grid.N,
            U=config.params.U if U is None else U,
            u_label=config.params.u_label,
        )
        COMMANDS[args.command](args, config, grid, out_dir, manifest)
        manifest.write(out_dir)
    except ParameterValidationError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CODES['validation']
    except NumericalFailure as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CODES['numerical']
    return EXIT_CODES['success']


if __name__ == "__main__":
    sys.exit(main())
