"""
Command Line Interface for Eigenmatrix Sparse Recovery

Subcommands:
    recover     recover spikes from an observation CSV (s_re, s_im, u_re, u_im)
    experiment  run a named scenario or a configuration file over seeded trials
    eigenmatrix build an eigenmatrix and print its diagnostics
    grid        emit the probe grid and sample set of a scenario

The JSON result goes to stdout; logs and progress go to stderr.
Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

# Add src directory to path for imports
sys.path.append(str(Path(__file__).parent))

from config import (  # noqa: E402
    ConfigError,
    DEFAULT_N_A,
    DEFAULT_NORM_BOUND,
    ESTIMATORS,
    MAX_WORKERS,
    NOISE_ACCEPTANCE_FACTOR,
    OUTPUT_BASE_DIR,
    REFINE_DAMPING_INIT,
    REFINE_MAX_ITERATIONS,
    setup_logging,
)
from domains import DomainMap, ReferenceDomain, map_forward, probe_grid  # noqa: E402
import eigenmatrix  # noqa: E402
from harness import (  # noqa: E402
    SCENARIOS,
    SampleSpec,
    ExperimentConfig,
    check_pairing,
    generate_samples,
    load_config,
    scenario_config,
    sigma_sweep,
    trial_seed,
    STREAM_SAMPLES,
    write_report,
)
from kernels import Kernel, SampleSet  # noqa: E402
from numerics import NumericalError  # noqa: E402
from recovery import Observations  # noqa: E402
from refine import RefineOptions, recover_spikes, select_model_order  # noqa: E402
from utils import (  # noqa: E402
    MetadataManager,
    OutputManager,
    read_observations_csv,
    spike_rows,
    write_csv_rows,
    write_json,
    SPIKE_COLUMNS,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    parser.add_argument('--quiet', '-q', action='store_true', help='Suppress all output except JSON result')


def _add_eigenmatrix_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--n-a', type=int, help=f'Number of probe nodes (default: {DEFAULT_N_A})')
    parser.add_argument('--norm-bound', type=float, help=f'Bound on ||M||_2 (default: {DEFAULT_NORM_BOUND})')


def _add_refine_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--max-iterations', type=int,
                        help=f'Refinement iteration cap (default: {REFINE_MAX_ITERATIONS})')
    parser.add_argument('--damping-init', type=float,
                        help=f'Initial refinement damping (default: {REFINE_DAMPING_INIT})')
    parser.add_argument('--no-restarts', action='store_true',
                        help='Refine only from the eigenmatrix estimate at the default Krylov depth')


def _refine_options(args, base: Optional[RefineOptions] = None) -> RefineOptions:
    base = base or RefineOptions()
    overrides = {'max_iterations': args.max_iterations, 'damping_init': args.damping_init}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.no_restarts:
        overrides['restarts'] = False
    return replace(base, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Eigenmatrix sparse recovery - recover spikes from unstructured samples",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python -m src.main experiment --scenario fourier --sigma 1e-2,1e-3,1e-4 --out ./runs/fourier
    python -m src.main experiment --config my_run.json5 --trials 10 --format csv
    python -m src.main recover --input data.csv --scenario fourier --n-x 3
    python -m src.main eigenmatrix --scenario shift --samples perturbed_lattice --jitter 0.2
    python -m src.main grid --scenario laplace --out ./grids

Scenarios:
    rational, spectral, fourier, laplace, deconv, shift
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    exp = sub.add_parser('experiment', help='Run seeded trials of a scenario')
    exp.add_argument('--scenario', choices=list(SCENARIOS), help='Named scenario')
    exp.add_argument('--config', type=str, help='JSON/JSON5 configuration file')
    exp.add_argument('--difficulty', choices=['easy', 'hard'], help='Spike layout')
    exp.add_argument('--sigma', type=_float_list, help='Noise level(s), comma-separated')
    exp.add_argument('--seed', type=int, help='Master seed')
    exp.add_argument('--trials', type=int, help='Number of trials')
    exp.add_argument('--estimator', choices=list(ESTIMATORS), help='Location estimator')
    exp.add_argument('--n-x', type=int, help='Number of spikes in random layouts')
    exp.add_argument('--ell', type=int, help='Krylov depth')
    _add_eigenmatrix_flags(exp)
    exp.add_argument('--auto-n-a', action='store_true', help='Shrink n_a until cond(G_hat) is moderate')
    _add_refine_flags(exp)
    exp.add_argument('--workers', type=int, default=MAX_WORKERS, help='Parallel trials')
    exp.add_argument('--out', type=str, help='Output directory')
    exp.add_argument('--format', choices=['json', 'csv'], default='json', help='Per-trial table format')
    _add_common(exp)

    rec = sub.add_parser('recover', help='Recover spikes from an observation CSV')
    rec.add_argument('--input', '-i', type=str, required=True, help='CSV with columns s_re, s_im, u_re, u_im')
    rec.add_argument('--scenario', choices=list(SCENARIOS), help='Take kernel and domain from a scenario')
    rec.add_argument('--kernel', choices=list(Kernel.FAMILIES), help='Kernel family')
    rec.add_argument('--gamma', type=float, help='Lorentzian width parameter')
    rec.add_argument('--domain', choices=list(ReferenceDomain.KINDS), help='Reference domain')
    rec.add_argument('--interval', type=float, nargs=2, metavar=('LOW', 'HIGH'),
                     help='Map the reference interval affinely onto [LOW, HIGH]')
    rec.add_argument('--n-x', type=int, help='Number of spikes; omit to select it from the noise level')
    rec.add_argument('--n-max', type=int, default=8, help='Largest model order tried (default: 8)')
    rec.add_argument('--sigma-estimate', type=float, default=0.0, help='Noise level for model-order selection')
    rec.add_argument('--estimator', choices=list(ESTIMATORS), default='esprit', help='Location estimator')
    rec.add_argument('--ell', type=int, help='Krylov depth')
    _add_eigenmatrix_flags(rec)
    _add_refine_flags(rec)
    rec.add_argument('--out', type=str, help='Output directory')
    _add_common(rec)

    eig = sub.add_parser('eigenmatrix', help='Build an eigenmatrix and report diagnostics')
    eig.add_argument('--scenario', choices=list(SCENARIOS), default='shift', help='Named scenario')
    eig.add_argument('--samples', choices=list(SampleSpec.KINDS), help='Override the sample kind')
    eig.add_argument('--n-s', type=int, help='Override the number of samples')
    eig.add_argument('--jitter', type=float, default=0.1, help='Jitter of perturbed_lattice samples')
    eig.add_argument('--seed', type=int, help='Master seed for random samples')
    _add_eigenmatrix_flags(eig)
    eig.add_argument('--out', type=str, help='Write eigenmatrix.json here')
    _add_common(eig)

    grid = sub.add_parser('grid', help='Emit probe grid and sample set as CSV')
    grid.add_argument('--scenario', choices=list(SCENARIOS), required=True, help='Named scenario')
    grid.add_argument('--seed', type=int, help='Master seed for random samples')
    grid.add_argument('--n-a', type=int, help=f'Number of probe nodes (default: {DEFAULT_N_A})')
    grid.add_argument('--out', type=str, help='Output directory')
    _add_common(grid)
    return parser


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(Path(args.config))
    elif args.scenario:
        cfg = scenario_config(args.scenario)
    else:
        raise ConfigError("experiment needs --scenario or --config")
    overrides = {
        'layout': args.difficulty,
        'seed': args.seed,
        'trials': args.trials,
        'estimator': args.estimator,
        'n_x': args.n_x,
        'ell': args.ell,
        'n_a': args.n_a,
        'norm_bound': args.norm_bound,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.auto_n_a:
        overrides['auto_n_a'] = True
    overrides['refine'] = _refine_options(args, cfg.refine)
    return replace(cfg, **overrides)


def run_experiment_command(args) -> int:
    cfg = _experiment_config(args)
    sigmas = args.sigma or [cfg.sigma]
    out_dir = Path(args.out) if args.out else OutputManager.create_output_structure(OUTPUT_BASE_DIR, cfg.scenario)
    prepared = OutputManager.prepare_output_directory(out_dir)
    if not prepared['success']:
        raise ConfigError("; ".join(prepared['errors']))

    if not args.quiet:
        print(f"Scenario: {cfg.scenario} ({cfg.layout}), sigma: {sigmas}, trials: {cfg.trials}", file=sys.stderr)
    start = time.time()
    reports = sigma_sweep(cfg, sigmas, workers=max(1, args.workers), progress=not args.quiet)

    summaries = []
    for sigma, report in zip(sigmas, reports):
        target = out_dir if len(sigmas) == 1 else out_dir / f"sigma_{sigma:g}"
        paths = write_report(report, target, args.format)
        summaries.append({'sigma': sigma, 'aggregate': report.aggregate, 'files': paths})

    metadata = MetadataManager.create_run_metadata('experiment', out_dir, time.time() - start,
                                                   {'scenario': cfg.scenario, 'sigmas': sigmas})
    MetadataManager.save_metadata(metadata, out_dir)

    all_failed = all(r.all_failed for r in reports)
    print(json.dumps({
        'success': not all_failed,
        'scenario': cfg.scenario,
        'output_folder': str(out_dir),
        'reports': summaries,
    }, indent=2))
    return EXIT_NUMERICAL if all_failed else EXIT_OK


def _recover_setup(args):
    if args.scenario:
        cfg = scenario_config(args.scenario)
        kernel, domain, dmap = cfg.kernel, cfg.domain, cfg.dmap
    else:
        if not args.kernel or not args.domain:
            raise ConfigError("recover needs --scenario or both --kernel and --domain")
        kernel, domain, dmap = None, None, DomainMap()
    if args.kernel:
        kernel = Kernel(args.kernel, gamma=args.gamma)
    if args.domain:
        domain = ReferenceDomain(args.domain)
    if args.interval:
        dmap = DomainMap.from_interval(*args.interval)
    check_pairing(kernel, domain)
    return kernel, domain, dmap


def run_recover_command(args) -> int:
    kernel, domain, dmap = _recover_setup(args)
    s, values = read_observations_csv(Path(args.input))
    S = SampleSet(s)
    u = Observations(values, S)
    E = eigenmatrix.build(kernel, S, domain, dmap, args.n_a or DEFAULT_N_A, args.norm_bound or DEFAULT_NORM_BOUND)

    output = {'success': True, 'input_file': args.input}
    if args.n_x is not None:
        result = recover_spikes(kernel, S, u, E, args.n_x, args.estimator, args.ell, domain, dmap,
                                opts=_refine_options(args))
    else:
        n_max = min(args.n_max, S.n_s // 2)
        order = select_model_order(kernel, S, u, E, args.sigma_estimate, n_max, args.estimator,
                                   domain, dmap, opts=_refine_options(args), factor=NOISE_ACCEPTANCE_FACTOR)
        result = order.result
        output['model_order'] = {
            'n_x': order.n_x,
            'level': order.level,
            'converged': order.converged,
            'objectives': {str(n): (v if v != float('inf') else None) for n, v in order.objectives.items()},
        }
    output.update(result.to_dict())
    output['n_x'] = result.refined.n_x

    if args.out:
        out_dir = Path(args.out)
        prepared = OutputManager.prepare_output_directory(out_dir)
        if not prepared['success']:
            raise ConfigError("; ".join(prepared['errors']))
        write_json(out_dir / 'recovery.json', output)
        table = (spike_rows('raw', result.raw.locations, result.raw.weights)
                 + spike_rows('refined', result.refined.locations, result.refined.weights))
        write_csv_rows(out_dir / 'spikes.csv', table, SPIKE_COLUMNS)
        output['output_folder'] = str(out_dir)

    print(json.dumps(output, indent=2))
    return EXIT_OK


def _scenario_samples(cfg: ExperimentConfig, seed) -> SampleSet:
    sample_seed = trial_seed(cfg.seed if seed is None else seed, 0, STREAM_SAMPLES)
    return generate_samples(cfg.samples, sample_seed if cfg.samples.is_random else None)


def run_eigenmatrix_command(args) -> int:
    cfg = scenario_config(args.scenario)
    if args.samples or args.n_s:
        kind = args.samples or cfg.samples.kind
        n_s = args.n_s or cfg.samples.n_s
        keep = cfg.samples.to_dict() if kind == cfg.samples.kind else {}
        keep.update({'kind': kind, 'n_s': n_s})
        if kind == 'perturbed_lattice':
            keep['jitter'] = args.jitter
        cfg = replace(cfg, samples=SampleSpec.from_dict(keep), n_x=1, truth=None)
    S = _scenario_samples(cfg, args.seed)
    n_a = args.n_a or cfg.n_a
    E = eigenmatrix.build(cfg.kernel, S, cfg.domain, cfg.dmap, n_a, args.norm_bound or cfg.norm_bound)

    interior = eigenmatrix.interior_points(cfg.domain, 100)
    output = {
        'success': True,
        'scenario': cfg.scenario,
        'samples': cfg.samples.to_dict(),
        'eigenmatrix': E.metadata(),
        'residual_probe_nodes': eigenmatrix.residual_diagnostic(E, cfg.kernel, S, cfg.dmap, E.grid.nodes),
        'residual_interior': eigenmatrix.residual_diagnostic(E, cfg.kernel, S, cfg.dmap, interior),
    }
    if cfg.samples.kind in ('lattice', 'perturbed_lattice', 'uniform'):
        output['shift_deviation'] = eigenmatrix.shift_deviation(E)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        output['file'] = str(write_json(out_dir / 'eigenmatrix.json', eigenmatrix.to_dict(E)))

    print(json.dumps(output, indent=2))
    return EXIT_OK


def run_grid_command(args) -> int:
    cfg = scenario_config(args.scenario)
    S = _scenario_samples(cfg, args.seed)
    grid = probe_grid(cfg.domain, args.n_a or cfg.n_a)
    mapped = map_forward(cfg.dmap, grid.nodes)
    probe = [{'t_re': float(t.real), 't_im': float(t.imag), 'x_re': float(x.real), 'x_im': float(x.imag)}
             for t, x in zip(grid.nodes, mapped)]
    samples = [{'s_re': float(s.real), 's_im': float(s.imag)} for s in S.locations]
    output = {'success': True, 'scenario': cfg.scenario, 'n_a': grid.n_a, 'n_s': S.n_s}
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        output['probe_grid'] = str(write_csv_rows(out_dir / 'probe_grid.csv', probe, ('t_re', 't_im', 'x_re', 'x_im')))
        output['samples'] = str(write_csv_rows(out_dir / 'samples.csv', samples, ('s_re', 's_im')))
    else:
        output['probe_grid'] = probe
        output['samples'] = samples
    print(json.dumps(output, indent=2))
    return EXIT_OK


COMMANDS = {
    'experiment': run_experiment_command,
    'recover': run_recover_command,
    'eigenmatrix': run_eigenmatrix_command,
    'grid': run_grid_command,
}


def main(argv=None) -> int:
    """Main CLI function."""
    args = build_parser().parse_args(argv)

    if args.quiet:
        setup_logging('ERROR')
    elif args.verbose:
        setup_logging('DEBUG')
    else:
        setup_logging()

    try:
        return COMMANDS[args.command](args)

    except KeyboardInterrupt:
        print(json.dumps({'success': False, 'error': 'Process interrupted by user'}, indent=2))
        return EXIT_CONFIG

    except NumericalError as e:
        print(json.dumps({'success': False, 'error': str(e), 'kind': 'numerical'}, indent=2))
        return EXIT_NUMERICAL

    except (ConfigError, ValueError, OSError) as e:
        print(json.dumps({'success': False, 'error': str(e), 'kind': 'config'}, indent=2))
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
