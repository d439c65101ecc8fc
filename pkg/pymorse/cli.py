"""
The ``pymorse`` command

Subcommands::

    pymorse bench           synthetic landscape benchmark
    pymorse cartpole        multi-objective CartPole training
    pymorse dump-landscape  write one landscape as an x1,x2,f grid
    pymorse aggregate       mean/std table over persisted runs
    pymorse selftest        fast invariant checks

Settings come from built-in defaults, then a ``--config`` file, then
explicit flags, each overriding the one before.
"""
from __future__ import absolute_import, print_function

import argparse
from concurrent.futures import ProcessPoolExecutor
import logging
import os
import sys

from simplejson import dumps
from six import iteritems

from pymorse import __version__
from pymorse.exceptions import ConfigurationError, MorseError
from pymorse.harness import (CONFIG_KEYS, aggregate, default_out_dir,
                             ensure_dir, load_config, persist_run,
                             write_grid)
from pymorse.inner import (CARTPOLE_STRATEGIES, CartPoleConfig, InnerConfig,
                           train_cartpole)
from pymorse.landscapes import FAMILIES, grid_values, make_landscape
from pymorse.outer import ExplorationConfig, bench_run, parse_bench_strategy
from pymorse.selftest import report, run_checks
from pymorse.utils import derive_rng


log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

DEFAULTS = {
    'bench': {'family': 'all',
              'strategies': ['no_explore', 'periodic_rnd', 'morse_rnd'],
              'landscape_seeds': 10, 'run_seeds': 10, 'budget': 100,
              'master_seed': 0, 'alpha': 0.01, 'tau': 10.0,
              'candidates': 20, 'workers': 1},
    'cartpole': {'strategies': ['constant', 'gradient', 'gradient_reset',
                                'morse'],
                 'seeds': 10, 'epochs': 40, 'inner_epochs': 15,
                 'episodes': 20, 'weight_mode': 'network',
                 'interference': True, 'inner_lr': 0.01, 'alpha': 0.05,
                 'tau': 10.0, 'candidates': 20, 'workers': 1},
    'dump-landscape': {'family': 'smooth', 'seed': 0, 'grid': 101},
    'aggregate': {},
    'selftest': {},
}


def _flag(key):
    return '--' + key.replace('_', '-')


def _add_options(parser, keys, helps):
    for key in keys:
        parser.add_argument(_flag(key), dest=key, type=CONFIG_KEYS[key],
                            default=None, help=helps.get(key))


HELP = {
    'family': "Landscape family: 'smooth', 'fixednn', 'spiky' (or 'all')",
    'strategies': 'Comma-separated strategy tags',
    'landscape_seeds': 'Landscapes per family',
    'run_seeds': 'Runs per landscape and strategy',
    'budget': 'Events per bench run',
    'master_seed': 'Seed every bench stream is split from',
    'seeds': 'Training seeds per strategy',
    'epochs': 'Outer epochs per CartPole run',
    'inner_epochs': 'REINFORCE updates per outer epoch',
    'episodes': 'Episodes per rollout batch',
    'weight_mode': "'network' or 'constant'",
    'inner_lr': 'REINFORCE step size',
    'alpha': 'Exploration gate improvement threshold',
    'tau': 'Softmax temperature multiplier',
    'candidates': 'Candidates scored per proposal',
    'workers': 'Worker processes',
    'out': 'Output directory (default: $MORSE_OUT_DIR or ./morse-runs)',
    'seed': 'Landscape seed',
    'grid': 'Grid points per axis',
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog='pymorse',
        description='Bi-level reward shaping with gated exploration')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for debugging detail')
    parser.add_argument('--config', metavar='FILE',
                        help='key = value file of defaults for any flag')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    bench = commands.add_parser('bench', help='Synthetic landscape runs')
    _add_options(bench, ['family', 'strategies', 'landscape_seeds',
                         'run_seeds', 'budget', 'master_seed', 'alpha',
                         'tau', 'candidates', 'workers', 'out'], HELP)

    pole = commands.add_parser('cartpole', help='CartPole training runs')
    _add_options(pole, ['strategies', 'seeds', 'epochs', 'inner_epochs',
                        'episodes', 'weight_mode', 'inner_lr', 'alpha',
                        'tau', 'candidates', 'workers', 'out'], HELP)
    pole.add_argument('--no-interference', dest='interference',
                      action='store_const', const=False, default=None,
                      help='Drop the PD-interference penalty')
    pole.add_argument('--dump-trajectories', action='store_true',
                      help="Also write each run's last rollout")

    dump = commands.add_parser('dump-landscape',
                               help='Write a landscape grid as CSV')
    _add_options(dump, ['family', 'seed', 'grid', 'out'], HELP)

    agg = commands.add_parser('aggregate', help='Tabulate persisted runs')
    agg.add_argument('--in', dest='in_dir', default=None,
                     help='Directory of runs (default: the output dir)')
    agg.add_argument('--out', dest='out', default=None,
                     help='Table CSV (default: <in>/table.csv)')
    agg.add_argument('--score', choices=('final', 'best'), default='final',
                     help='Aggregate final-iterate or best-seen scores')

    check = commands.add_parser('selftest', help='Run invariant checks')
    check.add_argument('--json', action='store_true',
                       help='Print a machine-readable report')
    return parser


def resolve_settings(args):
    """
    Merge defaults, the config file and explicit flags into one dict.

    Config-file keys that the chosen subcommand has no flag for are ignored.
    """
    settings = dict(DEFAULTS[args.command])
    if args.command != 'aggregate':
        settings['out'] = default_out_dir()
    if args.config:
        for key, value in iteritems(load_config(args.config)):
            if hasattr(args, key):
                settings[key] = value
    for key, value in iteritems(vars(args)):
        if value is not None:
            settings[key] = value
    return settings


# Jobs run in worker processes, so they live at module level.

def bench_job(job):
    """Run and persist one bench run; return ``(run_id, final, best)``."""
    family, landscape_seed, run_seed, strategy, settings = job
    landscape = make_landscape(family, landscape_seed)
    cfg = ExplorationConfig(N=settings['candidates'], alpha=settings['alpha'],
                            tau=settings['tau'], t_explore=10)
    rng = derive_rng(settings['master_seed'], 'bench', family,
                     landscape_seed, run_seed)
    record = bench_run(landscape, strategy, budget=settings['budget'],
                       rng=rng, seed=run_seed, cfg=cfg,
                       landscape_label='%s%s' % (family, landscape_seed))
    record.config = {'budget': settings['budget'],
                     'master_seed': settings['master_seed'],
                     'landscape_seed': landscape_seed,
                     'exploration': cfg.as_dict()}
    persist_run(record, settings['out'])
    return record.run_id, record.final_score, record.best_score


def cartpole_job(job):
    """Run and persist one CartPole run; return ``(run_id, final, best)``."""
    strategy, seed, settings = job
    cfg = CartPoleConfig(
        epochs=settings['epochs'], inner_epochs=settings['inner_epochs'],
        inner=InnerConfig(lr=settings['inner_lr'],
                          episodes=settings['episodes']),
        weight_mode=settings['weight_mode'],
        interference=settings['interference'], alpha=settings['alpha'],
        N=settings['candidates'], tau=settings['tau'])
    record = train_cartpole(strategy, cfg=cfg, seed=seed)
    persist_run(record, settings['out'],
                dump_trajectories=settings.get('dump_trajectories', False))
    return record.run_id, record.final_score, record.best_score


def run_jobs(func, jobs, workers):
    """Map ``func`` over ``jobs``, in a process pool if ``workers > 1``."""
    if workers < 1:
        raise ConfigurationError('workers must be positive, got %r.'
                                 % (workers,))
    if workers == 1 or len(jobs) < 2:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


def _check_count(settings, key):
    if settings[key] < 1:
        raise ConfigurationError('%s must be positive, got %r.'
                                 % (_flag(key), settings[key]))


def bench_jobs(settings):
    """Enumerate the bench runs ``settings`` asks for, family-major."""
    families = (FAMILIES if settings['family'] == 'all' else
                [settings['family']])
    for family in families:
        if family not in FAMILIES:
            raise ConfigurationError('Unknown family %r.' % (family,))
    for strategy in settings['strategies']:
        parse_bench_strategy(strategy)
    for key in ('landscape_seeds', 'run_seeds', 'budget'):
        _check_count(settings, key)
    return [(family, lseed, rseed, strategy, settings)
            for family in families
            for lseed in range(settings['landscape_seeds'])
            for rseed in range(settings['run_seeds'])
            for strategy in settings['strategies']]


def cartpole_jobs(settings):
    for strategy in settings['strategies']:
        if strategy not in CARTPOLE_STRATEGIES:
            raise ConfigurationError(
                'Unknown CartPole strategy %r; expected one of %s.'
                % (strategy, ', '.join(CARTPOLE_STRATEGIES)))
    _check_count(settings, 'seeds')
    return [(strategy, seed, settings)
            for strategy in settings['strategies']
            for seed in range(settings['seeds'])]


def _report_runs(results, out):
    for run_id, final, best in results:
        print('%s\tfinal=%.4f\tbest=%.4f' % (run_id, final, best))
    print('Wrote %s runs to %s' % (len(results), out))


def cmd_bench(settings):
    results = run_jobs(bench_job, bench_jobs(settings), settings['workers'])
    _report_runs(results, settings['out'])


def cmd_cartpole(settings):
    results = run_jobs(cartpole_job, cartpole_jobs(settings),
                       settings['workers'])
    _report_runs(results, settings['out'])


def cmd_dump_landscape(settings):
    if settings['family'] not in FAMILIES:
        raise ConfigurationError('Unknown family %r.' % (settings['family'],))
    _check_count(settings, 'grid')
    landscape = make_landscape(settings['family'], settings['seed'])
    points, values = grid_values(landscape, settings['grid'])
    out = settings['out']
    ensure_dir(out)
    path = os.path.join(out, 'landscape-%s%s.csv' % (settings['family'],
                                                     settings['seed']))
    print(write_grid(path, points, values))


def cmd_aggregate(settings):
    in_dir = settings.get('in_dir') or default_out_dir()
    out = settings.get('out') or os.path.join(in_dir, 'table.csv')
    if os.path.isdir(out):
        out = os.path.join(out, 'table.csv')
    table = aggregate(in_dir, score=settings['score'])
    table.write_csv(out)
    for row in table.rows:
        print('%-18s %-10s %.3f (%.3f) n=%s' % row)
    print('Wrote %s' % out)


def cmd_selftest(settings):
    results = run_checks()
    if settings['json']:
        print(dumps(report(results), indent=2))
    else:
        for result in results:
            print('%s %s %s' % ('ok  ' if result.passed else 'FAIL',
                                result.name, result.detail))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


COMMANDS = {
    'bench': cmd_bench,
    'cartpole': cmd_cartpole,
    'dump-landscape': cmd_dump_landscape,
    'aggregate': cmd_aggregate,
    'selftest': cmd_selftest,
}


def cli_main(argv=None):
    """
    Run the command line ``argv`` (default ``sys.argv[1:]``) and return the
    exit code: 0 on success, 2 on a usage or configuration error, 1 on any
    other failure.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                      logging.DEBUG)
    logging.basicConfig(level=level,
                        format='%(asctime)s %(name)s %(levelname)s '
                               '%(message)s')
    try:
        settings = resolve_settings(args)
        code = COMMANDS[args.command](settings)
    except ConfigurationError as exc:
        print('pymorse: error: %s' % exc, file=sys.stderr)
        return EXIT_USAGE
    except MorseError as exc:
        log.debug('Run failed.', exc_info=True)
        print('pymorse: %s: %s' % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


def main():
    sys.exit(cli_main())
