"""
Run records, config files, persistence and aggregation

Nothing here knows how runs are produced; :mod:`pymorse.cli` wires the
experiments to these helpers.
"""
from __future__ import absolute_import

from collections import namedtuple
import csv
import errno
import glob
import hashlib
import logging
from math import fsum, sqrt
import os

from simplejson import dumps
from six import iteritems, string_types

from pymorse.exceptions import ConfigurationError, PersistenceError


log = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
NO_LANDSCAPE = 'na'
AVERAGE = 'average'
OUT_DIR_ENV = 'MORSE_OUT_DIR'
DEFAULT_OUT_DIR = 'morse-runs'


SeriesRow = namedtuple('SeriesRow', 'step weight value event')

EventRow = namedtuple('EventRow', 'epoch event P weight')


class RunRecord(object):
    """
    One optimization run: its identity, its per-step (or per-epoch) series
    and scores

    ``final_score`` is the last series value. ``best_score`` is the best
    value seen, including the ``initial`` value before the first step when
    one is given.
    """
    def __init__(self, experiment, strategy, seed, series,
                 landscape=NO_LANDSCAPE, initial=None, events=None,
                 trajectories=None, config=None, wall_ms=0, extra=None):
        """
        :arg experiment: 'bench' or 'cartpole'
        :arg strategy: Strategy tag, like 'morse_rnd'
        :arg seed: The run seed
        :arg series: List of :class:`SeriesRow`, one per budgeted step
        :arg landscape: Landscape part of the run id, like 'spiky7'
        :arg events: List of :class:`EventRow`, for scheduled runs
        :arg trajectories: The last rollout, for trajectory dumps
        :arg config: Dict of every setting that shaped the run
        :arg extra: More key/value pairs for the manifest
        """
        if not series:
            raise ConfigurationError('A run needs at least one step.')
        self.experiment = experiment
        self.strategy = strategy
        self.seed = seed
        self.series = list(series)
        self.landscape = landscape
        self.initial = initial
        self.events = events or []
        self.trajectories = trajectories
        self.config = config or {}
        self.wall_ms = wall_ms
        self.extra = extra or {}

    @property
    def run_id(self):
        return '%s-%s-%s-%s' % (self.experiment, self.strategy, self.seed,
                                self.landscape)

    @property
    def family(self):
        return self.extra.get('family', self.experiment)

    @property
    def values(self):
        return [row.value for row in self.series]

    @property
    def final_score(self):
        return self.series[-1].value

    @property
    def best_score(self):
        values = self.values
        if self.initial is not None:
            values.append(self.initial)
        return max(values)

    def __repr__(self):
        return 'RunRecord(%r, final=%.4f)' % (self.run_id, self.final_score)


# Config files

def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _str(text):
    if not text:
        raise ValueError('empty value')
    return text


def _list(text):
    items = [item.strip() for item in text.split(',') if item.strip()]
    if not items:
        raise ValueError('empty list')
    return items


def _bool(text):
    lowered = text.lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('not a boolean: %r' % text)


CONFIG_KEYS = {
    'family': _str,
    'strategies': _list,
    'landscape_seeds': _int,
    'run_seeds': _int,
    'budget': _int,
    'seeds': _int,
    'epochs': _int,
    'inner_epochs': _int,
    'episodes': _int,
    'grid': _int,
    'seed': _int,
    'master_seed': _int,
    'workers': _int,
    'out': _str,
    'alpha': _float,
    'tau': _float,
    'candidates': _int,
    'weight_mode': _str,
    'interference': _bool,
    'inner_lr': _float,
}


def load_config(path):
    """
    Read a ``key = value`` config file and return a dict of the keys it sets.

    Blank lines and ``#`` comments are skipped. Keys are the long CLI flag
    names with underscores for dashes. Raise
    :class:`~pymorse.exceptions.ConfigurationError` naming the line for an
    unknown key, a line without ``=`` or a value of the wrong type.
    """
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except (IOError, OSError) as exc:
        raise ConfigurationError("Can't read config file %s: %s"
                                 % (path, exc))
    settings = {}
    for number, line in enumerate(lines, 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip().replace('-', '_')
        if not sep:
            raise ConfigurationError('expected "key = value", got %r'
                                     % line, number)
        if key not in CONFIG_KEYS:
            raise ConfigurationError('unknown key %r' % key, number)
        try:
            settings[key] = CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise ConfigurationError('bad value for %s: %s' % (key, exc),
                                     number)
    return settings


def config_hash(config):
    """Return a stable hex digest of a JSON-able config dict."""
    canonical = dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha1(canonical.encode('utf-8')).hexdigest()


def default_out_dir():
    return os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR


# Persistence

def format_float(value):
    return FLOAT_FORMAT % value


def _weight_columns(record):
    width = len(record.series[0].weight)
    prefix = 'x' if record.experiment == 'bench' else 'w'
    return ['%s%s' % (prefix, i + 1) for i in range(width)]


def ensure_dir(path):
    try:
        os.makedirs(path)
    except OSError as exc:
        if exc.errno != errno.EEXIST or not os.path.isdir(path):
            raise PersistenceError(path, str(exc))


def write_rows(path, header, rows):
    """Write a header and rows as CSV, raising PersistenceError on failure."""
    try:
        with open(path, 'w') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)
    except (IOError, OSError) as exc:
        raise PersistenceError(path, str(exc))


def manifest(record):
    """Return the key/value pairs of a run's ``.meta`` file, in order."""
    pairs = [('run_id', record.run_id),
             ('experiment', record.experiment),
             ('strategy', record.strategy),
             ('seed', str(record.seed)),
             ('landscape', record.landscape),
             ('family', str(record.family)),
             ('config_hash', config_hash(record.config)),
             ('final_score', format_float(record.final_score)),
             ('best_score', format_float(record.best_score)),
             ('steps', str(len(record.series))),
             ('wall_ms', str(record.wall_ms))]
    taken = set(k for k, _ in pairs)
    pairs.extend((k, str(v)) for k, v in sorted(iteritems(record.extra))
                 if k not in taken)
    return pairs


def persist_run(record, directory, dump_trajectories=False):
    """
    Write a run to ``directory`` and return the path of its series CSV.

    Files written, all named after the run id:

    ``<run_id>.csv``
        step, x1, x2 (or w1..w4), value, event
    ``<run_id>.meta``
        ``key=value`` manifest with scores, seed and config hash
    ``<run_id>.events.csv``
        the scheduler event log, when the run has one
    ``<run_id>.traj.csv``
        the last rollout's steps, if ``dump_trajectories``

    Floats are written with 17 significant digits so they read back
    exactly. Raise :class:`~pymorse.exceptions.PersistenceError` on IO
    failure.
    """
    ensure_dir(directory)
    base = os.path.join(directory, record.run_id)
    columns = _weight_columns(record)
    series_path = base + '.csv'
    write_rows(series_path, ['step'] + columns + ['value', 'event'],
               ([row.step] + [format_float(w) for w in row.weight] +
                [format_float(row.value), row.event]
                for row in record.series))
    if record.events:
        write_rows(base + '.events.csv',
                   ['epoch', 'event', 'P'] + columns,
                   ([row.epoch, row.event, format_float(row.P)] +
                    [format_float(w) for w in row.weight]
                    for row in record.events))
    if dump_trajectories and record.trajectories is not None:
        _write_trajectories(base + '.traj.csv', record.trajectories)
    try:
        with open(base + '.meta', 'w') as f:
            for key, value in manifest(record):
                f.write('%s=%s\n' % (key, value))
    except (IOError, OSError) as exc:
        raise PersistenceError(base + '.meta', str(exc))
    log.debug('Wrote %s.', series_path)
    return series_path


TRAJECTORY_COLUMNS = ['episode', 't', 'x', 'x_dot', 'theta', 'theta_dot',
                      'action', 'r_task', 'r_survival', 'r_position',
                      'r_interference']


def _write_trajectories(path, rollout):
    rows = []
    for episode, traj in enumerate(rollout.trajectories):
        for t in range(len(traj.actions)):
            rows.append([episode, t] +
                        [format_float(v) for v in traj.states[t]] +
                        [int(traj.actions[t])] +
                        [format_float(v) for v in traj.rewards[t]])
    write_rows(path, TRAJECTORY_COLUMNS, rows)


def write_grid(path, points, values):
    """Write a plot-ready ``x1,x2,f`` grid of a landscape."""
    write_rows(path, ['x1', 'x2', 'f'],
               ([format_float(p[0]), format_float(p[1]), format_float(v)]
                for p, v in zip(points, values)))
    return path


def read_grid(path):
    """Read an ``x1,x2,f`` grid back as a list of ``(x1, x2, f)`` floats."""
    try:
        with open(path) as f:
            reader = csv.reader(f)
            next(reader)
            return [tuple(float(v) for v in fields) for fields in reader]
    except (IOError, OSError, StopIteration, ValueError) as exc:
        raise PersistenceError(path, str(exc) or 'empty file')


def read_series(path):
    """Read a series CSV back into a list of :class:`SeriesRow`."""
    try:
        with open(path) as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = []
            for fields in reader:
                rows.append(SeriesRow(int(fields[0]),
                                      tuple(float(v) for v in fields[1:-2]),
                                      float(fields[-2]), fields[-1]))
    except (IOError, OSError, StopIteration, ValueError) as exc:
        raise PersistenceError(path, str(exc) or 'empty file')
    if header[0] != 'step' or header[-2:] != ['value', 'event']:
        raise PersistenceError(path, 'unexpected header %r' % (header,))
    return rows


def read_meta(path):
    """Read a ``.meta`` manifest into a dict of strings."""
    meta = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.rstrip('\n')
                if line:
                    key, _, value = line.partition('=')
                    meta[key] = value
    except (IOError, OSError) as exc:
        raise PersistenceError(path, str(exc))
    return meta


# Aggregation

AggregateRow = namedtuple('AggregateRow', 'strategy family mean std n')


def _stats(values):
    values = sorted(values)
    n = len(values)
    mean = fsum(values) / n
    std = sqrt(fsum((v - mean) ** 2 for v in values) / n)
    return mean, std, n


class AggregateTable(object):
    """
    Mean and population standard deviation of run scores per
    (strategy, family) cell

    When runs span more than one family, each strategy also gets an
    ``average`` row over all of its runs.
    """
    COLUMNS = ['strategy', 'family', 'mean', 'std', 'n']

    def __init__(self, rows):
        self.rows = sorted(rows, key=lambda r: (r.strategy, r.family))

    @classmethod
    def from_scores(cls, scores):
        """
        :arg scores: Iterable of ``(strategy, family, score)`` triples
        """
        cells = {}
        for strategy, family, score in scores:
            cells.setdefault((strategy, family), []).append(float(score))
        rows = [AggregateRow(s, f, *_stats(v))
                for (s, f), v in iteritems(cells)]
        families = set(f for _, f in cells)
        if len(families) > 1:
            for strategy in set(s for s, _ in cells):
                values = [v for (s, _), vs in iteritems(cells)
                          if s == strategy for v in vs]
                rows.append(AggregateRow(strategy, AVERAGE, *_stats(values)))
        return cls(rows)

    def cell(self, strategy, family):
        for row in self.rows:
            if row.strategy == strategy and row.family == family:
                return row
        raise KeyError((strategy, family))

    def write_csv(self, path):
        write_rows(path, self.COLUMNS,
                   ([r.strategy, r.family, format_float(r.mean),
                     format_float(r.std), r.n] for r in self.rows))
        return path

    @classmethod
    def read_csv(cls, path):
        try:
            with open(path) as f:
                reader = csv.DictReader(f)
                rows = [AggregateRow(d['strategy'], d['family'],
                                     float(d['mean']), float(d['std']),
                                     int(d['n'])) for d in reader]
        except (IOError, OSError, KeyError, ValueError) as exc:
            raise PersistenceError(path, str(exc))
        return cls(rows)


def aggregate(directory, score='final'):
    """
    Build an :class:`AggregateTable` from every ``.meta`` file under
    ``directory``.

    :arg score: 'final' for final-iterate scores or 'best' for best-seen
    """
    if score not in ('final', 'best'):
        raise ConfigurationError("score must be 'final' or 'best', got %r."
                                 % (score,))
    if not isinstance(directory, string_types) or not os.path.isdir(directory):
        raise PersistenceError(directory, 'not a directory')
    paths = sorted(glob.glob(os.path.join(directory, '*.meta')))
    if not paths:
        raise PersistenceError(directory, 'no run manifests found')
    scores = []
    for path in paths:
        meta = read_meta(path)
        try:
            scores.append((meta['strategy'], meta['family'],
                           float(meta[score + '_score'])))
        except (KeyError, ValueError) as exc:
            raise PersistenceError(path, 'bad manifest: %s' % exc)
    log.info('Aggregated %s runs from %s.', len(scores), directory)
    return AggregateTable.from_scores(scores)
