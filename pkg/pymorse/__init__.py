from __future__ import absolute_import

__version__ = '0.1.0'
__version_info__ = tuple(__version__.split('.'))

from pymorse.exceptions import (MorseError, ConfigurationError, ShapeError,
                                DomainError, NumericError,
                                EpisodeFinishedError, ScheduleError,
                                PersistenceError)
from pymorse.harness import (RunRecord, AggregateTable, aggregate,
                             load_config, persist_run)
from pymorse.inner import CartPoleConfig, train_cartpole
from pymorse.landscapes import make_landscape
from pymorse.outer import (ExplorationConfig, NeumannConfig, bench_run,
                           explore_gate, neumann_inverse_apply)
from pymorse.scheduler import Schedule, run_morse


__all__ = ['MorseError', 'ConfigurationError', 'ShapeError', 'DomainError',
           'NumericError', 'EpisodeFinishedError', 'ScheduleError',
           'PersistenceError', 'RunRecord', 'AggregateTable', 'aggregate',
           'load_config', 'persist_run', 'CartPoleConfig', 'train_cartpole',
           'make_landscape', 'ExplorationConfig', 'NeumannConfig',
           'bench_run', 'explore_gate', 'neumann_inverse_apply', 'Schedule',
           'run_morse']

get_version = lambda: __version_info__
