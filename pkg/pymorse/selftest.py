"""
Fast invariant checks that run from an installed package

``pymorse selftest`` runs every check here and exits non-zero if any fails.
The unit tests cover the same ground more thoroughly.
"""
from __future__ import absolute_import

from collections import namedtuple
import logging
import shutil
import tempfile

import numpy as np

from pymorse import cartpole
from pymorse.exceptions import MorseError
from pymorse.harness import persist_run, read_series
from pymorse.inner import WeightFunction
from pymorse.landscapes import grid_points, make_landscape
from pymorse.netcore import forward, grad, init_net
from pymorse.outer import (ExplorationConfig, NeumannConfig, bench_run,
                           explore_gate, neumann_inverse_apply,
                           outer_grad_step)
from pymorse.sampling import RandomSampler, softmax_probabilities
from pymorse.utils import Box, derive_rng


log = logging.getLogger(__name__)


CheckResult = namedtuple('CheckResult', 'name passed detail')


class SelftestError(MorseError, AssertionError):
    """Exception raised when a check finds an invariant broken"""


def _require(condition, message, *values):
    """Raise :class:`SelftestError` with ``message % values`` unless
    ``condition`` holds. Unlike ``assert``, survives ``python -O``."""
    if not condition:
        raise SelftestError(message % values if values else message)


def check_neumann_geometric():
    """Five terms on H = 0.5 I sum to 1.9375 v."""
    v = np.array([1.0, -2.0, 0.5])
    result = neumann_inverse_apply(lambda u: 0.5 * u, v,
                                   NeumannConfig(K=5, eta=1.0))
    _require(not result.diverged, 'series diverged at eta %r', result.eta)
    _require(np.allclose(result.value, 1.9375 * v, rtol=0, atol=1e-12),
             'expected %r, got %r', list(1.9375 * v), list(result.value))


def check_netcore_gradient():
    net = init_net([3, 5, 2], 7)
    rng = derive_rng(0, 'selftest', 'netcore')
    x = rng.normal(size=3)
    upstream = rng.normal(size=2)
    analytic = grad(net, x, upstream).param_grad
    h = 1e-6
    for i in rng.choice(net.parameter_count, 5, replace=False):
        bumped = np.array(net.params)
        bumped[i] += h
        up = upstream.dot(forward(net.with_params(bumped), x))
        bumped[i] -= 2 * h
        down = upstream.dot(forward(net.with_params(bumped), x))
        numeric = (up - down) / (2 * h)
        _require(abs(numeric - analytic[i]) < 1e-4,
                 'parameter %s: numeric %r, analytic %r',
                 i, numeric, analytic[i])


def check_softmax_probabilities():
    p = softmax_probabilities([0.0, 0.1, 0.2], 10.0)
    _require(abs(p.sum() - 1.0) < 1e-12, 'sum is %r', p.sum())
    _require(p[0] < p[1] < p[2], 'not increasing: %r', list(p))
    uniform = softmax_probabilities([1.0, 1.0], 10.0)
    _require(np.allclose(uniform, [0.5, 0.5]), 'ties gave %r', list(uniform))


def check_gate_stays_in_box():
    box = Box.cube(0.0, 1.0, 4)
    cfg = ExplorationConfig(alpha=0.01, weight_box=box)
    rng = derive_rng(0, 'selftest', 'gate')
    sampler = RandomSampler()
    for _ in range(2000):
        w = explore_gate(cfg, -1.0, 0.0, sampler, rng)
        _require(w is not None, 'gate stayed shut at P = 0')
        _require(box.contains(w), '%r is outside the box', w)


def check_closed_gate_draws_nothing():
    cfg = ExplorationConfig(alpha=0.01)
    rng = derive_rng(0, 'selftest', 'closed')
    _require(explore_gate(cfg, 0.5, 0.5, RandomSampler(), rng) is None,
             'gate fired on a large improvement')
    _require(rng.random() == derive_rng(0, 'selftest', 'closed').random(),
             'a shut gate consumed random draws')


def check_landscape_range():
    landscape = make_landscape('spiky', 3)
    values = landscape.eval_many(grid_points())
    _require(values.min() == 0.0 and values.max() == 1.0,
             'grid range is [%r, %r]', values.min(), values.max())


def check_bench_replay():
    landscape = make_landscape('smooth', 1)
    runs = [bench_run(landscape, 'morse_rnd', budget=30,
                      rng=derive_rng(0, 'selftest', 'bench'), seed=1)
            for _ in range(2)]
    _require(runs[0].series == runs[1].series, 'replay differs')


def check_skipped_step_keeps_weights():
    box = Box.cube(0.0, 1.0, 4)
    weight_fn = WeightFunction.network(np.full(4, 0.5), box, 3)
    step = outer_grad_step(weight_fn, np.full(weight_fn.params.shape, np.nan))
    _require(step.skipped, 'NaN gradient was applied')
    _require(step.weight_fn is weight_fn and
             np.array_equal(step.weight_fn.params, weight_fn.params),
             'skipped step changed the weights')


def check_cartpole_termination():
    s = cartpole.CartState(0.0, 0.0, 0.3, 0.0, 0)
    _require(cartpole.is_finished(s), 'theta 0.3 did not terminate')
    live = cartpole.CartState(0.0, 0.0, 0.0, 0.0, 0)
    transition = cartpole.step(live, cartpole.RIGHT)
    _require(not transition.done and transition.reward.survival == 1.0,
             'upright step gave %r', transition)


def check_persistence_round_trip():
    landscape = make_landscape('fixednn', 2)
    record = bench_run(landscape, 'no_explore', budget=5,
                       rng=derive_rng(0, 'selftest', 'persist'))
    directory = tempfile.mkdtemp(prefix='pymorse-selftest-')
    try:
        rows = read_series(persist_run(record, directory))
    finally:
        shutil.rmtree(directory)
    _require(rows == record.series, 'read back %r, wrote %r',
             rows, record.series)


CHECKS = [
    ('neumann_geometric', check_neumann_geometric),
    ('netcore_gradient', check_netcore_gradient),
    ('softmax_probabilities', check_softmax_probabilities),
    ('gate_stays_in_box', check_gate_stays_in_box),
    ('closed_gate_draws_nothing', check_closed_gate_draws_nothing),
    ('landscape_range', check_landscape_range),
    ('bench_replay', check_bench_replay),
    ('skipped_step_keeps_weights', check_skipped_step_keeps_weights),
    ('cartpole_termination', check_cartpole_termination),
    ('persistence_round_trip', check_persistence_round_trip),
]


def run_checks(names=None):
    """
    Run the named checks (all of them by default) and return a list of
    :class:`CheckResult`. A check passes unless it raises.
    """
    results = []
    for name, check in CHECKS:
        if names is not None and name not in names:
            continue
        try:
            check()
        except Exception as exc:
            detail = '%s: %s' % (type(exc).__name__, exc)
            log.debug('Check %s failed.', name, exc_info=True)
            results.append(CheckResult(name, False, detail))
        else:
            results.append(CheckResult(name, True, ''))
    return results


def report(results):
    """Return a JSON-able summary of ``results``."""
    return {'passed': sum(1 for r in results if r.passed),
            'failed': sum(1 for r in results if not r.passed),
            'checks': [r._asdict() for r in results]}
