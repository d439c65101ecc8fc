"""
The outer loop: when to explore, how to climb, and the implicit gradient

Two kinds of outer problem live here. On the synthetic landscapes the weight
is a point and its "performance" is a black-box value, so the climb is plain
finite-difference gradient ascent (:func:`bench_run`). In reinforcement
learning the performance depends on the weight only through the trained
policy, and :func:`bilevel_outer_grad` differentiates through the inner
optimum with a truncated Neumann series.
"""
from __future__ import absolute_import

from collections import namedtuple
import logging
import time

import numpy as np

from pymorse.cartpole import composite_reward
from pymorse.exceptions import ConfigurationError, NumericError
from pymorse.harness import RunRecord, SeriesRow
from pymorse.landscapes import DOMAIN, finite_diff_grad
from pymorse.netcore import hvp_at
from pymorse.sampling import make_sampler
from pymorse.utils import all_finite, discounted_prefix, reward_to_go


log = logging.getLogger(__name__)


class ExplorationConfig(object):
    """
    Knobs of the exploration gate

    :arg N: How many uniform candidates to score per proposal
    :arg alpha: Improvement threshold; the gate only opens when the recent
        improvement is strictly below it
    :arg tau: Softmax temperature multiplier on novelty scores
    :arg t_grad: Epochs between outer gradient updates
    :arg t_explore: Epochs between exploration checks, a multiple of
        ``t_grad``
    :arg weight_box: A :class:`~pymorse.utils.Box` the weights live in
    """
    def __init__(self, N=20, alpha=0.01, tau=10.0, t_grad=1, t_explore=10,
                 weight_box=None):
        if int(N) != N or N < 1:
            raise ConfigurationError('N must be a positive integer, got %r.'
                                     % (N,))
        if not alpha >= 0:
            raise ConfigurationError('alpha must be non-negative, got %r.'
                                     % (alpha,))
        if not tau > 0:
            raise ConfigurationError('tau must be positive, got %r.' % (tau,))
        if t_grad < 1 or t_explore < 1 or t_explore % t_grad:
            raise ConfigurationError(
                't_explore (%s) must be a positive multiple of t_grad (%s).'
                % (t_explore, t_grad))
        self.N = int(N)
        self.alpha = float(alpha)
        self.tau = float(tau)
        self.t_grad = int(t_grad)
        self.t_explore = int(t_explore)
        self.weight_box = DOMAIN if weight_box is None else weight_box

    def as_dict(self):
        return {'N': self.N, 'alpha': self.alpha, 'tau': self.tau,
                't_grad': self.t_grad, 't_explore': self.t_explore,
                'weight_box': [self.weight_box.lo.tolist(),
                               self.weight_box.hi.tolist()]}


class NeumannConfig(object):
    """
    :arg K: Number of series terms
    :arg eta: Damping applied as ``H <- eta * H``; None picks it adaptively
        from one Hessian-vector product along the input
    :arg divergence_cap: Abort when a partial term grows past this multiple
        of the input's norm
    """
    def __init__(self, K=5, eta=None, divergence_cap=1e3):
        if int(K) != K or K < 1:
            raise ConfigurationError('K must be a positive integer, got %r.'
                                     % (K,))
        if eta is not None and not eta > 0:
            raise ConfigurationError('eta must be positive, got %r.' % (eta,))
        self.K = int(K)
        self.eta = eta
        self.divergence_cap = float(divergence_cap)


NeumannResult = namedtuple('NeumannResult', 'value diverged eta')

OuterGradient = namedtuple('OuterGradient', 'grad skipped reason')

OuterStep = namedtuple('OuterStep', 'weight_fn iterations skipped')


def explore_gate(cfg, delta_R, P_curr, sampler, rng):
    """
    Decide whether to jump to a new weight, and where.

    If ``delta_R >= cfg.alpha`` nothing happens. Otherwise the sampler is
    prepared (the novelty scorer fits its predictor) and, with probability
    ``1 - P_curr``, one proposal is drawn and returned clipped into
    ``cfg.weight_box``. Return None when the gate stays closed.

    :arg delta_R: Recent improvement in task performance
    :arg P_curr: Current task performance in [0, 1]
    :arg sampler: Any :mod:`pymorse.sampling` sampler
    :arg rng: A numpy ``Generator``
    """
    if not 0.0 <= P_curr <= 1.0:
        raise ConfigurationError('P_curr must lie in [0, 1], got %r.'
                                 % (P_curr,))
    if delta_R >= cfg.alpha:
        return None
    sampler.prepare()
    if rng.random() < 1.0 - P_curr:
        w = cfg.weight_box.clip(sampler.propose(cfg, rng))
        log.debug('Gate opened at P=%.3f, dR=%.3g: jumping to %s.',
                  P_curr, delta_R, np.round(w, 4).tolist())
        return w
    return None


def neumann_inverse_apply(hvp_fn, v, cfg):
    """
    Approximate ``H^-1 v`` by ``sum_{i<K} (I - eta H)^i (eta v)``.

    Return a :class:`NeumannResult`. ``diverged`` is set, and ``value`` is
    None, when a partial term outgrows ``cfg.divergence_cap * ||v||``, turns
    non-finite, or ``hvp_fn`` raises
    :class:`~pymorse.exceptions.NumericError`; callers must then skip the
    update it was for.
    """
    v = np.asarray(v, dtype=float)
    v_norm = float(np.linalg.norm(v))
    if not np.isfinite(v_norm):
        return NeumannResult(None, True, cfg.eta)
    if v_norm == 0.0:
        return NeumannResult(np.zeros_like(v), False, cfg.eta)
    cap = cfg.divergence_cap * v_norm
    try:
        eta = cfg.eta
        if eta is None:
            gain = float(np.linalg.norm(hvp_fn(v)))
            eta = 1.0 / (1.0 + gain / v_norm)
        u = eta * v
        total = u.copy()
        for _ in range(cfg.K - 1):
            u = u - eta * np.asarray(hvp_fn(u), dtype=float)
            total = total + u
            if (not all_finite(u, total) or np.linalg.norm(u) > cap or
                    np.linalg.norm(total) > cap):
                log.warning('Neumann series diverged (eta=%.3g).', eta)
                return NeumannResult(None, True, eta)
    except NumericError as exc:
        log.warning('Neumann series aborted: %s', exc)
        return NeumannResult(None, True, cfg.eta)
    return NeumannResult(total, False, eta)


def implicit_outer_grad(task_grad, inner_grad_fn, params, mixed_vjp, neumann,
                        outer_size):
    """
    Return the implicit-function gradient of an outer objective.

    The inner problem minimizes a loss ``L(theta, phi)`` whose gradient in
    ``theta`` is ``inner_grad_fn``; at its optimum the outer objective's
    gradient in ``phi`` is ``-mixed_vjp(H^-1 task_grad)`` with ``H`` the
    Hessian of ``L`` at ``params``.

    :arg task_grad: Gradient of the outer objective with respect to ``theta``
    :arg inner_grad_fn: Callable ``theta -> dL/dtheta``
    :arg params: Inner parameters ``theta`` at (approximate) optimum
    :arg mixed_vjp: Callable ``u -> d/dphi (u . dL/dtheta)``
    :arg neumann: A :class:`NeumannConfig`
    :arg outer_size: Length of ``phi``, for the zero gradient of a skip
    """
    zero = np.zeros(outer_size)
    if not all_finite(task_grad):
        return OuterGradient(zero, True, 'non-finite task gradient')
    inverse = neumann_inverse_apply(
        lambda v: hvp_at(params, inner_grad_fn, v), task_grad, neumann)
    if inverse.diverged:
        return OuterGradient(zero, True, 'neumann series diverged')
    outer = -np.asarray(mixed_vjp(inverse.value), dtype=float)
    if not all_finite(outer):
        return OuterGradient(zero, True, 'non-finite mixed derivative')
    return OuterGradient(outer, False, None)


def bilevel_outer_grad(policy, weight_fn, trajectories, neumann, gamma=0.99,
                       l2=0.25):
    """
    Gradient of task performance with respect to the weight function's
    parameters, through the policy trained on the weighted reward.

    The policy's per-batch REINFORCE surrogate stands in for the inner
    objective ``G``. Its regularized negation
    ``L = -G + l2/2 ||theta||^2`` is what the inner loop minimizes, so the
    Neumann series runs on the Hessian of ``L``, which is positive definite
    near a regularized optimum.

    :arg policy: Has ``params``, ``baseline``, ``score_grad``, ``score_jvp``
    :arg weight_fn: Has ``params``, ``weights(states)`` and
        ``vjp(states, cotangent)``
    :arg trajectories: A batch with ``states``, ``actions``, ``rewards``
        (one column per reward component, task first) and ``lengths``
    :arg neumann: A :class:`NeumannConfig`

    Return an :class:`OuterGradient`; ``skipped`` is set, with a zero
    gradient, when the series diverged or anything was non-finite.
    """
    states = trajectories.states
    actions = trajectories.actions
    rewards = np.asarray(trajectories.rewards, dtype=float)
    lengths = trajectories.lengths
    n_steps = float(len(actions))
    outer_size = weight_fn.params.shape[0]

    task_to_go = reward_to_go(rewards[:, 0], gamma, lengths)
    task_grad = policy.score_grad(states, actions,
                                  task_to_go - task_to_go.mean()) / n_steps

    composite = composite_reward(weight_fn.weights(states), rewards)
    advantage = reward_to_go(composite, gamma, lengths) - policy.baseline

    def inner_grad_fn(theta):
        return (-policy.score_grad(states, actions, advantage, params=theta)
                / n_steps + l2 * theta)

    def mixed_vjp(u):
        # d/dphi of u . dL/dtheta; only the composite returns depend on phi.
        c = policy.score_jvp(states, actions, u)
        prefix = discounted_prefix(c, gamma, lengths)
        return -weight_fn.vjp(states, prefix[:, np.newaxis] * rewards) \
            / n_steps

    result = implicit_outer_grad(task_grad, inner_grad_fn, policy.params,
                                 mixed_vjp, neumann, outer_size)
    if result.skipped:
        log.warning('Skipping outer update: %s.', result.reason)
    return result


def outer_grad_step(weight_fn, grad, lr_net=5e-4, lr_coeff=2.5e-3,
                    min_iters=3, max_iters=10, box=None, clip_norm=1.0,
                    tol=1e-6):
    """
    Ascend the outer objective for between ``min_iters`` and ``max_iters``
    sub-iterations.

    :arg weight_fn: Has ``mode`` and ``ascend(direction, lr, box)``
    :arg grad: A gradient vector, or a callable mapping the current weight
        function to one (re-evaluated every sub-iteration)
    :arg box: Overrides the weight function's own box for clipping
    :arg clip_norm: Each applied gradient is rescaled to at most this norm

    Stops early once the gradient norm falls below ``tol`` (never before
    ``min_iters``). The check is the same for vectors and callables; a fixed
    vector keeps its norm, so it runs exactly ``min_iters`` sub-iterations
    when below ``tol`` and ``max_iters`` otherwise. A non-finite gradient
    abandons the whole step and returns the weight function untouched.
    Return an :class:`OuterStep`.
    """
    lr = lr_net if weight_fn.mode == 'network' else lr_coeff
    current = weight_fn
    iterations = 0
    for i in range(max_iters):
        g = np.asarray(grad(current) if callable(grad) else grad, dtype=float)
        if not all_finite(g):
            log.warning('Skipping outer step on a non-finite gradient.')
            return OuterStep(weight_fn, iterations, True)
        norm = float(np.linalg.norm(g))
        if i >= min_iters and norm < tol:
            break
        if norm > clip_norm:
            g = g * (clip_norm / norm)
        current = current.ascend(g, lr, box)
        iterations = i + 1
    return OuterStep(current, iterations, False)


# Synthetic benchmark

BENCH_LR = 0.05
BENCH_ALPHA = 0.01
BENCH_WINDOW = 10
BENCH_CANDIDATES = 20
BENCH_TAU = 10.0
BENCH_CLIP_NORM = 1.0

BENCH_STRATEGIES = ('no_explore', 'periodic_rnd', 'periodic_random',
                    'morse_rnd', 'morse_random', 'morse_cem', 'morse_cma')
STRATEGY_ALIASES = {'periodic': 'periodic_rnd', 'morse': 'morse_rnd'}


def parse_bench_strategy(strategy):
    """
    Split a strategy tag into ``(kind, sampler_name)``, where kind is
    'none', 'periodic' or 'morse'.
    """
    strategy = STRATEGY_ALIASES.get(strategy, strategy)
    if strategy not in BENCH_STRATEGIES:
        raise ConfigurationError('Unknown bench strategy %r; expected one of '
                                 '%s.' % (strategy,
                                          ', '.join(BENCH_STRATEGIES)))
    if strategy == 'no_explore':
        return 'none', None
    kind, _, sampler = strategy.partition('_')
    return kind, sampler


def bench_run(landscape, strategy, budget=100, rng=None, seed=0, cfg=None,
              lr=BENCH_LR, landscape_label=None):
    """
    Maximize ``landscape`` within ``budget`` events and return the
    :class:`~pymorse.harness.RunRecord`.

    Events are numbered ``k = 0 .. budget-1``. Each is either a
    finite-difference gradient step (the gradient clipped to norm 1) or,
    for exploring strategies at a checkpoint (``k > 0`` and ``k`` a multiple
    of 10), possibly a reset to a sampled weight. A reset costs one event.
    Periodic strategies reset at every checkpoint; gated ones consult
    :func:`explore_gate` with
    ``P_curr = f(x_k)`` and ``delta_R = f(x_k) - f(x_{k-10})``.

    :arg landscape: Anything with ``eval(x)`` over [-1, 1]^2
    :arg strategy: One of :data:`BENCH_STRATEGIES`
    :arg rng: Generator for the start point and every exploration draw
    :arg seed: Seed for the novelty scorer's nets
    :arg cfg: An :class:`ExplorationConfig`; defaults to ``N=20, alpha=0.01,
        tau=10`` on [-1, 1]^2
    :arg landscape_label: Landscape part of the run id, like 'spiky7'
    """
    kind, sampler_name = parse_bench_strategy(strategy)
    if cfg is None:
        cfg = ExplorationConfig(N=BENCH_CANDIDATES, alpha=BENCH_ALPHA,
                                tau=BENCH_TAU, t_explore=BENCH_WINDOW,
                                weight_box=DOMAIN)
    if rng is None:
        rng = np.random.default_rng(seed)
    box = cfg.weight_box
    window = cfg.t_explore
    sampler = (make_sampler(sampler_name, box.dim, seed)
               if sampler_name else None)
    started = time.time()

    x = box.sample(rng)
    start = tuple(x)
    values = [landscape.eval(x)]
    if sampler is not None:
        sampler.visit(x)
    series = []
    pending = None
    resets = 0
    for k in range(budget):
        event = 'grad'
        if (sampler is not None and 0 < k < budget - 1 and
                k % window == 0):
            sampler.visit(x)
            if pending is not None:
                sampler.observe(pending, values[k])
                pending = None
            if kind == 'periodic':
                sampler.prepare()
                jump = box.clip(sampler.propose(cfg, rng))
            else:
                jump = explore_gate(cfg, values[k] - values[k - window],
                                    values[k], sampler, rng)
            if jump is not None:
                x = jump
                pending = jump
                event = 'reset'
                resets += 1
        if event == 'grad':
            g = finite_diff_grad(landscape, x).grad
            norm = np.linalg.norm(g)
            if norm > BENCH_CLIP_NORM:
                g = g * (BENCH_CLIP_NORM / norm)
            x = box.clip(x + lr * g)
        values.append(landscape.eval(x))
        series.append(SeriesRow(k, tuple(x), values[-1], event))

    label = (landscape_label if landscape_label is not None else
             '%s%s' % (getattr(landscape, 'family', 'field'),
                       getattr(landscape, 'seed', 0)))
    record = RunRecord('bench', STRATEGY_ALIASES.get(strategy, strategy),
                       seed, series, landscape=label, initial=values[0],
                       wall_ms=int(round((time.time() - started) * 1000)),
                       extra={'resets': resets,
                              'family': getattr(landscape, 'family', 'field'),
                              'start': '%.17g,%.17g' % start})
    log.info('%s: final %.4f, best %.4f, %s resets.', record.run_id,
             record.final_score, record.best_score, resets)
    return record
