"""
The inner loop: a REINFORCE agent trained on a weighted sum of reward
components, and the function that supplies those weights
"""
from __future__ import absolute_import

from collections import namedtuple
import logging

import numpy as np

from pymorse import cartpole
from pymorse.exceptions import ConfigurationError
from pymorse.netcore import (AdamState, adam_step, forward, grad, init_net,
                             jvp, sgd_step)
from pymorse.outer import (ExplorationConfig, NeumannConfig,
                           bilevel_outer_grad, explore_gate, outer_grad_step)
from pymorse.sampling import RandomSampler, make_sampler
from pymorse.scheduler import Schedule, run_morse
from pymorse.utils import Box, all_finite, derive_rng, fresh_seed, reward_to_go


log = logging.getLogger(__name__)

POLICY_SIZES = (4, 32, 2)
POLICY_OUTPUT_SCALE = 0.1
WEIGHT_SIZES = (4, 16, 4)
WEIGHT_OUTPUT_SCALE = 0.1
# Rough ranges of (x, x_dot, theta, theta_dot) seen before termination
STATE_SCALE = np.array([2.4, 3.0, 0.21, 3.0])
# Keeps adopted weights off the flat ends of the sigmoid.
ADOPT_MARGIN = 0.02
BUFFER_SIZE = 10000
REFERENCE_STATE = np.zeros(4)


def normalize_states(states):
    return np.asarray(states, dtype=float) / STATE_SCALE


class Policy(object):
    """
    A softmax policy over {LEFT, RIGHT} with its scalar return baseline and
    optimizer state

    Policies are treated as values: updates return new instances.
    """
    def __init__(self, net, baseline=0.0, optimizer_state=None):
        self.net = net
        self.baseline = float(baseline)
        self.optimizer_state = (AdamState.zeros(net.parameter_count)
                                if optimizer_state is None else
                                optimizer_state)

    @classmethod
    def fresh(cls, seed):
        """Return a near-uniform policy initialized from ``seed``."""
        return cls(init_net(POLICY_SIZES, seed, output='softmax',
                            output_scale=POLICY_OUTPUT_SCALE))

    @property
    def seed(self):
        return self.net.init_seed

    @property
    def params(self):
        return self.net.params

    def _net(self, params):
        return self.net if params is None else self.net.with_params(params)

    def probs(self, states, params=None):
        """Return action probabilities, one row per state."""
        return forward(self._net(params),
                       normalize_states(np.atleast_2d(states)))

    def log_probs(self, states, actions, params=None):
        p = self.probs(states, params)
        return np.log(p[np.arange(len(p)), np.asarray(actions)])

    def entropy(self, states):
        p = self.probs(states)
        return -(p * np.log(p)).sum(axis=1)

    def score_grad(self, states, actions, coef, params=None):
        """
        Return ``sum_t coef_t * grad log pi(a_t | s_t)`` with respect to the
        policy parameters (or ``params``, if given).
        """
        net = self._net(params)
        x = normalize_states(states)
        p = forward(net, x)
        rows = np.arange(len(p))
        actions = np.asarray(actions)
        upstream = np.zeros_like(p)
        upstream[rows, actions] = (np.asarray(coef, dtype=float) /
                                   p[rows, actions])
        return grad(net, x, upstream).param_grad

    def score_jvp(self, states, actions, tangent):
        """
        Return every step's derivative of ``log pi(a_t | s_t)`` along the
        parameter direction ``tangent``.
        """
        x = normalize_states(states)
        p = forward(self.net, x)
        dp = jvp(self.net, x, tangent)
        rows = np.arange(len(p))
        actions = np.asarray(actions)
        return dp[rows, actions] / p[rows, actions]

    def __repr__(self):
        return 'Policy(seed=%r, baseline=%.4g)' % (self.seed, self.baseline)


class WeightFunction(object):
    """
    The reward weights ``w(s)``, always inside ``box``

    In 'network' mode a [4, 16, 4] net with sigmoid outputs is mapped
    affinely onto the box. In 'constant' mode the four coefficients are the
    parameters themselves.
    """
    def __init__(self, mode, box, net=None, coeffs=None):
        if mode not in WEIGHT_MODES:
            raise ConfigurationError('Unknown weight mode %r; expected one of '
                                     '%s.' % (mode, ', '.join(WEIGHT_MODES)))
        self.mode = mode
        self.box = box
        self.net = net
        if mode == 'constant':
            coeffs = box.clip(coeffs)
            coeffs.flags.writeable = False
        self.coeffs = coeffs

    @classmethod
    def constant(cls, w, box):
        return cls('constant', box, coeffs=np.array(w, dtype=float))

    @classmethod
    def fresh(cls, mode, box, seed):
        """
        Return a randomly initialized weight function.

        A fresh network's small output layer puts it near the middle of the
        box in every state; constant weights copy what that network emits
        at the reference state.
        """
        if mode not in WEIGHT_MODES:
            raise ConfigurationError('Unknown weight mode %r.' % (mode,))
        net = init_net(WEIGHT_SIZES, seed, output='sigmoid',
                       output_scale=WEIGHT_OUTPUT_SCALE)
        wf = cls('network', box, net=net)
        return cls.constant(wf.weight(), box) if mode == 'constant' else wf

    @classmethod
    def network(cls, w, box, seed):
        """Return a weight network emitting roughly ``w`` in every state."""
        return cls('network', box).adopt(w, seed)

    @property
    def params(self):
        return self.net.params if self.mode == 'network' else self.coeffs

    def weights(self, states):
        """Return one weight vector per state."""
        states = np.atleast_2d(states)
        if self.mode == 'constant':
            return np.tile(self.coeffs, (states.shape[0], 1))
        return self.box.lo + self.box.width * forward(
            self.net, normalize_states(states))

    def weight(self, state=REFERENCE_STATE):
        return self.weights(state)[0]

    def vjp(self, states, cotangent):
        """Return ``d/dparams sum_t cotangent_t . weights(s_t)``."""
        cotangent = np.asarray(cotangent, dtype=float)
        if self.mode == 'constant':
            return cotangent.sum(axis=0)
        return grad(self.net, normalize_states(states),
                    cotangent * self.box.width).param_grad

    def ascend(self, direction, lr, box=None):
        """Return the weight function moved ``lr`` along ``direction``."""
        box = self.box if box is None else box
        if self.mode == 'constant':
            return WeightFunction.constant(self.coeffs + lr * direction, box)
        return WeightFunction('network', box,
                              net=self.net.with_params(self.net.params +
                                                       lr * direction))

    def adopt(self, w, seed):
        """
        Return a weight function that starts over near ``w``.

        Constant weights simply become ``w``. A network is reinitialized
        from ``seed`` with a small output layer whose bias makes it emit
        (close to) ``w`` everywhere.
        """
        w = self.box.clip(w)
        if self.mode == 'constant':
            return WeightFunction.constant(w, self.box)
        net = init_net(WEIGHT_SIZES, seed, output='sigmoid',
                       output_scale=WEIGHT_OUTPUT_SCALE)
        frac = np.clip((w - self.box.lo) / self.box.width, ADOPT_MARGIN,
                       1.0 - ADOPT_MARGIN)
        params = net.params.copy()
        params[-len(frac):] = np.log(frac / (1.0 - frac))
        return WeightFunction('network', self.box, net=net.with_params(params))

    def __repr__(self):
        return 'WeightFunction(%r, w0=%s)' % (
            self.mode, np.round(self.weight(), 4).tolist())


WEIGHT_MODES = ('network', 'constant')


Trajectory = namedtuple('Trajectory',
                        'states actions rewards log_probs success')


class Batch(namedtuple('Batch', 'states actions rewards log_probs lengths '
                                'successes')):
    """Trajectories concatenated along time, in episode order"""
    __slots__ = ()

    @classmethod
    def from_trajectories(cls, trajectories):
        return cls(np.concatenate([t.states for t in trajectories]),
                   np.concatenate([t.actions for t in trajectories]),
                   np.concatenate([t.rewards for t in trajectories]),
                   np.concatenate([t.log_probs for t in trajectories]),
                   [len(t.actions) for t in trajectories],
                   [t.success for t in trajectories])


Rollout = namedtuple('Rollout', 'trajectories batch performance')


def rollout(policy, weight_fn, env, n_episodes, rng, buffer_size=BUFFER_SIZE):
    """
    Play ``n_episodes`` episodes side by side with the stochastic policy.

    Episodes are reset in index order, and at every step the still-running
    ones sample their actions in index order, so results depend only on
    ``rng``. Return a :class:`Rollout` whose ``performance`` is the fraction
    of successful episodes. Only as many whole episodes as fit in
    ``buffer_size`` steps are kept for training.

    ``weight_fn`` is accepted so every inner-loop call has the same shape;
    acting never depends on the weights.
    """
    if n_episodes < 1:
        raise ConfigurationError('Need at least one episode, got %r.'
                                 % (n_episodes,))
    starts = [env.reset(rng) for _ in range(n_episodes)]
    x, x_dot, theta, theta_dot = [np.array([s[i] for s in starts])
                                  for i in range(4)]
    t = np.zeros(n_episodes, dtype=int)
    live = np.arange(n_episodes)
    logs = [dict(states=[], actions=[], rewards=[], log_probs=[])
            for _ in range(n_episodes)]
    success = np.zeros(n_episodes, dtype=bool)
    while live.size:
        states = np.column_stack([x, x_dot, theta, theta_dot])
        p = policy.probs(states)
        actions = (rng.random(live.size) >= p[:, cartpole.LEFT]).astype(int)
        chosen = np.log(p[np.arange(live.size), actions])
        nxt, rewards, done, won = env.step_arrays(x, x_dot, theta, theta_dot,
                                                  t, actions)
        for j, ep in enumerate(live):
            log_ = logs[ep]
            log_['states'].append(states[j])
            log_['actions'].append(actions[j])
            log_['rewards'].append(rewards[j])
            log_['log_probs'].append(chosen[j])
        success[live[won]] = True
        keep = ~done
        live = live[keep]
        x, x_dot, theta, theta_dot = (v[keep] for v in nxt)
        t = t[keep] + 1

    trajectories = []
    stored = 0
    for ep in range(n_episodes):
        length = len(logs[ep]['actions'])
        if stored + length > buffer_size:
            log.debug('Buffer full after %s episodes.', ep)
            break
        stored += length
        trajectories.append(Trajectory(np.array(logs[ep]['states']),
                                       np.array(logs[ep]['actions']),
                                       np.array(logs[ep]['rewards']),
                                       np.array(logs[ep]['log_probs']),
                                       bool(success[ep])))
    return Rollout(trajectories, Batch.from_trajectories(trajectories),
                   float(success.sum()) / n_episodes)


def _as_batch(trajectories):
    if isinstance(trajectories, Batch):
        return trajectories
    if isinstance(trajectories, Rollout):
        return trajectories.batch
    return Batch.from_trajectories(trajectories)


def advantages(policy, batch, weight_fn, gamma):
    """Composite reward-to-go of every step minus the policy's baseline."""
    composite = cartpole.composite_reward(weight_fn.weights(batch.states),
                                          batch.rewards)
    returns = reward_to_go(composite, gamma, batch.lengths)
    return returns, returns - policy.baseline


def surrogate(policy, batch, weight_fn, gamma=0.99, params=None):
    """
    The per-step REINFORCE surrogate whose gradient :func:`policy_gradient`
    returns, with advantages frozen at ``policy``'s parameters.
    """
    batch = _as_batch(batch)
    _, adv = advantages(policy, batch, weight_fn, gamma)
    return float((adv * policy.log_probs(batch.states, batch.actions,
                                         params)).mean())


def policy_gradient(policy, batch, weight_fn, gamma=0.99, adv=None):
    """
    Gradient of :func:`surrogate`. Pass ``adv`` when the advantages are
    already at hand.
    """
    batch = _as_batch(batch)
    if adv is None:
        _, adv = advantages(policy, batch, weight_fn, gamma)
    return policy.score_grad(batch.states, batch.actions, adv) / len(adv)


UpdateResult = namedtuple('UpdateResult', 'policy skipped grad_norm')


def reinforce_update(policy, trajectories, weight_fn, gamma=0.99, lr=0.001,
                     l2=0.25, optimizer='adam', baseline_decay=0.9):
    """
    Take one REINFORCE ascent step on the weighted reward.

    Each step's weighted reward-to-go, less the running-average baseline,
    scales its log-probability gradient; the mean over all steps is the
    ascent direction. L2 decay ``l2 * theta`` is applied separately from the
    optimizer's direction. Afterwards the baseline moves toward the batch's
    mean return.

    Return an :class:`UpdateResult`. A non-finite gradient sets ``skipped``
    and leaves the policy as it was.
    """
    batch = _as_batch(trajectories)
    if not batch.lengths:
        raise ConfigurationError('Need at least one trajectory to update on.')
    returns, adv = advantages(policy, batch, weight_fn, gamma)
    g = policy_gradient(policy, batch, weight_fn, gamma, adv)
    if not all_finite(g):
        log.warning('Skipping inner update on a non-finite gradient.')
        return UpdateResult(policy, True, float('nan'))
    if optimizer == 'adam':
        net, state = adam_step(policy.net, -g, policy.optimizer_state, lr, l2)
    elif optimizer == 'sgd':
        net, state = sgd_step(policy.net, -g, lr, l2), policy.optimizer_state
    else:
        raise ConfigurationError('Unknown optimizer %r.' % (optimizer,))
    baseline = (baseline_decay * policy.baseline +
                (1.0 - baseline_decay) * float(returns.mean()))
    return UpdateResult(Policy(net, baseline, state), False,
                        float(np.linalg.norm(g)))


def reset_policy(policy, value_head, rng):
    """
    Return a freshly initialized policy with a zero baseline.

    :arg policy: The policy being replaced; only its architecture matters
    :arg value_head: An auxiliary value head with a ``reset_last_layer(rng)``
        method, or None. The REINFORCE agent here has none; its baseline is
        the value estimate and is zeroed.
    :arg rng: The seed of the new actor is drawn from this
    """
    if value_head is not None:
        value_head.reset_last_layer(rng)
    return Policy.fresh(fresh_seed(rng))


class InnerConfig(object):
    """
    REINFORCE settings

    :arg lr: Adam step size
    :arg l2: Decoupled L2 decay coefficient
    :arg episodes: Episodes per rollout batch
    """
    def __init__(self, gamma=0.99, lr=0.001, l2=0.25, episodes=20,
                 optimizer='adam', baseline_decay=0.9,
                 buffer_size=BUFFER_SIZE):
        if not 0 < gamma <= 1:
            raise ConfigurationError('gamma must lie in (0, 1], got %r.'
                                     % (gamma,))
        if int(episodes) != episodes or episodes < 1:
            raise ConfigurationError('episodes must be a positive integer, '
                                     'got %r.' % (episodes,))
        if optimizer not in ('adam', 'sgd'):
            raise ConfigurationError('Unknown optimizer %r.' % (optimizer,))
        self.gamma = float(gamma)
        self.lr = float(lr)
        self.l2 = float(l2)
        self.episodes = int(episodes)
        self.optimizer = optimizer
        self.baseline_decay = float(baseline_decay)
        self.buffer_size = int(buffer_size)

    def as_dict(self):
        return dict(vars(self))


CARTPOLE_STRATEGIES = ('constant', 'gradient', 'gradient_reset', 'morse',
                       'morse_no_reset', 'morse_random', 'morse_periodic',
                       'morse_no_gradient')

RESET_EVERY = 5


class CartPoleConfig(object):
    """
    Everything one CartPole training run needs besides its strategy and seed

    The inner loop defaults to Adam at 0.01 rather than plain gradient steps
    at 0.001. At 15 updates per epoch the plain steps leave the policy near
    uniform for the whole run, and a run that resets its policy has only
    five epochs to relearn.
    """
    def __init__(self, epochs=40, inner_epochs=15, inner=None,
                 weight_mode='network', weight_box=None, interference=True,
                 t_grad=1, t_explore=5, alpha=0.05, N=20, tau=10.0,
                 neumann=None, lr_net=5e-4, lr_coeff=2.5e-3):
        if int(epochs) != epochs or epochs < 1:
            raise ConfigurationError('epochs must be a positive integer, '
                                     'got %r.' % (epochs,))
        if int(inner_epochs) != inner_epochs or inner_epochs < 1:
            raise ConfigurationError('inner_epochs must be a positive '
                                     'integer, got %r.' % (inner_epochs,))
        if weight_mode not in WEIGHT_MODES:
            raise ConfigurationError('Unknown weight mode %r.'
                                     % (weight_mode,))
        self.epochs = int(epochs)
        self.inner_epochs = int(inner_epochs)
        self.inner = InnerConfig(lr=0.01) if inner is None else inner
        self.weight_mode = weight_mode
        self.weight_box = (
            Box.cube(0.0, 1.0, len(cartpole.REWARD_COMPONENTS))
            if weight_box is None else weight_box)
        self.interference = interference
        self.exploration = ExplorationConfig(N=N, alpha=alpha, tau=tau,
                                             t_grad=t_grad,
                                             t_explore=t_explore,
                                             weight_box=self.weight_box)
        self.neumann = NeumannConfig() if neumann is None else neumann
        self.lr_net = float(lr_net)
        self.lr_coeff = float(lr_coeff)

    def as_dict(self):
        return {'epochs': self.epochs, 'inner_epochs': self.inner_epochs,
                'inner': self.inner.as_dict(), 'weight_mode': self.weight_mode,
                'interference': self.interference,
                'exploration': self.exploration.as_dict(),
                'neumann': {'K': self.neumann.K, 'eta': self.neumann.eta,
                            'divergence_cap': self.neumann.divergence_cap},
                'lr_net': self.lr_net, 'lr_coeff': self.lr_coeff}


class CartPoleComponents(object):
    """
    The pieces :func:`~pymorse.scheduler.run_morse` drives for one CartPole
    run: policy, weight function, novelty sampler and their generators

    Initial weights and nets come from the run's 'init' stream and every
    rollout from its 'rollout' stream; the scheduler passes the 'explore'
    stream into :meth:`gate`, :meth:`reinit` and :meth:`reset_policy`.
    """
    def __init__(self, cfg, strategy, seed, sampler=None):
        self.cfg = cfg
        self.strategy = strategy
        self.seed = seed
        self.env = cartpole.MultiObjectiveCartPole(cfg.interference)
        init = derive_rng(seed, 'cartpole', 'init')
        self.policy = Policy.fresh(fresh_seed(init))
        self.weight_fn = WeightFunction.fresh(cfg.weight_mode, cfg.weight_box,
                                              fresh_seed(init))
        if sampler is None:
            sampler = (RandomSampler() if strategy == 'morse_random' else
                       make_sampler('rnd', cfg.weight_box.dim,
                                    fresh_seed(init)))
        self.sampler = sampler
        self.periodic = strategy == 'morse_periodic'
        self.rollout_rng = derive_rng(seed, 'cartpole', 'rollout')
        self.last_rollout = None

    def train(self):
        """Run the inner epochs of one outer epoch; return the last P."""
        inner = self.cfg.inner
        for _ in range(self.cfg.inner_epochs):
            self.last_rollout = rollout(self.policy, self.weight_fn, self.env,
                                        inner.episodes, self.rollout_rng,
                                        inner.buffer_size)
            self.policy = reinforce_update(
                self.policy, self.last_rollout, self.weight_fn, inner.gamma,
                inner.lr, inner.l2, inner.optimizer,
                inner.baseline_decay).policy
        return self.last_rollout.performance

    def outer_step(self):
        """Take one bilevel outer step; return whether it was skipped."""
        inner = self.cfg.inner
        result = bilevel_outer_grad(self.policy, self.weight_fn,
                                    self.last_rollout.batch, self.cfg.neumann,
                                    inner.gamma, inner.l2)
        if result.skipped:
            return True
        step = outer_grad_step(self.weight_fn, result.grad, self.cfg.lr_net,
                               self.cfg.lr_coeff)
        self.weight_fn = step.weight_fn
        return step.skipped

    def gate(self, delta_R, P, rng):
        """Return a weight to jump to, or None."""
        cfg = self.cfg.exploration
        self.sampler.visit(self.weights())
        if self.periodic:
            self.sampler.prepare()
            return cfg.weight_box.clip(self.sampler.propose(cfg, rng))
        return explore_gate(cfg, delta_R, P, self.sampler, rng)

    def adopt(self, w, rng):
        self.weight_fn = self.weight_fn.adopt(w, fresh_seed(rng))

    def reinit(self, rng):
        """Jump to a uniformly random weight, as blind resets do."""
        self.adopt(self.cfg.weight_box.sample(rng), rng)

    def reset_policy(self, rng):
        self.policy = reset_policy(self.policy, None, rng)

    def weights(self):
        return self.weight_fn.weight()


def schedule_for(strategy, cfg, seed):
    """Return the :class:`~pymorse.scheduler.Schedule` a strategy runs on."""
    if strategy not in CARTPOLE_STRATEGIES:
        raise ConfigurationError('Unknown CartPole strategy %r; expected one '
                                 'of %s.' % (strategy,
                                             ', '.join(CARTPOLE_STRATEGIES)))
    exploration = cfg.exploration
    return Schedule(cfg.epochs, exploration.t_grad, exploration.t_explore,
                    seed,
                    gradient=strategy not in ('constant', 'morse_no_gradient'),
                    explore=strategy.startswith('morse'),
                    reinit_every=RESET_EVERY if strategy == 'gradient_reset'
                    else 0,
                    reset_on_explore=strategy != 'morse_no_reset')


def train_cartpole(strategy, budget_epochs=None, cfg=None, seed=0,
                   components=None):
    """
    Train on multi-objective CartPole with one strategy and return the
    :class:`~pymorse.harness.RunRecord`.

    Every strategy starts from a freshly initialized weight function, which
    emits about the middle of the weight box. ``constant`` never changes
    the weights; ``gradient`` takes a bilevel
    outer step every epoch; ``gradient_reset`` also jumps to uniformly
    random weights and resets the policy after every fifth outer step;
    ``morse`` and its ablations consult the exploration gate every
    ``t_explore`` epochs instead.

    :arg budget_epochs: Overrides ``cfg.epochs``
    :arg components: Prebuilt :class:`CartPoleComponents`, for tests
    """
    cfg = CartPoleConfig() if cfg is None else cfg
    if budget_epochs is not None:
        cfg.epochs = int(budget_epochs)
    schedule = schedule_for(strategy, cfg, seed)
    if components is None:
        components = CartPoleComponents(cfg, strategy, seed)
    record = run_morse(schedule, components,
                       derive_rng(seed, 'cartpole', 'explore'))
    record.config = cfg.as_dict()
    return record
