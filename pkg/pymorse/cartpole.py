"""
CartPole with four reward components

Classic cart-pole physics on a 100-step horizon. Each step pays a
:class:`RewardVector` of

* ``task``: 100 on the step that completes step 100 alive, else 0
* ``survival``: 1 on every step
* ``position``: 1 when the cart ends the step right of x = 0.5
* ``interference``: -1 when the agent pushes the way a PD stabilizer would

so surviving and obeying the PD controller pull in opposite directions.
"""
from __future__ import absolute_import

from collections import namedtuple
import math

import numpy as np

from pymorse.exceptions import EpisodeFinishedError


GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE = 10.0
DT = 0.02
THETA_LIMIT = 12 * 2 * math.pi / 360
X_LIMIT = 2.4
HORIZON = 100
RESET_SPREAD = 0.05

TASK_REWARD = 100.0
POSITION_MARK = 0.5
PD_KP = 10.0
PD_KD = 2.0

LEFT = 0
RIGHT = 1

REWARD_COMPONENTS = ('task', 'survival', 'position', 'interference')


CartState = namedtuple('CartState', 'x x_dot theta theta_dot t')

RewardVector = namedtuple('RewardVector', REWARD_COMPONENTS)

Transition = namedtuple('Transition', 'state reward done success')


def reset(rng):
    """Return a fresh state with all four variables uniform in +-0.05."""
    x, x_dot, theta, theta_dot = rng.uniform(-RESET_SPREAD, RESET_SPREAD, 4)
    return CartState(float(x), float(x_dot), float(theta), float(theta_dot), 0)


def fallen(x, theta):
    """Whether the termination predicate fires (works on arrays too)."""
    return (np.abs(theta) > THETA_LIMIT) | (np.abs(x) > X_LIMIT)


def is_finished(s):
    return bool(fallen(s.x, s.theta)) or s.t >= HORIZON


def pd_action(s):
    """
    Return what a PD stabilizer would push: RIGHT iff
    ``10 * theta + 2 * theta_dot > 0``, else LEFT.
    """
    return int(pd_actions(s.theta, s.theta_dot))


def pd_actions(theta, theta_dot):
    return (PD_KP * np.asarray(theta) + PD_KD * np.asarray(theta_dot) > 0
            ).astype(int)


def dynamics(x, x_dot, theta, theta_dot, actions):
    """
    Advance one Euler step of the classic equations of motion.

    Every argument may be a scalar or an array of equal length; ``actions``
    holds LEFT (0) or RIGHT (1).
    """
    force = np.where(np.asarray(actions) == RIGHT, FORCE, -FORCE)
    cos = np.cos(theta)
    sin = np.sin(theta)
    temp = ((force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) /
            TOTAL_MASS)
    theta_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS))
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS
    return (x + DT * x_dot, x_dot + DT * x_acc,
            theta + DT * theta_dot, theta_dot + DT * theta_acc)


def step_arrays(x, x_dot, theta, theta_dot, t, actions, interference=True):
    """
    Step a batch of live episodes at once.

    Return ``(next_vars, rewards, done, success)`` where ``next_vars`` is the
    four state arrays, ``rewards`` is an ``(n, 4)`` array in
    :data:`REWARD_COMPONENTS` order and ``t`` is the pre-step step index.
    """
    actions = np.asarray(actions)
    nxt = dynamics(x, x_dot, theta, theta_dot, actions)
    t_next = np.asarray(t) + 1
    dead = fallen(nxt[0], nxt[2])
    success = ~dead & (t_next >= HORIZON)
    rewards = np.zeros((actions.shape[0], 4))
    rewards[:, 0] = np.where(success, TASK_REWARD, 0.0)
    rewards[:, 1] = 1.0
    rewards[:, 2] = (nxt[0] > POSITION_MARK).astype(float)
    if interference:
        rewards[:, 3] = -(actions == pd_actions(theta, theta_dot)
                          ).astype(float)
    return nxt, rewards, dead | (t_next >= HORIZON), success


def step(s, action, interference=True):
    """
    Apply ``action`` in state ``s`` and return a :class:`Transition`.

    Raise :class:`~pymorse.exceptions.EpisodeFinishedError` if ``s`` is
    already terminal.
    """
    if is_finished(s):
        raise EpisodeFinishedError(s)
    nxt, rewards, done, success = step_arrays(
        np.array([s.x]), np.array([s.x_dot]), np.array([s.theta]),
        np.array([s.theta_dot]), np.array([s.t]), np.array([int(action)]),
        interference=interference)
    state = CartState(float(nxt[0][0]), float(nxt[1][0]), float(nxt[2][0]),
                      float(nxt[3][0]), s.t + 1)
    return Transition(state, RewardVector(*rewards[0].tolist()),
                      bool(done[0]), bool(success[0]))


def composite_reward(w, r):
    """
    Return ``w . r`` in (task, survival, position, interference) order.

    Given ``(n, 4)`` arrays of per-step weights and rewards, return the
    ``n`` per-step composite rewards instead.
    """
    total = (np.asarray(w, dtype=float) *
             np.asarray(r, dtype=float)).sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


class MultiObjectiveCartPole(object):
    """
    The environment as an object, for callers that want one

    :arg interference: Whether the PD-interference penalty is paid. Turning
        it off leaves plain CartPole plus the shaping components.
    """
    n_actions = 2
    observation_size = 4
    reward_size = len(REWARD_COMPONENTS)

    def __init__(self, interference=True):
        self.interference = interference

    def reset(self, rng):
        return reset(rng)

    def step(self, s, action):
        return step(s, action, interference=self.interference)

    def step_arrays(self, x, x_dot, theta, theta_dot, t, actions):
        return step_arrays(x, x_dot, theta, theta_dot, t, actions,
                           interference=self.interference)

    def __repr__(self):
        return 'MultiObjectiveCartPole(interference=%r)' % self.interference
