"""
One timeline for inner training, outer steps, exploration and resets
"""
from __future__ import absolute_import

import logging
import time

from pymorse.exceptions import ConfigurationError, ScheduleError
from pymorse.harness import EventRow, RunRecord, SeriesRow


log = logging.getLogger(__name__)


class Schedule(object):
    """
    When each part of a run happens

    Epochs count from 1. An outer gradient slot falls on every epoch that is
    a multiple of ``t_grad`` and an exploration check on every multiple of
    ``t_explore``, which must itself be a multiple of ``t_grad``.

    :arg n_epoch: Total epochs
    :arg rng_seed: The run's seed, recorded with its results
    :arg gradient: Whether outer gradient steps are taken at all
    :arg explore: Whether the exploration gate is consulted
    :arg reinit_every: After every this-many gradient slots, jump to random
        weights and reset the policy; 0 never does
    :arg reset_on_explore: Whether a fired gate also resets the policy
    """
    def __init__(self, n_epoch, t_grad=1, t_explore=10, rng_seed=0,
                 gradient=True, explore=True, reinit_every=0,
                 reset_on_explore=True):
        if n_epoch < 1:
            raise ConfigurationError('n_epoch must be positive, got %r.'
                                     % (n_epoch,))
        if t_grad < 1 or t_explore < 1 or t_explore % t_grad:
            raise ConfigurationError(
                't_explore (%s) must be a positive multiple of t_grad (%s).'
                % (t_explore, t_grad))
        self.n_epoch = int(n_epoch)
        self.t_grad = int(t_grad)
        self.t_explore = int(t_explore)
        self.rng_seed = rng_seed
        self.gradient = gradient
        self.explore = explore
        self.reinit_every = int(reinit_every)
        self.reset_on_explore = reset_on_explore


def run_morse(schedule, components, rng):
    """
    Drive ``components`` through ``schedule`` and return the
    :class:`~pymorse.harness.RunRecord`.

    Each epoch trains the inner loop (``train()`` returns the task
    performance P of its last rollout). On a gradient slot the exploration
    gate is checked first, if due; a fired gate means ``adopt`` then
    ``reset_policy``, and that epoch's gradient step is skipped since the
    new policy hasn't been trained on the new weights. Otherwise
    ``outer_step`` runs. With ``reinit_every`` set, every so many gradient
    slots end with ``reinit`` and ``reset_policy``.

    The improvement the gate sees is P now minus P at the previous check
    (the first epoch's P before any check).

    :arg components: Provides ``train``, ``outer_step``, ``gate``, ``adopt``,
        ``reinit``, ``reset_policy`` and ``weights``, plus ``strategy`` and
        ``seed`` attributes
    :arg rng: Generator for everything random the schedule triggers: gate
        draws, sampled weights and fresh policy seeds

    Any exception a component raises comes out as a
    :class:`~pymorse.exceptions.ScheduleError` carrying the epoch.
    """
    started = time.time()
    events = []
    series = []
    slots = 0
    last_check_P = None
    for epoch in range(1, schedule.n_epoch + 1):
        try:
            P = components.train()
            if last_check_P is None:
                last_check_P = P
            before = tuple(components.weights())
            events.append(EventRow(epoch, 'rollout', P, before))
            events.append(EventRow(epoch, 'inner', P, before))
            tag = 'inner'
            if epoch % schedule.t_grad == 0:
                slots += 1
                fired = False
                if schedule.explore and epoch % schedule.t_explore == 0:
                    w = components.gate(P - last_check_P, P, rng)
                    last_check_P = P
                    if w is not None:
                        fired = True
                        components.adopt(w, rng)
                        events.append(EventRow(epoch, 'explore', P,
                                               tuple(components.weights())))
                        tag = 'explore'
                        if schedule.reset_on_explore:
                            components.reset_policy(rng)
                            events.append(EventRow(
                                epoch, 'reset', P,
                                tuple(components.weights())))
                if schedule.gradient and not fired:
                    skipped = components.outer_step()
                    tag = 'outer_skipped' if skipped else 'outer'
                    events.append(EventRow(epoch, tag, P,
                                           tuple(components.weights())))
                if (schedule.reinit_every and
                        slots % schedule.reinit_every == 0):
                    components.reinit(rng)
                    events.append(EventRow(epoch, 'reinit', P,
                                           tuple(components.weights())))
                    components.reset_policy(rng)
                    events.append(EventRow(epoch, 'reset', P,
                                           tuple(components.weights())))
                    tag = 'reinit'
        except ScheduleError:
            raise
        except Exception as exc:
            raise ScheduleError(epoch, exc)
        series.append(SeriesRow(epoch, tuple(components.weights()), P, tag))
        log.debug('Epoch %s: P=%.3f, %s.', epoch, P, tag)

    record = RunRecord('cartpole', components.strategy, components.seed,
                       series, events=events,
                       trajectories=getattr(components, 'last_rollout', None),
                       wall_ms=int(round((time.time() - started) * 1000)),
                       extra={'gate_before_gradient': 'yes',
                              'gradient_slots': slots})
    log.info('%s: final success %.3f, best %.3f.', record.run_id,
             record.final_score, record.best_score)
    return record
