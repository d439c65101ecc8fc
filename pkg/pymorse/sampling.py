"""
Where to jump when the outer loop explores

Every sampler offers the same four calls so the exploration gate and the
benchmark can drive any of them:

``prepare()``
    Called once each time the gate opens, before any proposal.
``propose(cfg, rng)``
    Return one weight vector inside ``cfg.weight_box``.
``visit(w)``
    Note a weight the outer loop passed through on its own.
``observe(w, value)``
    Report how well a proposed weight did once that is known.

:class:`NoveltyScorer` is the novelty-seeking sampler; :class:`RandomSampler`,
:class:`CemSampler` and :class:`CmaSampler` are the baselines it's measured
against.
"""
from __future__ import absolute_import

from collections import namedtuple
import logging
from math import log as ln

import numpy as np

from pymorse.exceptions import ConfigurationError, NumericError, ShapeError
from pymorse.netcore import forward, grad, init_net, sgd_step
from pymorse.utils import Box, derive_seed


log = logging.getLogger(__name__)

RND_HIDDEN = (32, 32)
RND_OUTPUT = 8

CEM_BATCH = 5
CEM_ELITES = 2
CEM_STD_FLOOR = 1e-3
CMA_EIGEN_FLOOR = 1e-8


class Sampler(object):
    """Base sampler: every hook but :meth:`propose` does nothing."""

    #: Name used in strategy tags like ``morse_rnd``
    name = None

    def prepare(self):
        pass

    def propose(self, cfg, rng):
        raise NotImplementedError

    def visit(self, w):
        pass

    def observe(self, w, value):
        pass


class NoveltyScorer(Sampler):
    """
    Random network distillation over weight space

    A frozen random ``target`` net and a trainable ``predictor`` net share an
    architecture. Fitting the predictor to the target on the visited weights
    makes their disagreement small there and (typically) large elsewhere, so
    the disagreement serves as a novelty score.

    A scorer mutates in place as it is fit and must not be fit and queried
    from two threads at once.
    """
    name = 'rnd'

    def __init__(self, dim, seed, lr=1e-2, fit_iters_min=1,
                 fit_iters_max=1000, overfit_tol=1e-3):
        """
        :arg dim: Width of the weight vectors being scored
        :arg seed: Seed from which the two nets' seeds are derived
        :arg lr: Predictor learning rate
        :arg fit_iters_min: Fewest gradient steps per :meth:`fit`
        :arg fit_iters_max: Most gradient steps per :meth:`fit`
        :arg overfit_tol: Fitting stops once the mean squared error drops
            below the square of this
        """
        if not 1 <= fit_iters_min <= fit_iters_max:
            raise ConfigurationError(
                'Need 1 <= fit_iters_min <= fit_iters_max, got %s and %s.'
                % (fit_iters_min, fit_iters_max))
        sizes = (dim,) + RND_HIDDEN + (RND_OUTPUT,)
        self.dim = dim
        self.target = init_net(sizes, derive_seed(seed, 'rnd', 'target'))
        self.predictor = init_net(sizes, derive_seed(seed, 'rnd', 'predictor'))
        self.lr = lr
        self.fit_iters_min = fit_iters_min
        self.fit_iters_max = fit_iters_max
        self.overfit_tol = overfit_tol
        self.history = []
        self.loss_trace = []

    def _check(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[-1:] != (self.dim,):
            raise ShapeError(self.dim, w.shape[-1] if w.ndim else w.shape)
        return w

    def add(self, w):
        """Append a weight vector to the history of visited weights."""
        self.history.append(self._check(w).copy())

    visit = add

    def novelty(self, w):
        """Return ``||predictor(w) - target(w)||``."""
        w = self._check(w)
        return float(np.linalg.norm(forward(self.predictor, w) -
                                    forward(self.target, w)))

    def novelty_many(self, ws):
        """Return the novelty of every row of ``ws``."""
        ws = self._check(np.atleast_2d(ws))
        diff = forward(self.predictor, ws) - forward(self.target, ws)
        return np.sqrt((diff * diff).sum(axis=1))

    def prepare(self):
        self.fit()

    def fit(self):
        """
        Train the predictor on the whole history by full-batch gradient
        descent and return the scorer.

        The history is sorted first, so the outcome doesn't depend on the
        order points were visited in. The loss of every iteration is kept in
        :attr:`loss_trace`.
        """
        self.loss_trace = []
        if not self.history:
            return self
        points = np.array(sorted(tuple(w) for w in self.history))
        goal = forward(self.target, points)
        n = points.shape[0]
        for i in range(self.fit_iters_max):
            diff = forward(self.predictor, points) - goal
            loss = float((diff * diff).sum() / n)
            self.loss_trace.append(loss)
            if i + 1 >= self.fit_iters_min and loss < self.overfit_tol ** 2:
                break
            report = grad(self.predictor, points, 2.0 * diff / n)
            self.predictor = sgd_step(self.predictor, report.param_grad,
                                      self.lr)
        log.debug('Fit novelty predictor on %s points in %s iterations, '
                  'loss %.3g.', n, len(self.loss_trace), self.loss_trace[-1])
        return self

    def propose(self, cfg, rng):
        """
        Draw ``cfg.N`` uniform candidates from ``cfg.weight_box``, pick one by
        softmax over :func:`relative_scores` of their novelty at temperature
        ``cfg.tau``, remember it and return it.
        """
        candidates = cfg.weight_box.sample(rng, cfg.N)
        scores = relative_scores(self.novelty_many(candidates))
        chosen = candidates[softmax_select(scores, cfg.tau, rng)]
        self.add(chosen)
        return chosen


def novelty(scorer, w):
    return scorer.novelty(w)


def fit(scorer):
    return scorer.fit()


def relative_scores(scores):
    """
    Divide scores by their maximum so the best is 1.

    Novelty is in the units of the nets' outputs, which shrink as the
    predictor fits; scaling keeps the temperature meaning the same thing
    from one proposal to the next. All-zero scores are returned as is.
    """
    scores = np.asarray(scores, dtype=float)
    top = scores.max() if scores.size else 0.0
    return scores / top if top > 0 else scores


def softmax_probabilities(scores, tau):
    """Return ``exp(tau * s_i) / sum_j exp(tau * s_j)``, computed stably."""
    scores = np.asarray(scores, dtype=float)
    if not scores.size:
        raise ConfigurationError('Need at least one score to choose from.')
    if not np.all(np.isfinite(scores)):
        raise NumericError('Scores must be finite, got %r.'
                           % (scores.tolist(),))
    if not tau > 0:
        raise ConfigurationError('Temperature must be positive, got %r.'
                                 % (tau,))
    z = tau * scores
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_select(scores, tau, rng):
    """
    Draw an index with probability proportional to ``exp(tau * score)``.

    :arg scores: A non-empty vector of finite scores
    :arg tau: Temperature multiplier, greater than 0
    :arg rng: A numpy ``Generator``; exactly one uniform is drawn from it
    """
    cumulative = np.cumsum(softmax_probabilities(scores, tau))
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1],
                                side='right'))
    return min(index, len(cumulative) - 1)


def _as_box(space):
    return space if isinstance(space, Box) else Box(*space)


def propose_random(space, rng):
    """
    Return a uniform sample from ``space``.

    :arg space: A :class:`~pymorse.utils.Box` or a ``(lo, hi)`` pair
    """
    return _as_box(space).sample(rng)


class RandomSampler(Sampler):
    """
    Uniform proposals that learn nothing

    Draws the same ``cfg.N`` candidates and the same one uniform as
    :class:`NoveltyScorer` does, then takes a candidate blindly, so on a
    shared generator the two differ only in how they choose.
    """
    name = 'random'

    def propose(self, cfg, rng):
        candidates = cfg.weight_box.sample(rng, cfg.N)
        index = int(rng.random() * cfg.N)
        return candidates[min(index, cfg.N - 1)]


def _rank(scored_batch, batch_size):
    if len(scored_batch) != batch_size:
        raise ConfigurationError('Need a batch of exactly %s scored '
                                 'candidates, got %s.'
                                 % (batch_size, len(scored_batch)))
    ws = np.array([w for w, _ in scored_batch], dtype=float)
    values = [float(v) for _, v in scored_batch]
    if not (np.all(np.isfinite(ws)) and np.all(np.isfinite(values))):
        raise NumericError('Scored batch contains non-finite entries.')
    # Best first; equal values keep their batch order.
    order = sorted(range(batch_size), key=lambda i: (-values[i], i))
    return ws[order]


class CemState(namedtuple('CemState', 'mean std')):
    """Mean and elementwise spread of a cross-entropy search distribution"""
    __slots__ = ()

    @classmethod
    def initial(cls, box, mean=None):
        """Start at ``mean`` (the box center by default), std width / 4."""
        if mean is None:
            mean = box.lo + box.width / 2.0
        return cls(np.array(mean, dtype=float), box.width / 4.0)

    def ask(self, rng, n=CEM_BATCH):
        return self.mean + self.std * rng.standard_normal((n, len(self.mean)))


def cem_step(state, scored_batch):
    """
    Refit the distribution to the two best of five scored candidates.

    :arg state: The current :class:`CemState`
    :arg scored_batch: Five ``(w, value)`` pairs; higher values are better
        and ties go to the earlier candidate
    """
    elites = _rank(scored_batch, CEM_BATCH)[:CEM_ELITES]
    return CemState(elites.mean(axis=0),
                    np.maximum(elites.std(axis=0), CEM_STD_FLOOR))


class CmaParameters(object):
    """
    Static strategy parameters of (mu, lambda) CMA-ES with the default
    positive recombination weights
    """
    def __init__(self, n, lam=CEM_BATCH):
        self.dimension = n
        self.lam = lam
        self.mu = lam // 2
        raw = [ln(lam / 2.0 + 0.5) - ln(i + 1) for i in range(self.mu)]
        self.weights = np.array(raw) / sum(raw)
        self.mueff = 1.0 / (self.weights ** 2).sum()

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) /
                       ((n + 2) ** 2 + self.mueff))
        self.damps = 2 * self.mueff / lam + 0.3 + self.cs


class CmaState(namedtuple('CmaState', 'mean step_size covariance pc ps '
                                      'generation')):
    """
    Search distribution of CMA-ES: mean, global step size, covariance, the
    two evolution paths and how many generations have been told
    """
    __slots__ = ()

    @classmethod
    def initial(cls, mean, step_size):
        mean = np.asarray(mean, dtype=float)
        n = len(mean)
        return cls(mean, float(step_size), np.eye(n), np.zeros(n), np.zeros(n),
                   0)

    def eigensystem(self):
        values, basis = np.linalg.eigh(self.covariance)
        return np.maximum(values, CMA_EIGEN_FLOOR), basis

    def ask(self, rng, n=CEM_BATCH):
        values, basis = self.eigensystem()
        z = rng.standard_normal((n, len(self.mean)))
        return self.mean + self.step_size * (z * np.sqrt(values)).dot(basis.T)


def cma_step(state, scored_batch):
    """
    Tell CMA-ES five scored candidates and return the updated state.

    Mean, step size (cumulative step-size adaptation) and covariance
    (rank-one plus rank-mu) are updated with the standard defaults for
    ``mu = 2, lambda = 5``. Covariance eigenvalues are floored at 1e-8.
    """
    arx = _rank(scored_batch, CEM_BATCH)
    n = len(state.mean)
    par = CmaParameters(n)
    xold = state.mean
    sigma = state.step_size
    generation = state.generation + 1

    xmean = par.weights.dot(arx[:par.mu])
    y = xmean - xold
    values, basis = state.eigensystem()
    z = basis.dot(basis.T.dot(y) / np.sqrt(values))
    ps = ((1 - par.cs) * state.ps +
          np.sqrt(par.cs * (2 - par.cs) * par.mueff) / sigma * z)
    hsig = float(ps.dot(ps) / n /
                 (1 - (1 - par.cs) ** (2 * generation)) < 2 + 4.0 / (n + 1))
    pc = ((1 - par.cc) * state.pc +
          np.sqrt(par.cc * (2 - par.cc) * par.mueff) / sigma * hsig * y)

    c1a = par.c1 * (1 - (1 - hsig ** 2) * par.cc * (2 - par.cc))
    cov = state.covariance * (1 - c1a - par.cmu * par.weights.sum())
    cov = cov + par.c1 * np.outer(pc, pc)
    for wk, x in zip(par.weights, arx[:par.mu]):
        dx = x - xold
        cov = cov + wk * par.cmu / sigma ** 2 * np.outer(dx, dx)

    sigma *= np.exp(min(1.0, par.cs / par.damps * (ps.dot(ps) / n - 1) / 2))

    if not (np.all(np.isfinite(cov)) and np.isfinite(sigma)):
        raise NumericError('CMA-ES update produced non-finite state.')
    cov = (cov + cov.T) / 2.0
    values, basis = np.linalg.eigh(cov)
    if values.min() < -1e-6 * max(1.0, abs(values.max())):
        raise NumericError('CMA-ES covariance lost positive '
                           'semi-definiteness: %r' % (values.tolist(),))
    cov = (basis * np.maximum(values, CMA_EIGEN_FLOOR)).dot(basis.T)
    cov = (cov + cov.T) / 2.0
    return CmaState(xmean, float(sigma), cov, pc, ps, generation)


class _PopulationSampler(Sampler):
    """
    Adapter that feeds a batch optimizer one candidate per proposal

    Candidates are asked in batches of five and handed out one at a time.
    Once five proposals have been observed, the batch is told to the
    optimizer. Proposals are clipped into the weight box. The search
    starts around the last visited weight, or the box center if there was
    none.
    """
    def __init__(self):
        self.state = None
        self.anchor = None
        self._queue = []
        self._scored = []

    def visit(self, w):
        self.anchor = np.array(w, dtype=float)

    def _start(self, box):
        if self.anchor is None:
            return box.lo + box.width / 2.0
        return box.clip(self.anchor)

    def _initial(self, box):
        raise NotImplementedError

    def _tell(self, scored):
        raise NotImplementedError

    def propose(self, cfg, rng):
        if self.state is None:
            self.state = self._initial(cfg.weight_box)
        if not self._queue:
            self._queue = list(cfg.weight_box.clip(self.state.ask(rng)))
        return self._queue.pop(0)

    def observe(self, w, value):
        self._scored.append((np.array(w, dtype=float), float(value)))
        if len(self._scored) == CEM_BATCH:
            self.state = self._tell(self._scored)
            self._scored = []
            self._queue = []


class CemSampler(_PopulationSampler):
    """Cross-entropy search with five candidates and two elites per round"""
    name = 'cem'

    def _initial(self, box):
        return CemState.initial(box, self._start(box))

    def _tell(self, scored):
        return cem_step(self.state, scored)


class CmaSampler(_PopulationSampler):
    """CMA-ES with five candidates per generation"""
    name = 'cma'

    def _initial(self, box):
        return CmaState.initial(self._start(box),
                                float(box.width.mean()) / 4.0)

    def _tell(self, scored):
        return cma_step(self.state, scored)


SAMPLERS = ('rnd', 'random', 'cem', 'cma')


def make_sampler(name, dim, seed):
    """
    Return a fresh sampler by name.

    :arg name: 'rnd', 'random', 'cem' or 'cma'
    :arg dim: Weight dimension
    :arg seed: Seed for the novelty nets; the baselines take all their
        randomness from the ``rng`` passed to :meth:`~Sampler.propose`
    """
    if name == 'rnd':
        return NoveltyScorer(dim, seed)
    if name == 'random':
        return RandomSampler()
    if name == 'cem':
        return CemSampler()
    if name == 'cma':
        return CmaSampler()
    raise ConfigurationError('Unknown sampler %r; expected one of %s.'
                             % (name, ', '.join(SAMPLERS)))
