"""
Seeded synthetic objective landscapes on [-1, 1]^2

Three families stand in for the map from a 2-D reward weight to task
performance: smooth multimodal polynomials, fixed random neural nets, and
flat fields with a few sharp spikes. Every landscape is normalized into
[0, 1] with constants estimated on a 101 x 101 grid.
"""
from __future__ import absolute_import

from collections import namedtuple
import logging

import numpy as np

from pymorse.exceptions import ConfigurationError, DomainError, ShapeError
from pymorse.netcore import forward, init_net
from pymorse.utils import Box, derive_rng, derive_seed


log = logging.getLogger(__name__)

SMOOTH_POLYNOMIAL = 'smooth'
FIXED_NN = 'fixednn'
RANDOM_SPIKY = 'spiky'
FAMILIES = (SMOOTH_POLYNOMIAL, FIXED_NN, RANDOM_SPIKY)
FAMILY_NAMES = {SMOOTH_POLYNOMIAL: 'SmoothPolynomial',
                FIXED_NN: 'FixedNN',
                RANDOM_SPIKY: 'RandomSpiky'}

DOMAIN = Box.cube(-1.0, 1.0, 2)
NORMALIZATION_GRID = 101
POLYNOMIAL_DEGREE = 6
FIXED_NN_SIZES = (2, 16, 16, 1)
REDRAW_OFFSET = 10 ** 6
MAX_REDRAWS = 100
FD_STEP = 1e-3
SPIKE_WIDTHS = (0.06, 0.12)

# Every monomial x1^i x2^j with i + j <= 6, lowest degree first.
POLYNOMIAL_EXPONENTS = np.array(
    [(i, total - i) for total in range(POLYNOMIAL_DEGREE + 1)
     for i in range(total, -1, -1)], dtype=float)


FiniteDiffGradient = namedtuple('FiniteDiffGradient', 'grad one_sided')


def grid_points(n=NORMALIZATION_GRID):
    """Return the ``n * n`` uniform grid over the domain, x1-major."""
    ticks = np.linspace(-1.0, 1.0, n)
    x1, x2 = np.meshgrid(ticks, ticks, indexing='ij')
    return np.column_stack([x1.ravel(), x2.ravel()])


def count_local_maxima(values):
    """
    Count grid cells strictly greater than all of their (up to 8) neighbours.

    :arg values: A 2-D array of field values
    """
    values = np.asarray(values, dtype=float)
    padded = np.pad(values, 1, mode='constant', constant_values=-np.inf)
    rows, cols = values.shape
    is_max = np.ones_like(values, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            neighbour = padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
            is_max &= values > neighbour
    return int(is_max.sum())


class Landscape(object):
    """
    One normalized landscape of a given family and seed

    Immutable after construction and safe to evaluate from many threads.
    Build these with :func:`make_landscape`.
    """
    def __init__(self, family, seed, params, effective_seed=None):
        """
        :arg family: One of :data:`FAMILIES`
        :arg seed: The seed the caller asked for
        :arg params: Family-specific coefficients
        :arg effective_seed: The seed the coefficients were actually drawn
            from, after any multimodality redraws
        """
        self.family = family
        self.seed = seed
        self.effective_seed = (seed if effective_seed is None else
                               effective_seed)
        self.params = params
        raw = self.raw(grid_points())
        self.norm_lo = float(raw.min())
        self.norm_hi = float(raw.max())
        if not self.norm_hi > self.norm_lo:
            self.norm_hi = self.norm_lo + 1.0

    @property
    def name(self):
        return '%s-%s' % (self.family, self.seed)

    def raw(self, points):
        """Evaluate the unnormalized field at an ``(n, 2)`` array of points."""
        points = np.asarray(points, dtype=float)
        if self.family == SMOOTH_POLYNOMIAL:
            monomials = np.prod(
                points[:, np.newaxis, :] ** POLYNOMIAL_EXPONENTS[np.newaxis],
                axis=2)
            return monomials.dot(self.params['coefficients'])
        if self.family == FIXED_NN:
            return forward(self.params['net'], points)[:, 0]
        offsets = points[:, np.newaxis, :] - self.params['centers'][np.newaxis]
        sq_dist = (offsets * offsets).sum(axis=2)
        widths = self.params['widths']
        return (self.params['heights'] *
                np.exp(-sq_dist / (2.0 * widths * widths))).sum(axis=1)

    def normalize(self, raw):
        return np.clip((raw - self.norm_lo) / (self.norm_hi - self.norm_lo),
                       0.0, 1.0)

    def eval_many(self, points):
        """Evaluate an ``(n, 2)`` array of domain points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ShapeError(2, points.shape)
        outside = ~(np.all(points >= DOMAIN.lo, axis=1) &
                    np.all(points <= DOMAIN.hi, axis=1))
        if outside.any():
            raise DomainError(tuple(points[np.argmax(outside)]))
        return self.normalize(self.raw(points))

    def eval(self, x):
        """Return the normalized value at a single point ``x``."""
        return evaluate(self, x)

    def __repr__(self):
        return 'Landscape(%r, %r)' % (FAMILY_NAMES[self.family], self.seed)


class CallableField(object):
    """
    An arbitrary scalar field on the domain with the landscape interface

    Used to drive the bench and the finite-difference code with fields whose
    answers are known in closed form (linear ramps, bowls, constants).
    """
    def __init__(self, func, name='field'):
        self.func = func
        self.family = name
        self.seed = 0
        self.name = name

    def eval(self, x):
        x = _check_point(x)
        return float(self.func(x))


def _check_point(x):
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ShapeError(2, x.shape)
    if not DOMAIN.contains(x):
        raise DomainError(tuple(x))
    return x


def _polynomial_params(rng):
    return {'coefficients': rng.uniform(-1.0, 1.0,
                                        size=len(POLYNOMIAL_EXPONENTS))}


def _fixed_nn_params(seed):
    return {'net': init_net(FIXED_NN_SIZES,
                            derive_seed(seed, 'landscape', FIXED_NN))}


def _spiky_params(rng):
    k = int(rng.integers(3, 7))
    return {'centers': rng.uniform(-1.0, 1.0, size=(k, 2)),
            'heights': rng.uniform(0.5, 1.0, size=k),
            'widths': rng.uniform(SPIKE_WIDTHS[0], SPIKE_WIDTHS[1], size=k)}


def make_landscape(family, seed):
    """
    Build the landscape of ``family`` determined by ``seed``.

    SmoothPolynomial coefficient sets with fewer than two strict local maxima
    on the normalization grid are redrawn from ``seed + 10**6`` (repeatedly,
    if need be) so every polynomial is multimodal and the suite stays
    reproducible.

    :arg family: 'smooth', 'fixednn' or 'spiky'
    :arg seed: A non-negative integer
    """
    if family not in FAMILIES:
        raise ConfigurationError('Unknown landscape family %r; expected one '
                                 'of %s.' % (family, ', '.join(FAMILIES)))
    if family == FIXED_NN:
        return Landscape(family, seed, _fixed_nn_params(seed))
    if family == RANDOM_SPIKY:
        return Landscape(family, seed,
                         _spiky_params(derive_rng(seed, 'landscape', family)))

    effective = seed
    for _ in range(MAX_REDRAWS):
        landscape = Landscape(
            family, seed,
            _polynomial_params(derive_rng(effective, 'landscape', family)),
            effective_seed=effective)
        values = landscape.raw(grid_points()).reshape(NORMALIZATION_GRID,
                                                       NORMALIZATION_GRID)
        if count_local_maxima(values) >= 2:
            return landscape
        log.warning('SmoothPolynomial seed %s has a single maximum; '
                    'redrawing from %s.', effective, effective + REDRAW_OFFSET)
        effective += REDRAW_OFFSET
    raise ConfigurationError('No multimodal polynomial found for seed %s.'
                             % seed)


def evaluate(landscape, x):
    """
    Return ``clamp((raw(x) - norm_lo) / (norm_hi - norm_lo), 0, 1)``.

    Raise :class:`~pymorse.exceptions.DomainError` if ``x`` is outside
    [-1, 1]^2; callers clip first.
    """
    x = _check_point(x)
    return float(landscape.normalize(landscape.raw(x[np.newaxis]))[0])


def finite_diff_grad(landscape, x, h=FD_STEP):
    """
    Estimate the gradient of any field with an ``eval`` method by central
    differences, treating it as a black box.

    Where an axis is within ``h`` of the boundary, fall back to a one-sided
    difference on that axis and report it in the ``one_sided`` flag of the
    returned :class:`FiniteDiffGradient`.
    """
    x = _check_point(x)
    g = np.empty(2)
    one_sided = False
    for i in range(2):
        lo = x.copy()
        hi = x.copy()
        lo[i] = x[i] - h
        hi[i] = x[i] + h
        # Reuse the centre point on a side that would leave the domain.
        if hi[i] > 1.0:
            hi[i] = x[i]
            one_sided = True
        elif lo[i] < -1.0:
            lo[i] = x[i]
            one_sided = True
        g[i] = (landscape.eval(hi) - landscape.eval(lo)) / (hi[i] - lo[i])
    return FiniteDiffGradient(g, one_sided)


def grid_values(landscape, n=NORMALIZATION_GRID):
    """Return ``(points, values)`` on the ``n * n`` grid, for plotting."""
    points = grid_points(n)
    if isinstance(landscape, Landscape):
        return points, landscape.eval_many(points)
    return points, np.array([landscape.eval(p) for p in points])
