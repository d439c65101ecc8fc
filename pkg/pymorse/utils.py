from __future__ import absolute_import

import zlib

import numpy as np
from six import integer_types, string_types

from pymorse.exceptions import ConfigurationError, ShapeError


class Box(object):
    """
    An axis-aligned box of weight vectors, closed on both ends

    Boxes are immutable; their bound arrays are read-only.
    """
    def __init__(self, lo, hi):
        """
        :arg lo: Per-axis lower bounds
        :arg hi: Per-axis upper bounds, each strictly greater than its ``lo``
        """
        lo = np.array(lo, dtype=float, ndmin=1)
        hi = np.array(hi, dtype=float, ndmin=1)
        if lo.ndim != 1 or lo.shape != hi.shape or not lo.size:
            raise ConfigurationError(
                'Box bounds must be two equal-length vectors, got %r and %r.'
                % (lo.tolist(), hi.tolist()))
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigurationError('Box bounds must be finite.')
        if not np.all(lo < hi):
            raise ConfigurationError(
                'Degenerate box: every lower bound must be below its upper '
                'bound, got %r and %r.' % (lo.tolist(), hi.tolist()))
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def cube(cls, lo, hi, dim):
        """Return the box [lo, hi]^dim."""
        return cls([lo] * dim, [hi] * dim)

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def width(self):
        return self.hi - self.lo

    def clip(self, w):
        """Return ``w`` with every coordinate clipped into the box."""
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.dim:
            raise ShapeError(self.dim, w.shape[-1])
        return np.clip(w, self.lo, self.hi)

    def contains(self, w):
        w = np.asarray(w, dtype=float)
        return bool(np.all(w >= self.lo) and np.all(w <= self.hi))

    def sample(self, rng, size=None):
        """
        Draw uniformly from the box.

        :arg rng: A numpy ``Generator``
        :arg size: Number of points, or None for a single vector
        """
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.lo + (self.hi - self.lo) * rng.random(shape)

    def __eq__(self, other):
        return (isinstance(other, Box) and
                np.array_equal(self.lo, other.lo) and
                np.array_equal(self.hi, other.hi))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'Box(%r, %r)' % (self.lo.tolist(), self.hi.tolist())


def _key_int(key):
    """Map a seed-path component to a non-negative 32-bit integer."""
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, integer_types + (np.integer,)):
        return int(key) % (1 << 32)
    if isinstance(key, string_types):
        return zlib.crc32(key.encode('utf-8')) & 0xffffffff
    raise TypeError("Can't use %r as a seed path component." % (key,))


def seed_sequence(master, *path):
    """
    Return the ``SeedSequence`` at ``path`` beneath the ``master`` seed.

    Seeds split hierarchically (master -> landscape -> run -> net) by naming
    each level, so the stream a run draws from depends only on its own path.
    Adding a strategy or a seed elsewhere never shifts anyone else's stream.

    :arg master: The experiment-wide integer seed
    :arg path: Integers or strings naming the stream, like
        ``('bench', 'spiky', 3, 7)``
    """
    return np.random.SeedSequence(entropy=int(master) % (1 << 64),
                                  spawn_key=tuple(_key_int(k) for k in path))


def derive_rng(master, *path):
    """Return a counter-based (Philox) ``Generator`` for ``path``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master, *path)))


def derive_seed(master, *path):
    """Return a 63-bit integer seed for ``path``."""
    state = seed_sequence(master, *path).generate_state(1, dtype=np.uint64)
    return int(state[0]) >> 1


def fresh_seed(rng):
    """Draw a new 63-bit seed from an existing generator."""
    return int(rng.integers(0, 1 << 63))


def _check_lengths(values, lengths):
    values = np.asarray(values, dtype=float)
    lengths = [int(n) for n in lengths]
    if any(n < 0 for n in lengths) or sum(lengths) != len(values):
        raise ShapeError(len(values), sum(lengths))
    return values, lengths


def reward_to_go(values, gamma, lengths):
    """
    Return discounted sums ``G_t = sum_{k>=t} gamma^(k-t) values_k``, restarted
    at every episode boundary.

    :arg values: Per-step values of all episodes, concatenated
    :arg gamma: Discount factor
    :arg lengths: Episode lengths, summing to ``len(values)``
    """
    values, lengths = _check_lengths(values, lengths)
    out = np.empty_like(values)
    end = 0
    for length in lengths:
        start, end = end, end + length
        acc = 0.0
        for t in range(end - 1, start - 1, -1):
            acc = values[t] + gamma * acc
            out[t] = acc
    return out


def discounted_prefix(values, gamma, lengths):
    """
    Return forward discounted sums ``C_k = sum_{t<=k} gamma^(k-t) values_t``,
    restarted at every episode boundary.

    This is the transpose of :func:`reward_to_go`: for any ``a`` and ``b``,
    ``a . reward_to_go(b) == discounted_prefix(a) . b``.
    """
    values, lengths = _check_lengths(values, lengths)
    out = np.empty_like(values)
    end = 0
    for length in lengths:
        start, end = end, end + length
        acc = 0.0
        for t in range(start, end):
            acc = values[t] + gamma * acc
            out[t] = acc
    return out


def all_finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)
