"""
A small dense feed-forward network engine

Every learned function in pymorse (RND target and predictor, the policy, the
state-conditioned reward-weight network, the FixedNN landscape) is a
:class:`DenseNet`. Nets are immutable: training steps return new nets.
Parameters live in one flat vector, laid out layer by layer as the row-major
weight matrix followed by the bias vector.
"""
from __future__ import absolute_import

from collections import namedtuple
import logging

import numpy as np

from pymorse.exceptions import ConfigurationError, NumericError, ShapeError


log = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ('tanh', 'relu', 'identity')
OUTPUT_ACTIVATIONS = ('identity', 'tanh', 'sigmoid', 'softmax')


class GradientReport(namedtuple('GradientReport', 'param_grad input_grad')):
    """
    Derivatives of ``upstream . forward(net, x)``

    ``param_grad`` is aligned with the net's flat parameter vector (summed
    over the batch); ``input_grad`` has the shape of ``x``.
    """
    __slots__ = ()


class AdamState(namedtuple('AdamState', 'm v t')):
    """First and second moment estimates plus the step counter of Adam"""
    __slots__ = ()

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def parameter_count(layer_sizes):
    """Return ``sum_l (n_l + 1) * n_{l+1}``."""
    return sum((n_in + 1) * n_out
               for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_sizes(layer_sizes):
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ConfigurationError(
            'A net needs at least an input and an output layer, got %r.'
            % (sizes,))
    if any(int(n) != n or n < 1 for n in sizes):
        raise ConfigurationError(
            'Layer sizes must be positive integers, got %r.' % (sizes,))
    return [int(n) for n in sizes]


class DenseNet(object):
    """
    A dense feed-forward net with one activation for every hidden layer and
    another for the output layer

    Instances are immutable and safe to share between threads.
    """
    def __init__(self, layer_sizes, params, hidden='tanh', output='identity',
                 init_seed=None):
        """
        :arg layer_sizes: Widths of every layer, input first
        :arg params: Flat parameter vector of length
            :func:`parameter_count` ``(layer_sizes)``
        :arg hidden: Activation on hidden layers: 'tanh', 'relu' or 'identity'
        :arg output: Activation on the output layer: 'identity', 'tanh',
            'sigmoid' or 'softmax'
        :arg init_seed: The seed the parameters were drawn from, if any
        """
        self.layer_sizes = tuple(_check_sizes(layer_sizes))
        if hidden not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError('Unknown hidden activation %r.' % hidden)
        if output not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError('Unknown output activation %r.' % output)
        params = np.array(params, dtype=float).ravel()
        if params.shape[0] != parameter_count(self.layer_sizes):
            raise ShapeError(parameter_count(self.layer_sizes),
                             params.shape[0])
        params.flags.writeable = False
        self.params = params
        self.hidden = hidden
        self.output = output
        self.init_seed = init_seed
        self._layers = _split(params, self.layer_sizes)

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    @property
    def parameter_count(self):
        return self.params.shape[0]

    def layers(self):
        """Return ``(W, b)`` read-only views for every layer, input first."""
        return list(self._layers)

    def with_params(self, params):
        """Return a net of the same shape and activations with new params."""
        return DenseNet(self.layer_sizes, params, hidden=self.hidden,
                        output=self.output, init_seed=self.init_seed)

    def forward(self, x):
        return forward(self, x)

    def __repr__(self):
        return 'DenseNet(%r, hidden=%r, output=%r)' % (
            list(self.layer_sizes), self.hidden, self.output)


def _split(params, layer_sizes):
    layers = []
    offset = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = params[offset:offset + n_in * n_out].reshape(n_out, n_in)
        offset += n_in * n_out
        b = params[offset:offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def init_net(layer_sizes, seed, hidden='tanh', output='identity',
             output_scale=1.0):
    """
    Return a freshly initialized :class:`DenseNet`.

    Weights and biases of each layer are uniform in
    ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, drawn from a Philox generator keyed
    by ``seed`` alone, so equal seeds give bitwise-equal nets.

    :arg layer_sizes: Widths of every layer, input first
    :arg seed: A non-negative integer
    :arg output_scale: Extra factor on the last layer's initial parameters.
        Policy heads use a small value so a fresh policy starts near uniform.
    """
    sizes = _check_sizes(layer_sizes)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    chunks = []
    last = len(sizes) - 2
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        if i == last:
            bound *= output_scale
        chunks.append(rng.uniform(-bound, bound, size=(n_in + 1) * n_out))
    return DenseNet(sizes, np.concatenate(chunks), hidden=hidden,
                    output=output, init_seed=int(seed))


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != net.input_size:
            raise ShapeError(net.input_size, x.shape[0])
        return x[np.newaxis, :], True
    if x.ndim == 2:
        if x.shape[1] != net.input_size:
            raise ShapeError(net.input_size, x.shape[1])
        return x, False
    raise ShapeError(net.input_size, x.shape)


def _activate(z, kind):
    if kind == 'tanh':
        return np.tanh(z)
    if kind == 'relu':
        return np.maximum(z, 0.0)
    if kind == 'sigmoid':
        return 1.0 / (1.0 + np.exp(-z))
    if kind == 'softmax':
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return z


def _tangent(a, dz, kind):
    """Push a pre-activation tangent (or cotangent) through an activation."""
    if kind == 'tanh':
        return (1.0 - a * a) * dz
    if kind == 'relu':
        return (a > 0.0) * dz
    if kind == 'sigmoid':
        return a * (1.0 - a) * dz
    if kind == 'softmax':
        # The softmax Jacobian is symmetric, so this serves both directions.
        return a * (dz - (a * dz).sum(axis=1, keepdims=True))
    return dz


def _trace(net, batch):
    acts = [batch]
    a = batch
    last = len(net.layer_sizes) - 2
    for i, (w, b) in enumerate(net.layers()):
        a = _activate(a.dot(w.T) + b, net.output if i == last else net.hidden)
        acts.append(a)
    return acts


def forward(net, x):
    """
    Evaluate ``net`` at ``x``.

    :arg x: A vector of the input width, or a 2-D batch of them
    """
    batch, single = _as_batch(net, x)
    out = _trace(net, batch)[-1]
    return out[0] if single else out


def grad(net, x, upstream):
    """
    Return the exact reverse-mode derivatives of ``upstream . forward(net, x)``
    as a :class:`GradientReport`.

    For a batch, ``upstream`` has one row per input row and the parameter
    gradient is summed over rows.
    """
    batch, single = _as_batch(net, x)
    upstream = np.asarray(upstream, dtype=float)
    if single:
        upstream = upstream.reshape(1, -1)
    if upstream.shape != (batch.shape[0], net.output_size):
        raise ShapeError((batch.shape[0], net.output_size), upstream.shape)

    acts = _trace(net, batch)
    delta = _tangent(acts[-1], upstream, net.output)
    layers = net.layers()
    pieces = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        pieces.append(delta.sum(axis=0))
        pieces.append(delta.T.dot(acts[i]).ravel())
        delta = delta.dot(w)
        if i > 0:
            delta = _tangent(acts[i], delta, net.hidden)
    param_grad = np.concatenate(pieces[::-1])
    return GradientReport(param_grad, delta[0] if single else delta)


def jvp(net, x, tangent):
    """
    Return the forward-mode derivative of ``forward(net, x)`` along the
    parameter direction ``tangent``.
    """
    batch, single = _as_batch(net, x)
    tangent = np.asarray(tangent, dtype=float)
    if tangent.shape != net.params.shape:
        raise ShapeError(net.parameter_count, tangent.shape[0])

    a = batch
    da = np.zeros_like(batch)
    last = len(net.layer_sizes) - 2
    for i, ((w, b), (dw, db)) in enumerate(
            zip(net.layers(), _split(tangent, net.layer_sizes))):
        kind = net.output if i == last else net.hidden
        dz = da.dot(w.T) + a.dot(dw.T) + db
        a = _activate(a.dot(w.T) + b, kind)
        da = _tangent(a, dz, kind)
    return da[0] if single else da


def hvp_at(params, loss_grad_fn, v):
    """
    Return the Hessian-vector product ``H v`` of the loss whose gradient is
    ``loss_grad_fn``, by symmetric differencing of gradients around ``params``.

    :arg params: The point to differentiate at
    :arg loss_grad_fn: Callable mapping a parameter vector to the loss gradient
        there
    :arg v: Direction, the same length as ``params``

    Raise :class:`~pymorse.exceptions.NumericError` if anything along the way
    is non-finite; outer-loop callers must then skip their update.
    """
    params = np.asarray(params, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != params.shape:
        raise ShapeError(params.shape[0], v.shape[0] if v.ndim else v.shape)
    eps = 1e-4 / max(1.0, float(np.linalg.norm(v)))
    plus = np.asarray(loss_grad_fn(params + eps * v), dtype=float)
    minus = np.asarray(loss_grad_fn(params - eps * v), dtype=float)
    hv = (plus - minus) / (2.0 * eps)
    if not np.all(np.isfinite(hv)):
        raise NumericError('Hessian-vector product is not finite.')
    return hv


def hvp(net, loss_grad_fn, v):
    """Return ``H v`` at ``net``'s parameters. See :func:`hvp_at`."""
    return hvp_at(net.params, loss_grad_fn, v)


def _check_step(net, grad_vec, lr, l2):
    if not lr > 0:
        raise ConfigurationError('Learning rate must be positive, got %r.'
                                 % (lr,))
    if not l2 >= 0:
        raise ConfigurationError('L2 coefficient must be non-negative, got %r.'
                                 % (l2,))
    grad_vec = np.asarray(grad_vec, dtype=float)
    if grad_vec.shape != net.params.shape:
        raise ShapeError(net.parameter_count, grad_vec.shape[0])
    if not np.all(np.isfinite(grad_vec)):
        raise NumericError('Refusing to step along a non-finite gradient.')
    return grad_vec


def sgd_step(net, grad_vec, lr, l2=0.0):
    """
    Return ``net`` moved to ``theta - lr * (grad + l2 * theta)``.
    """
    grad_vec = _check_step(net, grad_vec, lr, l2)
    theta = net.params
    return net.with_params(theta - lr * (grad_vec + l2 * theta))


def adam_step(net, grad_vec, state, lr, l2=0.0, beta1=0.9, beta2=0.999,
              eps=1e-8):
    """
    Return ``(net, state)`` after one Adam step with decoupled L2 decay:
    ``theta - lr * (adam_direction + l2 * theta)``.

    A zero gradient from a zero state leaves only the decay term.
    """
    grad_vec = _check_step(net, grad_vec, lr, l2)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad_vec
    v = beta2 * state.v + (1.0 - beta2) * grad_vec * grad_vec
    direction = (m / (1.0 - beta1 ** t)) / (np.sqrt(v / (1.0 - beta2 ** t))
                                             + eps)
    theta = net.params
    return (net.with_params(theta - lr * (direction + l2 * theta)),
            AdamState(m, v, t))
