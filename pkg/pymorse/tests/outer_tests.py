from unittest import TestCase

from six import PY3

if PY3:
    from unittest.mock import patch
else:
    from mock import patch

import numpy as np

from pymorse import outer
from pymorse.exceptions import ConfigurationError, NumericError
from pymorse.inner import WeightFunction
from pymorse.landscapes import FAMILIES, CallableField, make_landscape
from pymorse.outer import (BENCH_LR, BENCH_STRATEGIES, ExplorationConfig,
                           NeumannConfig, NeumannResult, bench_run,
                           explore_gate, implicit_outer_grad,
                           neumann_inverse_apply, outer_grad_step,
                           parse_bench_strategy)
from pymorse.sampling import RandomSampler, Sampler
from pymorse.tests import SlowTestCase
from pymorse.utils import Box, derive_rng


UNIT4 = Box.cube(0.0, 1.0, 4)


class StubSampler(Sampler):
    """Proposes a fixed point and counts how often it was prepared"""
    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)
        self.prepared = 0

    def prepare(self):
        self.prepared += 1

    def propose(self, cfg, rng):
        return self.point


class ExploreGateTests(TestCase):
    def test_closed_gate(self):
        """Enough improvement: no proposal, no fitting, no randomness."""
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        sampler = StubSampler([0.5] * 4)
        rng = derive_rng(0, 'gate')
        for delta in (0.01, 0.2, 5.0):
            self.assertIsNone(explore_gate(cfg, delta, 0.0, sampler, rng))
        self.assertEqual(sampler.prepared, 0)
        self.assertEqual(rng.random(), derive_rng(0, 'gate').random())

    def test_zero_performance_always_jumps(self):
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        rng = derive_rng(1, 'gate')
        for _ in range(100):
            w = explore_gate(cfg, 0.0, 0.0, RandomSampler(), rng)
            self.assertIsNotNone(w)

    def test_full_performance_never_jumps(self):
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        sampler = StubSampler([0.5] * 4)
        rng = derive_rng(2, 'gate')
        for _ in range(100):
            self.assertIsNone(explore_gate(cfg, -1.0, 1.0, sampler, rng))
        self.assertEqual(sampler.prepared, 100)

    def test_jump_rate_is_one_minus_performance(self):
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        sampler = StubSampler([0.5] * 4)
        rng = derive_rng(3, 'gate')
        jumps = sum(explore_gate(cfg, 0.0, 0.3, sampler, rng) is not None
                    for _ in range(10000))
        self.assertAlmostEqual(jumps / 10000.0, 0.7, delta=0.02)

    def test_proposals_are_clipped(self):
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        sampler = StubSampler([5.0, -5.0, 0.5, 2.0])
        w = explore_gate(cfg, 0.0, 0.0, sampler, derive_rng(4, 'gate'))
        self.assertEqual(w.tolist(), [1.0, 0.0, 0.5, 1.0])

    def test_never_leaves_the_box(self):
        cfg = ExplorationConfig(alpha=0.01, weight_box=UNIT4)
        rng = derive_rng(5, 'gate')
        sampler = RandomSampler()
        for _ in range(100000):
            w = explore_gate(cfg, 0.0, 0.0, sampler, rng)
            self.assertTrue(UNIT4.contains(w))

    def test_performance_out_of_range(self):
        cfg = ExplorationConfig()
        for p in (-0.1, 1.5, float('nan')):
            self.assertRaises(ConfigurationError, explore_gate, cfg, 0.0, p,
                              RandomSampler(), derive_rng(0, 'gate'))

    def test_config_validation(self):
        self.assertRaises(ConfigurationError, ExplorationConfig, N=0)
        self.assertRaises(ConfigurationError, ExplorationConfig, tau=0)
        self.assertRaises(ConfigurationError, ExplorationConfig, t_grad=2,
                          t_explore=5)


def random_spd(rng, dim):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return (q * rng.uniform(0.1, 1.0, size=dim)).dot(q.T)


class NeumannTests(TestCase):
    def test_geometric_closed_form(self):
        """Five terms on H = 0.5 I give 1.9375 v."""
        v = np.array([0.3, -1.0, 2.0, 0.0])
        result = neumann_inverse_apply(lambda u: 0.5 * u, v,
                                       NeumannConfig(K=5, eta=1.0))
        self.assertFalse(result.diverged)
        self.assertTrue(np.allclose(result.value, 1.9375 * v, rtol=0,
                                    atol=1e-15))

    def test_matches_dense_solve(self):
        """With ||I - H|| <= 0.9, 200 terms invert H to 1e-5."""
        rng = derive_rng(0, 'neumann')
        for _ in range(50):
            dim = int(rng.integers(1, 9))
            h = random_spd(rng, dim)
            v = rng.normal(size=dim)
            result = neumann_inverse_apply(h.dot, v,
                                           NeumannConfig(K=200, eta=1.0))
            exact = np.linalg.solve(h, v)
            self.assertLess(np.linalg.norm(result.value - exact),
                            1e-5 * np.linalg.norm(exact))

    def test_adaptive_damping(self):
        """Without eta the series still converges on a stiff matrix."""
        h = np.diag([50.0, 5.0])
        v = np.array([1.0, 1.0])
        result = neumann_inverse_apply(h.dot, v, NeumannConfig(K=2000))
        self.assertFalse(result.diverged)
        self.assertLess(abs(1.0 - result.eta * 50.0), 1.0)
        self.assertTrue(np.allclose(result.value, [1 / 50.0, 1 / 5.0],
                                    atol=1e-6))

    def test_linear_in_v(self):
        """With eta fixed the truncated series is a linear map of v."""
        rng = derive_rng(1, 'neumann')
        h = random_spd(rng, 4)
        v1, v2 = rng.normal(size=(2, 4))
        cfg = NeumannConfig(K=20, eta=0.8)

        def apply(v):
            return neumann_inverse_apply(h.dot, v, cfg).value
        self.assertTrue(np.allclose(apply(2.0 * v1 - 3.0 * v2),
                                    2.0 * apply(v1) - 3.0 * apply(v2),
                                    rtol=0, atol=1e-12))

    def test_adaptive_damping_is_homogeneous(self):
        """Picking eta from the input keeps scaling linear."""
        rng = derive_rng(2, 'neumann')
        h = random_spd(rng, 3)
        v = rng.normal(size=3)
        base = neumann_inverse_apply(h.dot, v, NeumannConfig(K=10))
        for scale in (-1.0, 0.01, 7.5):
            scaled = neumann_inverse_apply(h.dot, scale * v,
                                           NeumannConfig(K=10))
            self.assertAlmostEqual(scaled.eta, base.eta, places=12)
            self.assertTrue(np.allclose(scaled.value, scale * base.value,
                                        rtol=1e-10, atol=1e-13))

    def test_zero_vector(self):
        result = neumann_inverse_apply(lambda u: u, np.zeros(3),
                                       NeumannConfig())
        self.assertEqual(result.value.tolist(), [0.0, 0.0, 0.0])
        self.assertFalse(result.diverged)

    def test_divergence(self):
        with self.assertLogs('pymorse.outer', 'WARNING'):
            result = neumann_inverse_apply(lambda u: -u, np.ones(2),
                                           NeumannConfig(K=30, eta=1.0))
        self.assertTrue(result.diverged)
        self.assertIsNone(result.value)

    def test_numeric_error_is_divergence(self):
        def hvp(u):
            raise NumericError('boom')
        result = neumann_inverse_apply(hvp, np.ones(2),
                                       NeumannConfig(K=5, eta=0.5))
        self.assertTrue(result.diverged)

    def test_config_validation(self):
        self.assertRaises(ConfigurationError, NeumannConfig, K=0)
        self.assertRaises(ConfigurationError, NeumannConfig, eta=-1.0)


class ImplicitGradientTests(TestCase):
    """
    On ``L = theta.A.theta / 2 - theta.B.phi`` the optimum is
    ``A^-1 B phi``, so an outer objective ``c . theta`` has gradient
    ``B^T A^-1 c`` in ``phi``.
    """
    def setUp(self):
        rng = derive_rng(0, 'implicit')
        self.a = random_spd(rng, 3)
        self.b = rng.normal(size=(3, 2))
        self.c = rng.normal(size=3)
        self.phi = rng.normal(size=2)
        self.theta = np.linalg.solve(self.a, self.b.dot(self.phi))

    def outer_grad(self, neumann):
        return implicit_outer_grad(
            self.c,
            lambda th: self.a.dot(th) - self.b.dot(self.phi),
            self.theta,
            lambda u: -self.b.T.dot(u),
            neumann, 2)

    def test_toy_problem(self):
        result = self.outer_grad(NeumannConfig(K=300, eta=1.0))
        self.assertFalse(result.skipped)
        exact = self.b.T.dot(np.linalg.solve(self.a, self.c))
        self.assertTrue(np.allclose(result.grad, exact, atol=1e-5))

    def test_non_finite_task_gradient(self):
        self.c = np.array([np.nan, 0.0, 0.0])
        result = self.outer_grad(NeumannConfig())
        self.assertTrue(result.skipped)
        self.assertEqual(result.grad.tolist(), [0.0, 0.0])

    def test_divergence_skips(self):
        with patch.object(outer, 'neumann_inverse_apply',
                          return_value=NeumannResult(None, True, 1.0)):
            result = self.outer_grad(NeumannConfig())
        self.assertTrue(result.skipped)
        self.assertEqual(result.reason, 'neumann series diverged')


class OuterStepTests(TestCase):
    def test_clips_to_box(self):
        """Pushing a constant weight past the box stops at the boundary."""
        wf = WeightFunction.constant([0.99, 0.5, 0.5, 0.5], UNIT4)
        step = outer_grad_step(wf, np.array([1.0, 0.0, 0.0, 0.0]),
                               lr_coeff=0.5)
        self.assertEqual(step.weight_fn.weight()[0], 1.0)
        self.assertFalse(step.skipped)

    def test_gradient_norm_clipped(self):
        """A gradient of norm 5 moves lr * 1."""
        wf = WeightFunction.constant([0.5] * 4, UNIT4)
        step = outer_grad_step(wf, np.array([3.0, 4.0, 0.0, 0.0]),
                               lr_coeff=0.01, min_iters=1, max_iters=1)
        moved = step.weight_fn.weight() - wf.weight()
        self.assertAlmostEqual(np.linalg.norm(moved), 0.01)
        self.assertTrue(np.allclose(moved, [0.006, 0.008, 0.0, 0.0]))

    def test_iteration_bounds(self):
        wf = WeightFunction.constant([0.5] * 4, UNIT4)
        self.assertEqual(
            outer_grad_step(wf, np.ones(4) * 1e-3).iterations, 10)
        self.assertEqual(
            outer_grad_step(wf, lambda current: np.zeros(4)).iterations, 3)

    def test_negligible_vector_stops_early(self):
        """A fixed vector below tol stops at min_iters like a callable."""
        wf = WeightFunction.constant([0.5] * 4, UNIT4)
        step = outer_grad_step(wf, np.full(4, 1e-9), min_iters=2)
        self.assertEqual(step.iterations, 2)
        self.assertEqual(
            outer_grad_step(wf, np.zeros(4), min_iters=4).iterations, 4)

    def test_learning_rate_by_mode(self):
        wf = WeightFunction.constant([0.5] * 4, UNIT4)
        step = outer_grad_step(wf, np.array([0.1, 0, 0, 0]), lr_net=1.0,
                               lr_coeff=0.1, min_iters=1, max_iters=1)
        self.assertAlmostEqual(step.weight_fn.weight()[0], 0.51)

    def test_non_finite_leaves_weights_alone(self):
        wf = WeightFunction.network([0.2, 0.4, 0.6, 0.8], UNIT4, 0)
        before = np.array(wf.params)
        grad = np.full(wf.params.shape, np.inf)
        step = outer_grad_step(wf, grad)
        self.assertTrue(step.skipped)
        self.assertIs(step.weight_fn, wf)
        self.assertTrue(np.array_equal(wf.params, before))

    def test_network_weights_stay_in_box(self):
        wf = WeightFunction.network([0.5] * 4, UNIT4, 1)
        grad = derive_rng(1, 'step').normal(size=wf.params.shape) * 100
        step = outer_grad_step(wf, grad, lr_net=1.0)
        states = derive_rng(2, 'step').normal(size=(20, 4))
        ws = step.weight_fn.weights(states)
        self.assertTrue(np.all(ws >= 0.0) and np.all(ws <= 1.0))


def unit_ramp():
    return CallableField(lambda x: (2.0 + x[0] - x[1]) / 4.0, 'ramp')


def constant_field(value):
    return CallableField(lambda x: value, 'flat')


class BenchTests(TestCase):
    def run_bench(self, landscape, strategy, budget=100, seed=0):
        return bench_run(landscape, strategy, budget=budget,
                         rng=derive_rng(seed, 'bench-test'), seed=seed)

    def test_series_shape(self):
        record = self.run_bench(unit_ramp(), 'no_explore', budget=37)
        self.assertEqual(len(record.series), 37)
        self.assertEqual([row.step for row in record.series], list(range(37)))
        self.assertEqual(record.final_score, record.series[-1].value)
        self.assertEqual(record.landscape, 'ramp0')
        self.assertEqual(record.experiment, 'bench')

    def test_gradient_ascent_climbs(self):
        record = self.run_bench(unit_ramp(), 'no_explore')
        values = [record.initial] + [row.value for row in record.series]
        self.assertTrue(all(b >= a - 1e-12 for a, b in zip(values,
                                                             values[1:])))
        self.assertTrue(all(row.event == 'grad' for row in record.series))
        self.assertGreaterEqual(record.best_score, record.final_score)

    def test_steep_gradient_is_clipped(self):
        steep = CallableField(lambda x: 50.0 * (x[0] + x[1]), 'steep')
        record = self.run_bench(steep, 'no_explore', budget=3)
        previous = np.array(record.series[0].weight)
        for row in record.series[1:]:
            step = np.array(row.weight) - previous
            self.assertLessEqual(np.linalg.norm(step), BENCH_LR + 1e-9)
            previous = np.array(row.weight)

    def test_replay_is_bitwise(self):
        landscape = make_landscape('spiky', 3)
        for strategy in BENCH_STRATEGIES:
            a = self.run_bench(landscape, strategy, seed=4)
            b = self.run_bench(landscape, strategy, seed=4)
            self.assertEqual(a.series, b.series, strategy)

    def test_periodic_resets_at_every_checkpoint(self):
        record = self.run_bench(unit_ramp(), 'periodic_random')
        resets = [row.step for row in record.series if row.event == 'reset']
        self.assertEqual(resets, [10, 20, 30, 40, 50, 60, 70, 80, 90])
        self.assertEqual(record.extra['resets'], 9)

    def test_gate_on_flat_fields(self):
        """Zero performance always jumps; full performance never does."""
        low = self.run_bench(constant_field(0.0), 'morse_rnd')
        self.assertEqual(low.extra['resets'], 9)
        high = self.run_bench(constant_field(1.0), 'morse_random')
        self.assertEqual(high.extra['resets'], 0)

    def test_gate_sees_window_improvement(self):
        """P is f(x_k) and the improvement is f(x_k) - f(x_{k-10})."""
        original = outer.explore_gate
        with patch.object(outer, 'explore_gate',
                          side_effect=original) as gate:
            record = self.run_bench(make_landscape('smooth', 2), 'morse_rnd')
        values = [record.initial] + [row.value for row in record.series]
        self.assertEqual(gate.call_count, 9)
        for (cfg, delta, p, sampler, rng), k in zip(
                [c[0] for c in gate.call_args_list], range(10, 100, 10)):
            self.assertEqual(p, values[k])
            self.assertEqual(delta, values[k] - values[k - 10])

    def test_every_point_in_domain(self):
        for strategy in ('morse_cem', 'morse_cma', 'periodic_rnd'):
            record = self.run_bench(constant_field(0.0), strategy)
            for row in record.series:
                self.assertTrue(all(-1.0 <= v <= 1.0 for v in row.weight))

    def test_aliases(self):
        self.assertEqual(parse_bench_strategy('morse'), ('morse', 'rnd'))
        self.assertEqual(parse_bench_strategy('periodic'),
                         ('periodic', 'rnd'))
        self.assertEqual(parse_bench_strategy('no_explore'), ('none', None))
        record = self.run_bench(unit_ramp(), 'morse', budget=5)
        self.assertEqual(record.strategy, 'morse_rnd')

    def test_unknown_strategy(self):
        self.assertRaises(ConfigurationError, bench_run, unit_ramp(),
                          'annealing')


def family_means(strategies, families=FAMILIES, n_landscapes=10, n_runs=10):
    means = {}
    for family in families:
        for lseed in range(n_landscapes):
            landscape = make_landscape(family, lseed)
            for rseed in range(n_runs):
                for strategy in strategies:
                    record = bench_run(
                        landscape, strategy,
                        rng=derive_rng(0, 'bench', family, lseed, rseed),
                        seed=rseed)
                    means.setdefault((strategy, family), []).append(
                        record.final_score)
    return dict((key, np.mean(v)) for key, v in means.items())


def average(means, strategy):
    return np.mean([means[(strategy, f)] for f in FAMILIES])


class BenchAcceptanceTests(SlowTestCase):
    """Strategy orderings over 10 landscapes x 10 runs per family"""

    def test_exploration_ordering(self):
        means = family_means(['no_explore', 'periodic_rnd', 'morse_rnd'])
        self.assertGreaterEqual(means[('morse_rnd', 'spiky')] -
                                means[('no_explore', 'spiky')], 0.3)
        self.assertGreater(average(means, 'morse_rnd'),
                           average(means, 'periodic_rnd'))
        self.assertGreaterEqual(means[('no_explore', 'smooth')], 0.6)

    def test_sampler_ordering(self):
        samplers = ['morse_rnd', 'morse_random', 'morse_cem', 'morse_cma']
        means = family_means(samplers)
        self.assertGreaterEqual(means[('morse_rnd', 'spiky')],
                                means[('morse_random', 'spiky')])
        self.assertGreaterEqual(means[('morse_rnd', 'spiky')] -
                                means[('morse_cem', 'spiky')], 0.2)
        best = max(samplers, key=lambda s: average(means, s))
        self.assertEqual(best, 'morse_rnd')
