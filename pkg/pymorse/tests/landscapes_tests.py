from unittest import TestCase

from six import PY3

if PY3:
    from unittest.mock import patch
else:
    from mock import patch

import numpy as np

from pymorse import landscapes
from pymorse.exceptions import ConfigurationError, DomainError, ShapeError
from pymorse.landscapes import (FAMILIES, REDRAW_OFFSET, CallableField,
                                count_local_maxima, evaluate,
                                finite_diff_grad, grid_points, grid_values,
                                make_landscape)


class GridTests(TestCase):
    def test_grid_points(self):
        points = grid_points(3)
        self.assertEqual(points.shape, (9, 2))
        self.assertEqual(points[0].tolist(), [-1.0, -1.0])
        self.assertEqual(points[1].tolist(), [-1.0, 0.0])
        self.assertEqual(points[-1].tolist(), [1.0, 1.0])

    def test_single_peak(self):
        values = np.zeros((5, 5))
        values[2, 2] = 1.0
        self.assertEqual(count_local_maxima(values), 1)

    def test_corner_peaks(self):
        """Edge cells are compared with their in-grid neighbours only."""
        values = np.zeros((4, 4))
        values[0, 0] = 2.0
        values[3, 3] = 1.0
        self.assertEqual(count_local_maxima(values), 2)

    def test_plateau_is_not_a_maximum(self):
        self.assertEqual(count_local_maxima(np.ones((3, 3))), 0)


class LandscapeTests(TestCase):
    def test_normalized_into_unit_interval(self):
        """Every family spans exactly [0, 1] on the normalization grid."""
        for family in FAMILIES:
            for seed in range(3):
                values = make_landscape(family, seed).eval_many(grid_points())
                self.assertEqual(values.min(), 0.0, (family, seed))
                self.assertEqual(values.max(), 1.0, (family, seed))

    def test_off_grid_points_stay_in_range(self):
        rng = np.random.default_rng(0)
        for family in FAMILIES:
            landscape = make_landscape(family, 4)
            for x in rng.uniform(-1, 1, size=(50, 2)):
                value = evaluate(landscape, x)
                self.assertTrue(0.0 <= value <= 1.0)

    def test_deterministic(self):
        """Equal family and seed give bitwise-equal landscapes."""
        for family in FAMILIES:
            a = make_landscape(family, 7)
            b = make_landscape(family, 7)
            x = np.array([0.123, -0.456])
            self.assertEqual(a.eval(x), b.eval(x))

    def test_seeds_differ(self):
        points = grid_points(21)
        for family in FAMILIES:
            self.assertFalse(np.array_equal(
                make_landscape(family, 1).eval_many(points),
                make_landscape(family, 2).eval_many(points)))

    def test_eval_matches_eval_many(self):
        landscape = make_landscape('fixednn', 3)
        points = np.array([[0.1, 0.2], [-0.5, 0.9]])
        many = landscape.eval_many(points)
        for p, v in zip(points, many):
            self.assertAlmostEqual(landscape.eval(p), v, places=12)

    def test_polynomials_are_multimodal(self):
        n = landscapes.NORMALIZATION_GRID
        for seed in range(10):
            landscape = make_landscape('smooth', seed)
            raw = landscape.raw(grid_points()).reshape(n, n)
            self.assertGreaterEqual(count_local_maxima(raw), 2)

    def test_polynomial_redraw(self):
        """A unimodal draw is replaced by the one at seed + 10**6."""
        with patch.object(landscapes, 'count_local_maxima',
                          side_effect=[1, 3]):
            with self.assertLogs('pymorse.landscapes', 'WARNING'):
                landscape = make_landscape('smooth', 5)
        self.assertEqual(landscape.seed, 5)
        self.assertEqual(landscape.effective_seed, 5 + REDRAW_OFFSET)

    def test_spiky_parameters(self):
        for seed in range(10):
            params = make_landscape('spiky', seed).params
            k = len(params['heights'])
            self.assertTrue(3 <= k <= 6)
            self.assertEqual(params['centers'].shape, (k, 2))
            self.assertTrue(np.all(params['widths'] >= 0.06))
            self.assertTrue(np.all(params['widths'] <= 0.12))
            self.assertTrue(np.all(params['heights'] >= 0.5))

    def test_spikes_are_sparse(self):
        for seed in range(20):
            _, values = grid_values(make_landscape('spiky', seed), 101)
            self.assertLess((values > 0.5).mean(), 0.1, seed)

    def test_unknown_family(self):
        self.assertRaises(ConfigurationError, make_landscape, 'bumpy', 0)

    def test_outside_domain(self):
        landscape = make_landscape('smooth', 0)
        self.assertRaises(DomainError, landscape.eval, [1.5, 0.0])
        self.assertRaises(DomainError, landscape.eval_many, [[0.0, -1.01]])
        self.assertRaises(ShapeError, landscape.eval, [0.0, 0.0, 0.0])

    def test_grid_values(self):
        landscape = make_landscape('spiky', 0)
        points, values = grid_values(landscape, 11)
        self.assertEqual(points.shape, (121, 2))
        self.assertEqual(values.shape, (121,))


class FiniteDifferenceTests(TestCase):
    def ramp(self):
        return CallableField(lambda x: 0.3 * x[0] - 0.2 * x[1], 'ramp')

    def test_interior(self):
        result = finite_diff_grad(self.ramp(), np.array([0.1, -0.4]))
        self.assertFalse(result.one_sided)
        self.assertTrue(np.allclose(result.grad, [0.3, -0.2], atol=1e-9))

    def test_boundary_is_one_sided(self):
        for x in ([1.0, 0.0], [0.0, -1.0], [-0.9995, 0.9995]):
            result = finite_diff_grad(self.ramp(), np.array(x))
            self.assertTrue(result.one_sided, x)
            self.assertTrue(np.allclose(result.grad, [0.3, -0.2], atol=1e-9))

    def test_bowl(self):
        bowl = CallableField(lambda x: -(x[0] ** 2 + x[1] ** 2), 'bowl')
        result = finite_diff_grad(bowl, np.array([0.5, -0.25]))
        self.assertTrue(np.allclose(result.grad, [-1.0, 0.5], atol=1e-6))

    def test_on_a_landscape(self):
        """Agrees with a much finer difference on a smooth family."""
        landscape = make_landscape('fixednn', 0)
        x = np.array([0.2, 0.3])
        coarse = finite_diff_grad(landscape, x).grad
        fine = finite_diff_grad(landscape, x, h=1e-5).grad
        self.assertTrue(np.allclose(coarse, fine, atol=1e-3))

    def test_outside_domain(self):
        self.assertRaises(DomainError, finite_diff_grad, self.ramp(),
                          np.array([2.0, 0.0]))
