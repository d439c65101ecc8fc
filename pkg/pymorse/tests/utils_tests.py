from unittest import TestCase

import numpy as np

from pymorse.exceptions import ConfigurationError, ShapeError
from pymorse.utils import (Box, derive_rng, derive_seed, discounted_prefix,
                           fresh_seed, reward_to_go)


class BoxTests(TestCase):
    """Tests for Box"""

    def test_clip_and_contains(self):
        box = Box([0.0, -1.0], [1.0, 1.0])
        self.assertEqual(box.clip([2.0, -3.0]).tolist(), [1.0, -1.0])
        self.assertTrue(box.contains([1.0, -1.0]))
        self.assertFalse(box.contains([1.0, -1.0001]))

    def test_sample(self):
        box = Box.cube(-1.0, 1.0, 3)
        points = box.sample(derive_rng(0, 'box'), size=500)
        self.assertEqual(points.shape, (500, 3))
        self.assertTrue(all(box.contains(p) for p in points))

    def test_bounds_read_only(self):
        box = Box.cube(0.0, 1.0, 2)
        with self.assertRaises(ValueError):
            box.lo[0] = -5.0

    def test_bad_boxes(self):
        """Degenerate, mismatched and infinite bounds are all refused."""
        self.assertRaises(ConfigurationError, Box, [0.0, 1.0], [1.0, 1.0])
        self.assertRaises(ConfigurationError, Box, [0.0], [1.0, 2.0])
        self.assertRaises(ConfigurationError, Box, [0.0], [np.inf])
        self.assertRaises(ShapeError, Box.cube(0, 1, 2).clip, [0.5])


class SeedTests(TestCase):
    """Tests for hierarchical seed splitting"""

    def test_same_path_same_stream(self):
        a = derive_rng(3, 'bench', 'spiky', 2, 7).random(5)
        b = derive_rng(3, 'bench', 'spiky', 2, 7).random(5)
        self.assertEqual(a.tolist(), b.tolist())

    def test_paths_are_independent(self):
        """Changing any level of the path changes the stream."""
        base = derive_rng(3, 'bench', 'spiky', 2, 7).random()
        for other in [(4, 'bench', 'spiky', 2, 7),
                      (3, 'cartpole', 'spiky', 2, 7),
                      (3, 'bench', 'smooth', 2, 7),
                      (3, 'bench', 'spiky', 2, 8)]:
            self.assertNotEqual(derive_rng(*other).random(), base, other)

    def test_derived_seeds(self):
        seed = derive_seed(0, 'landscape', 'fixednn')
        self.assertEqual(seed, derive_seed(0, 'landscape', 'fixednn'))
        self.assertTrue(0 <= seed < 1 << 63)
        self.assertTrue(0 <= fresh_seed(derive_rng(0)) < 1 << 63)

    def test_bad_path(self):
        self.assertRaises(TypeError, derive_rng, 0, 1.5)


class DiscountTests(TestCase):
    """Tests for reward_to_go() and discounted_prefix()"""

    def test_reward_to_go(self):
        """Sums restart at each episode boundary."""
        out = reward_to_go([1.0, 1.0, 1.0, 2.0, 2.0], 0.5, [3, 2])
        self.assertEqual(out.tolist(), [1.75, 1.5, 1.0, 3.0, 2.0])

    def test_prefix(self):
        out = discounted_prefix([1.0, 1.0, 1.0, 2.0, 2.0], 0.5, [3, 2])
        self.assertEqual(out.tolist(), [1.0, 1.5, 1.75, 2.0, 3.0])

    def test_transpose(self):
        """a . reward_to_go(b) equals discounted_prefix(a) . b."""
        rng = derive_rng(0, 'transpose')
        a = rng.normal(size=12)
        b = rng.normal(size=12)
        lengths = [5, 1, 6]
        self.assertAlmostEqual(a.dot(reward_to_go(b, 0.9, lengths)),
                               discounted_prefix(a, 0.9, lengths).dot(b),
                               places=12)

    def test_lengths_must_cover(self):
        self.assertRaises(ShapeError, reward_to_go, [1.0, 2.0], 0.9, [1])

    def test_lengths_past_the_end(self):
        """Lengths summing past the values are a shape error, not an index
        error."""
        self.assertRaises(ShapeError, reward_to_go, [1.0, 2.0], 0.9, [3])
        self.assertRaises(ShapeError, discounted_prefix, [1.0, 2.0], 0.9,
                          [1, 2])

    def test_negative_length(self):
        self.assertRaises(ShapeError, reward_to_go, [1.0, 2.0], 0.9,
                          [3, -1])
