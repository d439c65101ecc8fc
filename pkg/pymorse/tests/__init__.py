"""
Unit tests for pymorse

The statistical acceptance runs (full benchmark tables and CartPole
orderings) take many minutes; they are skipped unless PYMORSE_SLOW=1.
"""
import os
import shutil
import tempfile
from unittest import TestCase, SkipTest

# Test that __all__ is sufficient:
from pymorse import *


SLOW = os.environ.get('PYMORSE_SLOW') == '1'


class SlowTestCase(TestCase):
    @classmethod
    def setUpClass(cls):
        """Skip the whole class unless slow runs were asked for."""
        if not SLOW:
            raise SkipTest('Set PYMORSE_SLOW=1 to run acceptance tests.')


class TempDirTestCase(TestCase):
    def setUp(self):
        self.dir = tempfile.mkdtemp(prefix='pymorse-tests-')

    def tearDown(self):
        shutil.rmtree(self.dir, ignore_errors=True)

    def path(self, *parts):
        return os.path.join(self.dir, *parts)
