from datetime import date

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.core.exceptions import ModelFitError, PanelFormatError, PipelineStageError, SamplingError

from .baseCommands import EXIT_FAILURE, EXIT_VALIDATION, exit_code_for, parse_list
from .dateManager import periodLabel, periodMonth
from .parallel import chunk_bounds, ordered_map, resolve_threads


class ParallelTests(SimpleTestCase):

    def test_chunk_bounds_cover_range(self):
        bounds = chunk_bounds(10, 3)
        self.assertEqual(bounds, [(0, 3), (3, 7), (7, 10)])
        self.assertEqual(chunk_bounds(2, 8), [(0, 1), (1, 2)])
        self.assertEqual(chunk_bounds(0, 4), [])

    def test_ordered_map_keeps_order(self):
        items = list(range(20))
        self.assertEqual(ordered_map(lambda k: k * k, items, threads=4), [k * k for k in items])
        self.assertEqual(ordered_map(str, [], threads=4), [])

    def test_resolve_threads(self):
        self.assertEqual(resolve_threads(0), 1)
        self.assertEqual(resolve_threads(3), 3)
        self.assertGreaterEqual(resolve_threads(None), 1)


class CommandHelperTests(SimpleTestCase):

    def test_parse_list(self):
        self.assertEqual(parse_list('3, 12,,24', int), [3, 12, 24])
        self.assertIsNone(parse_list(None))

    def test_exit_codes(self):
        self.assertEqual(exit_code_for(PanelFormatError('bad', row=2)), EXIT_VALIDATION)
        self.assertEqual(exit_code_for(ValidationError('bad')), EXIT_VALIDATION)
        self.assertEqual(exit_code_for(ModelFitError('no events')), EXIT_FAILURE)
        self.assertEqual(exit_code_for(PipelineStageError('sample', SamplingError('empty'))), EXIT_VALIDATION)
        self.assertEqual(exit_code_for(PipelineStageError('fit', ModelFitError('x'))), EXIT_FAILURE)


class DateManagerTests(SimpleTestCase):

    def test_period_month(self):
        self.assertEqual(periodMonth(date(2007, 1, 1), 1), date(2007, 1, 1))
        self.assertEqual(periodMonth(date(2007, 11, 1), 3), date(2008, 1, 1))

    def test_period_label(self):
        self.assertEqual(periodLabel(date(2007, 1, 1), 41), '2010-05')
        self.assertIsNone(periodLabel(None, 5))
