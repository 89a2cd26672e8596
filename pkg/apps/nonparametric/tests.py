import io

import numpy as np
from django.test import SimpleTestCase

from apps.core.exceptions import TermStructureError
from apps.core.testing import spell_dataset
from apps.cox.services import CoxEngine
from apps.spells.services import SpellBuilderService
from apps.synthgen.models import GeneratorSpec
from apps.synthgen.services import GeneratorService

from .models import Denominator, TermStructure, TermStructureKind
from .services import TermStructureService


def _structure(times, probs, kind=TermStructureKind.ACTUAL):
    return TermStructure(np.asarray(times, dtype=np.int64), np.asarray(probs, dtype=float), kind)


class KaplanMeierTests(SimpleTestCase):

    def test_three_spell_toy(self):
        ds = spell_dataset([1, 2, 3], [1, 1, 0], {'x': [0.0, 0.0, 0.0]})
        km = TermStructureService.kaplan_meier(ds)
        self.assertEqual(km.times.tolist(), [1, 2])
        np.testing.assert_allclose(km.survival, [2 / 3, 1 / 3])
        self.assertEqual(km.n_at_risk.tolist(), [3, 2])

        actual = TermStructureService.actual_term_structure(ds, horizon=10)
        np.testing.assert_allclose(actual.probs, [1 / 3, 1 / 3])

    def test_left_truncated_entries_join_later(self):
        ds = spell_dataset([2, 5, 4], [1, 1, 0], {'x': [0.0, 0.0, 0.0]}, entries=[0, 3, 0])
        km = TermStructureService.kaplan_meier(ds)
        # at t=2 only spells one and three are at risk; at t=5 only spell two
        self.assertEqual(km.n_at_risk.tolist(), [2, 1])
        np.testing.assert_allclose(km.survival, [0.5, 0.0])

    def test_survival_at(self):
        ds = spell_dataset([1, 2, 3], [1, 1, 0], {'x': [0.0, 0.0, 0.0]})
        km = TermStructureService.kaplan_meier(ds)
        np.testing.assert_allclose(km.survival_at([0, 1, 2, 7]), [1.0, 2 / 3, 1 / 3, 1 / 3])


class ActualTermStructureTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        spec = GeneratorSpec(n_loans=300, max_horizon=240, true_beta=(0.0,), baseline_hazards=(0.1,), seed=8)
        cls.ds = SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'tfd')

    def test_sums_to_one_when_every_spell_defaults(self):
        self.assertEqual(self.ds.n_events, self.ds.n_spells)
        actual = TermStructureService.actual_term_structure(self.ds, horizon=240)
        self.assertAlmostEqual(actual.total, 1.0, delta=1e-9)

    def test_probabilities_telescope_survival(self):
        km = TermStructureService.kaplan_meier(self.ds)
        actual = TermStructureService.actual_term_structure(self.ds, horizon=240)
        expected = km.survival_at(actual.times - 1) - km.survival_at(actual.times)
        self.assertLessEqual(np.max(np.abs(actual.probs - expected)), 1e-12)

    def test_horizon_truncates(self):
        actual = TermStructureService.actual_term_structure(self.ds, horizon=12)
        self.assertLessEqual(actual.times.max(), 12)

    def test_invalid_horizon(self):
        with self.assertRaises(TermStructureError):
            TermStructureService.actual_term_structure(self.ds, horizon=0)


class PredictedTermStructureTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        spec = GeneratorSpec(n_loans=2000, max_horizon=60, true_beta=(0.0,), baseline_hazards=(0.005,), seed=31)
        cls.ds = SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'pwp')
        cls.fit = CoxEngine.fit_fixed(cls.ds, [0.0])

    def test_matches_actual_without_covariate_effect(self):
        actual = TermStructureService.actual_term_structure(self.ds, horizon=60)
        predicted = TermStructureService.predicted_term_structure(self.fit, self.ds, horizon=60)
        grid = np.arange(1, 61)
        gap = np.abs(actual.value_at(grid) - predicted.value_at(grid))
        self.assertLess(gap.max(), 1e-3)

    def test_denominators(self):
        active = TermStructureService.predicted_term_structure(self.fit, self.ds, horizon=60)
        every = TermStructureService.predicted_term_structure(self.fit, self.ds, horizon=60,
                                                             denominator=Denominator.ALL)
        np.testing.assert_array_equal(active.times, every.times)
        self.assertTrue((every.n_at_risk == self.ds.n_spells).all())
        np.testing.assert_allclose(every.probs, active.probs * active.n_at_risk / self.ds.n_spells)

    def test_empty_below_first_stop(self):
        ds = spell_dataset([3, 4], [1, 0], {'x': [0.0, 1.0]}, entries=[2, 3])
        fit = CoxEngine.fit_fixed(ds, [0.0])
        self.assertEqual(len(TermStructureService.predicted_term_structure(fit, ds, horizon=2)), 0)


class ComparisonTests(SimpleTestCase):

    def test_mae(self):
        a = _structure([1, 2], [0.1, 0.2])
        b = _structure([1, 2], [0.0, 0.4], TermStructureKind.PREDICTED)
        self.assertAlmostEqual(TermStructureService.term_structure_mae(a, b, 1, 3), 0.15, places=12)
        self.assertEqual(TermStructureService.term_structure_mae(a, a, 1, 3), 0.0)

    def test_mae_needs_a_window(self):
        a = _structure([1], [0.1])
        with self.assertRaises(TermStructureError):
            TermStructureService.term_structure_mae(a, a, 5, 5)

    def test_overlay_file(self):
        a = _structure([1, 3], [0.1, 0.3])
        b = _structure([1, 2], [0.2, 0.2], TermStructureKind.PREDICTED)
        table = TermStructureService.overlay(a, b)
        self.assertEqual(table['t'].tolist(), [1, 2, 3])
        np.testing.assert_allclose(table['abs_gap'], [0.1, 0.2, 0.3])
        buffer = io.StringIO()
        TermStructureService.write_overlay(a, b, buffer)
        self.assertEqual(buffer.getvalue().splitlines()[0], 't f_actual f_predicted abs_gap')
