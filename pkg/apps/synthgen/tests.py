import math
from datetime import date

import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.core.models import LoanState
from apps.core.services import PanelService
from apps.spells.services import SpellBuilderService
from apps.utils.baseSerializers import load_validated

from .models import CovariateKind, CovariateSpec, GeneratorSpec
from .serializers import GeneratorSpecSerializer
from .services import GeneratorService


def _spec(**overrides):
    params = dict(n_loans=200, max_horizon=48, true_beta=(0.5,), baseline_hazards=(0.04, 0.08),
                  cure_prob=0.4, settle_hazard=0.01, censor_min=24, max_left_truncation=5, seed=3)
    params.update(overrides)
    return GeneratorSpec(**params)


class GenerateTests(SimpleTestCase):

    def test_panel_is_valid(self):
        panel = GeneratorService.generate(_spec(), threads=1)
        self.assertEqual(panel.n_loans, 200)
        self.assertEqual(PanelService.validate_panel(panel), [])
        self.assertEqual(panel.loan_ids[0], 'L000001')

    def test_same_seed_same_panel(self):
        first = GeneratorService.generate(_spec(), threads=1)
        again = GeneratorService.generate(_spec(), threads=1)
        other = GeneratorService.generate(_spec(seed=4), threads=1)
        self.assertTrue(first.equals(again))
        self.assertFalse(first.equals(other))

    def test_threads_do_not_change_panel(self):
        single = GeneratorService.generate(_spec(), threads=1)
        many = GeneratorService.generate(_spec(), threads=4)
        self.assertTrue(single.frame.equals(many.frame))

    def test_observation_window(self):
        frame = GeneratorService.generate(_spec(), threads=1).frame
        first = frame.groupby('loan_id')['period'].min()
        self.assertTrue(first.between(1, 6).all())
        self.assertLessEqual(frame['period'].max(), 48)

    def test_loans_without_exits_run_past_censor_min(self):
        spec = _spec(baseline_hazards=(0.0,), cure_prob=0.0, settle_hazard=0.0)
        frame = GeneratorService.generate(spec, threads=1).frame
        self.assertTrue((frame['state'] == LoanState.PERFORMING).all())
        self.assertTrue(frame.groupby('loan_id')['period'].max().between(24, 48).all())

    def test_no_cure_means_single_spells(self):
        panel = GeneratorService.generate(_spec(cure_prob=0.0), threads=1)
        summary = SpellBuilderService.spell_summary(SpellBuilderService.build_spells(panel, 'ag'))
        self.assertEqual(set(summary.max_spell_histogram), {1})

    def test_cure_probability_adds_spells(self):
        rare = SpellBuilderService.build_spells(GeneratorService.generate(_spec(cure_prob=0.1), threads=1), 'ag')
        often = SpellBuilderService.build_spells(GeneratorService.generate(_spec(cure_prob=0.9), threads=1), 'ag')
        self.assertGreater(often.n_spells, rare.n_spells)

    def test_pooled_default_rate(self):
        spec = GeneratorSpec(n_loans=2000, max_horizon=60, true_beta=(0.0,), baseline_hazards=(0.05,), seed=9)
        ds = SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'ag')
        # opening months carry no draw
        trials = len(ds) - ds.n_spells
        self.assertAlmostEqual(ds.n_events / trials, 1.0 - math.exp(-0.05), delta=0.005)

    def test_coefficient_count_must_match(self):
        spec = _spec(covariates=(CovariateSpec('a'), CovariateSpec('b')))
        with self.assertRaises(ValueError):
            GeneratorService.generate(spec, threads=1)

    def test_calendar_origin_carries_over(self):
        panel = GeneratorService.generate(_spec(calendar_origin=date(2010, 3, 1), n_loans=5), threads=1)
        self.assertEqual(panel.calendar_label(1), '2010-03')


class CovariatePathTests(SimpleTestCase):

    def test_kinds(self):
        covariates = (CovariateSpec('level'), CovariateSpec('flag', kind=CovariateKind.BINARY, prob=0.3),
                      CovariateSpec('macro', kind=CovariateKind.AR1, phi=0.8))
        spec = _spec(covariates=covariates, true_beta=(0.2, 0.4, -0.1))
        frame = GeneratorService.generate(spec, threads=1).frame
        per_loan = frame.groupby('loan_id')
        self.assertTrue((per_loan['level'].nunique() == 1).all())
        self.assertTrue(frame['flag'].isin([0.0, 1.0]).all())
        self.assertTrue((per_loan['macro'].nunique() > 1).any())

    def test_default_names(self):
        self.assertEqual(_spec(true_beta=(0.1, 0.2)).covariate_names, ('x1', 'x2'))

    def test_later_spells_reuse_last_hazard(self):
        spec = _spec(baseline_hazards=(0.01, 0.02))
        self.assertEqual(spec.hazard_for_spell(1), 0.01)
        self.assertEqual(spec.hazard_for_spell(5), 0.02)


class GeneratorSpecSerializerTests(SimpleTestCase):

    def _data(self, **overrides):
        data = {'n_loans': 10, 'max_horizon': 24, 'true_beta': [0.5], 'baseline_hazards': [0.02, 0.04],
                'covariates': [{'name': 'ltv', 'kind': 'ar1', 'phi': 0.5}], 'cure_prob': 0.3}
        data.update(overrides)
        return data

    def test_builds_spec(self):
        spec = load_validated(GeneratorSpecSerializer, self._data())
        self.assertIsInstance(spec, GeneratorSpec)
        self.assertEqual(spec.baseline_hazards, (0.02, 0.04))
        self.assertEqual(spec.covariates[0].kind, CovariateKind.AR1)
        self.assertIsNone(spec.censor_min)

    def test_hazard_of_one(self):
        with self.assertRaises(ValidationError):
            load_validated(GeneratorSpecSerializer, self._data(baseline_hazards=[1.0]))

    def test_beta_length(self):
        with self.assertRaises(ValidationError):
            load_validated(GeneratorSpecSerializer, self._data(true_beta=[0.5, 0.1]))

    def test_censor_window(self):
        with self.assertRaises(ValidationError):
            load_validated(GeneratorSpecSerializer, self._data(censor_min=30))

    def test_ar1_coefficient(self):
        with self.assertRaises(ValidationError):
            load_validated(GeneratorSpecSerializer, self._data(covariates=[{'name': 'm', 'kind': 'ar1', 'phi': 1.0}]))
