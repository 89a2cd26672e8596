import io

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from apps.core.exceptions import SamplingError
from apps.core.models import ResolutionType
from apps.core.testing import appendix_panel
from apps.spells.services import SpellBuilderService
from apps.synthgen.models import GeneratorSpec
from apps.synthgen.services import GeneratorService

from .models import ResolutionSeries
from .services import SamplingService


def _portfolio(n_loans, seed=3):
    spec = GeneratorSpec(n_loans=n_loans, max_horizon=48, true_beta=(0.3,), baseline_hazards=(0.04, 0.06),
                         cure_prob=0.4, settle_hazard=0.01, writeoff_hazard=0.002, censor_min=24, seed=seed)
    return GeneratorService.generate(spec, threads=1)


def _series(times, rates, kappa=ResolutionType.DEFAULT):
    times = np.asarray(times, dtype=np.int64)
    return ResolutionSeries(times, np.asarray(rates, dtype=float), kappa, np.ones(len(times), dtype=np.int64))


class SplitSampleTests(SimpleTestCase):

    def test_single_stratum_counts(self):
        panel = _portfolio(10)
        strata = {loan_id: 'all' for loan_id in panel.loan_ids}
        train, valid = SamplingService.split_sample(panel, 0.7, strata, seed=5)
        self.assertEqual(train.n_loans, 7)
        self.assertEqual(valid.n_loans, 3)
        self.assertFalse(set(train.loan_ids) & set(valid.loan_ids))
        self.assertEqual(len(train) + len(valid), len(panel))

    def test_two_strata(self):
        panel = _portfolio(100)
        loans = panel.loan_ids
        strata = {loan_id: ('a' if k < 50 else 'b') for k, loan_id in enumerate(loans)}
        train, valid = SamplingService.split_sample(panel, 0.7, strata, seed=9)
        train_labels = pd.Series([strata[loan_id] for loan_id in train.loan_ids]).value_counts()
        valid_labels = pd.Series([strata[loan_id] for loan_id in valid.loan_ids]).value_counts()
        self.assertEqual(train_labels.to_dict(), {'a': 35, 'b': 35})
        self.assertEqual(valid_labels.to_dict(), {'a': 15, 'b': 15})

    def test_deterministic_for_seed(self):
        panel = _portfolio(60)
        strata = {loan_id: 'all' for loan_id in panel.loan_ids}
        first, _ = SamplingService.split_sample(panel, 0.7, strata, seed=1)
        again, _ = SamplingService.split_sample(panel, 0.7, strata, seed=1)
        other, _ = SamplingService.split_sample(panel, 0.7, strata, seed=2)
        self.assertEqual(first.loan_ids, again.loan_ids)
        self.assertEqual(other.n_loans, first.n_loans)
        self.assertNotEqual(first.loan_ids, other.loan_ids)

    def test_fraction_outside_open_interval(self):
        panel = appendix_panel()
        strata = {loan_id: 'all' for loan_id in panel.loan_ids}
        for fraction in (0.0, 1.0):
            with self.assertRaises(SamplingError):
                SamplingService.split_sample(panel, fraction, strata, seed=0)

    def test_unlabelled_loan(self):
        panel = appendix_panel()
        with self.assertRaises(SamplingError):
            SamplingService.split_sample(panel, 0.5, {'1': 'a', '2': 'a'}, seed=0)


class ResolutionRateTests(SimpleTestCase):

    def setUp(self):
        self.ag = SpellBuilderService.build_spells(appendix_panel(), 'ag')

    def test_appendix_default_rates(self):
        series = SamplingService.resolution_rate(self.ag, ResolutionType.DEFAULT)
        self.assertEqual(series.times.tolist(), [3, 4, 9, 13, 23, 41])
        self.assertEqual(series.rate_at(4), 1.0)
        self.assertEqual(series.rate_at(13), 0.0)
        self.assertEqual(series.rate_at(3), 0.0)
        self.assertEqual(series.n_at_risk.tolist(), [1, 2, 1, 1, 1, 1])
        self.assertIsNone(series.rate_at(5))
        self.assertEqual(series.labels[1], '2007-04')

    def test_pwp_uses_calendar_stop(self):
        pwp = SpellBuilderService.build_spells(appendix_panel(), 'pwp')
        series = SamplingService.resolution_rate(pwp, ResolutionType.SETTLED)
        self.assertEqual(series.rate_at(13), 1.0)

    def test_rates_partition_outcomes(self):
        ds = SpellBuilderService.build_spells(_portfolio(300), 'ag')
        total = sum(SamplingService.resolution_rate(ds, kappa).rates for kappa in ResolutionType)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_all_censored(self):
        ds = SpellBuilderService.build_spells(appendix_panel().subset(['2']), 'ag')
        series = SamplingService.resolution_rate(ds, ResolutionType.DEFAULT)
        self.assertTrue((series.rates == 0.0).all())

    def test_cohort_start_is_not_offered(self):
        with self.assertRaises(SamplingError):
            SamplingService.resolution_rate(self.ag, ResolutionType.DEFAULT, scale='cohort_start')

    def test_by_spell_number(self):
        by_spell = SamplingService.resolution_rates_by_spell(self.ag, ResolutionType.DEFAULT)
        self.assertEqual(sorted(by_spell), [1, 2, 3])
        self.assertEqual(by_spell[2].rate_at(23), 1.0)

    def test_series_csv(self):
        buffer = io.StringIO()
        SamplingService.write_series(SamplingService.resolution_rate(self.ag, 1), buffer)
        header = buffer.getvalue().splitlines()[0]
        self.assertEqual(header, 't_prime,n,rate,calendar_month')


class AverageDiscrepancyTests(SimpleTestCase):

    def test_identity(self):
        a = _series([1, 2, 3], [0.1, 0.2, 0.3])
        self.assertEqual(SamplingService.avg_discrepancy(a, a), 0.0)

    def test_hand_arithmetic(self):
        a = _series([1, 2], [0.2, 0.4])
        b = _series([1, 2], [0.1, 0.5])
        self.assertAlmostEqual(SamplingService.avg_discrepancy(a, b), 0.1, places=12)
        self.assertEqual(SamplingService.avg_discrepancy(a, b), SamplingService.avg_discrepancy(b, a))

    def test_only_shared_periods_count(self):
        a = _series([1, 2, 5], [0.2, 0.4, 1.0])
        b = _series([2, 3], [0.1, 0.9])
        self.assertAlmostEqual(SamplingService.avg_discrepancy(a, b), 0.3, places=12)

    def test_no_shared_periods(self):
        with self.assertRaises(SamplingError):
            SamplingService.avg_discrepancy(_series([1], [0.1]), _series([2], [0.1]))

    def test_kappa_mismatch(self):
        with self.assertRaises(SamplingError):
            SamplingService.avg_discrepancy(_series([1], [0.1]), _series([1], [0.1], ResolutionType.SETTLED))

    def test_train_valid_against_recount(self):
        panel = _portfolio(1000, seed=21)
        full = SpellBuilderService.build_spells(panel, 'ag')
        strata = {loan_id: 'all' for loan_id in panel.loan_ids}
        train_panel, valid_panel = SamplingService.split_sample(panel, 0.7, strata, seed=4)
        train = full.for_loans(train_panel.loan_ids)
        valid = full.for_loans(valid_panel.loan_ids)

        def recount(ds):
            spells = ds.spells()
            rates = {}
            for t, group in spells.groupby('period'):
                rates[int(t)] = float((group['resolution'] == 1).mean())
            return rates

        r_train, r_valid = recount(train), recount(valid)
        shared = sorted(set(r_train) & set(r_valid))
        expected = np.mean([abs(r_train[t] - r_valid[t]) for t in shared])

        report = SamplingService.representativeness(full, train, valid)
        self.assertAlmostEqual(report.train_vs_valid, expected, places=12)
        self.assertGreaterEqual(report.full_vs_train, 0.0)
        self.assertLessEqual(report.full_vs_valid, 1.0)
