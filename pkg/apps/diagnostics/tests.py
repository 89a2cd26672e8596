import io
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.core.exceptions import DiagnosticError, UndefinedCurveError
from apps.core.models import SpellDataset
from apps.core.testing import spell_dataset
from apps.cox.services import CoxEngine
from apps.spells.services import SpellBuilderService
from apps.synthgen.models import CovariateSpec, GeneratorSpec
from apps.synthgen.services import GeneratorService
from apps.utils.baseSerializers import load_validated

from .models import KSMode, MarkerSet, TROCConfig, TROCVariant
from .serializers import TROCConfigSerializer
from .services import DiagnosticsService, LN2


def _tfd(n_loans, beta, hazard, max_horizon, seed):
    spec = GeneratorSpec(n_loans=n_loans, max_horizon=max_horizon, true_beta=beta, baseline_hazards=(hazard,),
                         seed=seed)
    return SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'tfd')


def _markers(values, times, status, spell_index=None):
    values = np.asarray(values, dtype=float)
    spell_index = np.arange(len(values)) if spell_index is None else np.asarray(spell_index)
    return MarkerSet(values, spell_index, np.asarray(times, dtype=np.int64), np.asarray(status, dtype=np.int64))


def _brute_force_c(times, scores, events, entries, strata):
    concordant = tied = comparable = 0
    for i in range(len(times)):
        if not events[i]:
            continue
        for j in range(len(times)):
            if strata[j] != strata[i] or times[j] <= times[i] or entries[j] >= times[i]:
                continue
            comparable += 1
            if scores[i] > scores[j]:
                concordant += 1
            elif scores[i] == scores[j]:
                tied += 1
    return (concordant + 0.5 * tied) / comparable


class ConcordanceTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(5)
        self.times = rng.integers(1, 11, size=20)
        self.entries = np.array([rng.integers(0, t) for t in self.times])
        self.events = rng.random(20) < 0.6
        self.scores = np.round(rng.normal(size=20), 1)
        self.strata = rng.integers(1, 3, size=20)

    def test_matches_pair_enumeration(self):
        counts = DiagnosticsService.concordance(self.times, self.scores, self.events, self.entries)
        expected = _brute_force_c(self.times, self.scores, self.events, self.entries, np.zeros(20))
        self.assertEqual(counts.c_index, expected)

    def test_strata_restrict_pairs(self):
        counts = DiagnosticsService.concordance(self.times, self.scores, self.events, self.entries, self.strata)
        expected = _brute_force_c(self.times, self.scores, self.events, self.entries, self.strata)
        self.assertEqual(counts.c_index, expected)

    def test_constant_score(self):
        counts = DiagnosticsService.concordance(self.times, np.zeros(20), self.events, self.entries)
        self.assertEqual(counts.c_index, 0.5)

    def test_increasing_transform(self):
        plain = DiagnosticsService.concordance(self.times, self.scores, self.events, self.entries)
        mapped = DiagnosticsService.concordance(self.times, np.exp(3 * self.scores), self.events, self.entries)
        self.assertEqual(plain, mapped)

    def test_perfect_ordering_from_fit(self):
        ds = spell_dataset([1, 2, 3, 4], [1, 1, 1, 1], {'x': [4.0, 3.0, 2.0, 1.0]})
        fit = CoxEngine.fit_fixed(ds, [1.0])
        self.assertEqual(DiagnosticsService.harrell_c(fit, ds), 1.0)

    def test_no_comparable_pairs(self):
        ds = spell_dataset([1, 2], [0, 1], {'x': [0.0, 1.0]})
        fit = CoxEngine.fit_fixed(ds, [0.5])
        with self.assertRaises(DiagnosticError):
            DiagnosticsService.harrell_c(fit, ds)


class CoxSnellTests(SimpleTestCase):

    def setUp(self):
        self.ds = spell_dataset([1, 3, 4], [0, 1, 0], {'x': [0.0, 1.0, 0.0]})
        self.fit = CoxEngine.fit_fixed(self.ds, [0.0])

    def test_median_adjustment(self):
        residuals = DiagnosticsService.cox_snell_residuals(self.fit, self.ds)
        # one failure at t=3 with two spells at risk
        np.testing.assert_allclose(residuals.values, [LN2, 0.5, 0.5 + LN2])
        self.assertEqual(residuals.events.tolist(), [False, True, False])

    def test_unadjusted(self):
        residuals = DiagnosticsService.cox_snell_residuals(self.fit, self.ds, adjust='none')
        np.testing.assert_allclose(residuals.values, [0.0, 0.5, 0.5])

    def test_unknown_adjustment(self):
        with self.assertRaises(DiagnosticError):
            DiagnosticsService.cox_snell_residuals(self.fit, self.ds, adjust='mean')


class KolmogorovSmirnovTests(SimpleTestCase):

    def test_zero_residuals(self):
        result = DiagnosticsService.ks_statistic(np.zeros(50))
        self.assertEqual(result.statistic, 1.0)
        self.assertEqual(result.one_minus_d, 0.0)
        self.assertEqual(result.n, 50)

    def test_identical_samples(self):
        values = np.random.default_rng(0).exponential(size=200)
        result = DiagnosticsService.ks_statistic(values, mode=KSMode.TWO_SAMPLE, reference=values)
        self.assertEqual(result.statistic, 0.0)

    def test_two_sample_is_seeded(self):
        values = np.random.default_rng(1).exponential(size=300)
        first = DiagnosticsService.ks_statistic(values, mode='two_sample', seed=7)
        again = DiagnosticsService.ks_statistic(values, mode='two_sample', seed=7)
        self.assertEqual(first.statistic, again.statistic)

    def test_empty(self):
        with self.assertRaises(DiagnosticError):
            DiagnosticsService.ks_statistic(np.zeros(0))

    def test_well_specified_model(self):
        ds = _tfd(2000, (0.5,), 0.02, 240, seed=12)
        fit = CoxEngine.fit(ds)
        residuals = DiagnosticsService.cox_snell_residuals(fit, ds)
        self.assertTrue((residuals.values >= 0).all())
        self.assertTrue((residuals.values[~residuals.events] >= LN2).all())
        self.assertLessEqual(DiagnosticsService.ks_statistic(residuals).statistic, 0.05)

    def test_omitting_strong_covariate_moves_residuals_away(self):
        for seed in range(5):
            ds = _tfd(2000, (0.5, 1.5), 0.02, 240, seed=100 + seed)
            right = CoxEngine.fit(ds)
            wrong = CoxEngine.fit(ds, covariates=['x1'])
            d_right = DiagnosticsService.ks_statistic(DiagnosticsService.cox_snell_residuals(right, ds)).statistic
            d_wrong = DiagnosticsService.ks_statistic(DiagnosticsService.cox_snell_residuals(wrong, ds)).statistic
            self.assertGreater(d_wrong, d_right, f'seed {seed}')


class TROCToyTests(SimpleTestCase):

    def test_constant_marker_is_the_diagonal(self):
        markers = _markers(np.ones(6), [1, 2, 3, 8, 9, 10], [1, 1, 0, 1, 0, 0])
        curve = DiagnosticsService.troc_classical(markers, TROCConfig(lambda_n=0.2), horizon=5)
        self.assertEqual(curve.points[0], (0.0, 0.0))
        self.assertEqual(curve.points[-1], (1.0, 1.0))
        self.assertEqual(DiagnosticsService.tauc(curve), 0.5)

    def test_separating_marker(self):
        # five failures by t=5 carry the five highest markers
        markers = _markers([11, 12, 13, 14, 15, 1, 2, 3, 4, 5], [1, 2, 3, 4, 5] + [20] * 5, [1] * 5 + [0] * 5)
        curve = DiagnosticsService.troc_classical(markers, TROCConfig(lambda_n=0.05), horizon=10)
        self.assertIn((0.0, 1.0), curve.points)
        self.assertAlmostEqual(DiagnosticsService.tauc(curve), 1.0, places=12)

    def test_two_spell_double_sums(self):
        # spell A: markers 1 and 3, fails at 2; spell B: marker 2, censored at 5
        markers = _markers([1.0, 3.0, 2.0], [2, 2, 5], [1, 1, 0], spell_index=[0, 0, 1])
        curve = DiagnosticsService.troc_clustered(markers, TROCConfig(lambda_n=0.45), horizon=3)
        self.assertEqual(curve.thresholds.tolist(), [np.inf, 3.0, 2.0, 1.0, -np.inf])
        np.testing.assert_allclose(curve.raw_fpr, [0.0, 0.0, 0.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(curve.raw_tpr, [0.0, 0.0, 1.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(curve.fpr, curve.raw_fpr, atol=1e-12)
        np.testing.assert_allclose(curve.tpr, curve.raw_tpr, atol=1e-12)
        self.assertAlmostEqual(DiagnosticsService.tauc(curve), 1.0, places=12)

    def test_undefined_without_failures(self):
        markers = _markers([0.1, 0.2, 0.3], [4, 5, 6], [1, 1, 0])
        with self.assertRaises(UndefinedCurveError):
            DiagnosticsService.troc_classical(markers, TROCConfig(), horizon=2)

    def test_lambda_outside_range(self):
        markers = _markers([0.1, 0.2], [1, 5], [1, 0])
        with self.assertRaises(DiagnosticError):
            DiagnosticsService.troc_classical(markers, TROCConfig(lambda_n=0.5), horizon=3)

    def test_classical_needs_one_marker_per_spell(self):
        markers = _markers([0.1, 0.2, 0.3], [2, 2, 5], [1, 1, 0], spell_index=[0, 0, 1])
        with self.assertRaises(DiagnosticError):
            DiagnosticsService.troc_classical(markers, TROCConfig(), horizon=3)


class TROCPropertyTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(17)
        n = 300
        values = rng.normal(size=n)
        times = np.maximum(1, np.ceil(rng.exponential(20.0 * np.exp(-values)))).astype(np.int64)
        status = (rng.random(n) < 0.8).astype(np.int64)
        cls.single = _markers(values, times, status)
        cls.config = TROCConfig(lambda_n=0.1, horizons=(6, 12))

        spell_index = np.repeat(np.arange(n), 3)
        cls.multi = MarkerSet(np.repeat(values, 3) + rng.normal(scale=0.3, size=3 * n), spell_index,
                              times[spell_index], status[spell_index])

    def test_clustered_reduces_to_classical(self):
        classical = DiagnosticsService.troc_classical(self.single, self.config, 12)
        clustered = DiagnosticsService.troc_clustered(self.single, self.config, 12)
        np.testing.assert_allclose(clustered.raw_fpr, classical.raw_fpr, rtol=0, atol=1e-12)
        np.testing.assert_allclose(clustered.raw_tpr, classical.raw_tpr, rtol=0, atol=1e-12)
        self.assertEqual(clustered.variant, TROCVariant.CLUSTERED)

    def test_monotone_transform_invariance(self):
        for markers, build in ((self.single, DiagnosticsService.troc_classical),
                               (self.multi, DiagnosticsService.troc_clustered)):
            plain = build(markers, self.config, 12)
            mapped = build(markers.transformed(lambda m: np.exp(2.0 * m) + 1.0), self.config, 12)
            np.testing.assert_allclose(mapped.fpr, plain.fpr, rtol=0, atol=1e-12)
            np.testing.assert_allclose(mapped.tpr, plain.tpr, rtol=0, atol=1e-12)

    def test_cleaned_curve_is_monotone(self):
        curve = DiagnosticsService.troc_clustered(self.multi, self.config, 6)
        self.assertEqual(curve.points[0], (0.0, 0.0))
        self.assertEqual(curve.points[-1], (1.0, 1.0))
        self.assertTrue((np.diff(curve.fpr) >= 0).all())
        self.assertTrue((np.diff(curve.tpr) >= 0).all())
        self.assertGreater(DiagnosticsService.tauc(curve), 0.5)

    def test_clustered_rates_stay_non_negative(self):
        clustered = DiagnosticsService.troc_clustered(self.multi, self.config, 6)
        classical = DiagnosticsService.troc_classical(self.single, self.config, 6)
        self.assertGreaterEqual(clustered.raw_tpr.min(), -1e-12)
        self.assertGreaterEqual(clustered.raw_fpr.min(), -1e-12)
        self.assertAlmostEqual(DiagnosticsService.tauc(clustered), DiagnosticsService.tauc(classical), delta=0.1)

    def test_tauc_is_the_trapezoid(self):
        curve = DiagnosticsService.troc_classical(self.single, self.config, 12)
        area = sum((curve.fpr[k + 1] - curve.fpr[k]) * (curve.tpr[k + 1] + curve.tpr[k]) / 2
                   for k in range(len(curve.fpr) - 1))
        self.assertAlmostEqual(DiagnosticsService.tauc(curve), area, places=12)

    def test_curves_by_horizon(self):
        config = replace(self.config, horizons=(0, 6, 12))
        curves = DiagnosticsService.troc_curves(self.multi, config, threads=1)
        self.assertEqual(list(curves), [0, 6, 12])
        self.assertIsNone(curves[0])
        threaded = DiagnosticsService.troc_curves(self.multi, config, threads=3)
        np.testing.assert_array_equal(threaded[12].tpr, curves[12].tpr)

    def test_curve_csv(self):
        buffer = io.StringIO()
        DiagnosticsService.write_curve(DiagnosticsService.troc_classical(self.single, self.config, 6), buffer)
        lines = buffer.getvalue().splitlines()
        self.assertEqual(lines[0], 'p_c,fpr,tpr')
        self.assertTrue(lines[1].startswith('inf,'))


class ModelMarkerTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        spec = GeneratorSpec(n_loans=400, max_horizon=48, true_beta=(0.8,), baseline_hazards=(0.04, 0.06),
                             cure_prob=0.5, censor_min=24, seed=6)
        cls.ds = SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'ag')
        cls.fit = CoxEngine.fit(cls.ds)

    def test_marker_counts(self):
        spell = DiagnosticsService.spell_markers(self.fit, self.ds)
        period = DiagnosticsService.period_markers(self.fit, self.ds)
        self.assertEqual(len(spell), self.ds.n_spells)
        self.assertEqual(len(period), len(self.ds))
        self.assertEqual(period.n_spells, self.ds.n_spells)

    def test_informative_model_discriminates(self):
        self.assertGreater(DiagnosticsService.harrell_c(self.fit, self.ds), 0.55)
        config = TROCConfig(horizons=(1, 12))
        curves = DiagnosticsService.troc_curves(DiagnosticsService.period_markers(self.fit, self.ds), config)
        # opening months are always performing, so nothing fails by t=1
        self.assertIsNone(curves[1])
        self.assertGreater(DiagnosticsService.tauc(curves[12]), 0.5)


class ScreeningTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        spec = GeneratorSpec(n_loans=600, max_horizon=36, true_beta=(0.9, 0.0),
                             covariates=(CovariateSpec('signal'), CovariateSpec('noise')),
                             baseline_hazards=(0.05,), seed=44)
        ds = SpellBuilderService.build_spells(GeneratorService.generate(spec, threads=1), 'tfd')
        frame = ds.frame.assign(copy=ds.frame['signal'], flat=1.0)
        cls.ds = SpellDataset(ds.technique, ('signal', 'noise', 'copy', 'flat'), frame)

    def test_ranking(self):
        report = DiagnosticsService.screen_covariates(self.ds, threads=1)
        self.assertEqual(report.ranking, ['signal', 'copy', 'noise'])
        self.assertEqual(list(report.rejected), ['flat'])
        self.assertEqual(report.results[0].c_statistic, report.results[1].c_statistic)
        self.assertGreater(report.results[0].c_statistic, report.results[2].c_statistic)
        self.assertEqual(report.as_frame()['rank'].tolist(), [1, 2, 3])

    def test_correlated_pairs(self):
        screen = DiagnosticsService.correlation_screen(self.ds, ['signal', 'noise', 'copy'], threshold=0.9)
        self.assertEqual([(a, b) for a, b, _ in screen.pairs], [('signal', 'copy')])
        self.assertAlmostEqual(screen.pairs[0][2], 1.0, places=12)
        self.assertEqual(screen.matrix.shape, (3, 3))


class TROCConfigSerializerTests(SimpleTestCase):

    def test_horizons_sorted_and_unique(self):
        config = load_validated(TROCConfigSerializer, {'horizons': [24, 3, 3], 'lambda_n': 0.1})
        self.assertEqual(config.horizons, (3, 24))
        self.assertEqual(config.lambda_n, 0.1)

    def test_lambda_bounds(self):
        for value in (0.0, 0.5, 0.7):
            with self.assertRaises(ValidationError):
                load_validated(TROCConfigSerializer, {'lambda_n': value})

    def test_threshold_step_bounds(self):
        with self.assertRaises(ValidationError):
            load_validated(TROCConfigSerializer, {'threshold_step': 0.0})
