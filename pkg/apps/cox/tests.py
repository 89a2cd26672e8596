import json

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError
from scipy import optimize

from apps.core.exceptions import ModelFitError, RankDeficiencyError, SchemaMismatchError
from apps.core.models import Technique
from apps.core.testing import appendix_panel, spell_dataset
from apps.spells.services import SpellBuilderService
from apps.synthgen.models import GeneratorSpec
from apps.synthgen.services import GeneratorService
from apps.utils.baseSerializers import load_validated

from .models import CoxFit, FitOptions, Ties
from .serializers import CoxFitSerializer, FitOptionsSerializer
from .services import CoxEngine

ORACLE_X = np.array([1, 0, 1, 0, 1, 0], dtype=float)
ORACLE_TIMES = np.arange(1, 7)
ORACLE_STATUS = np.array([1, 1, 0, 1, 1, 0])


def _oracle_score(beta):
    score = 0.0
    for i in np.flatnonzero(ORACLE_STATUS):
        at_risk = ORACLE_TIMES >= ORACLE_TIMES[i]
        w = np.exp(beta * ORACLE_X[at_risk])
        score += ORACLE_X[i] - (w * ORACLE_X[at_risk]).sum() / w.sum()
    return score


def _tied_dataset():
    rng = np.random.default_rng(0)
    stops = np.array([1, 2, 2, 3, 3, 3, 4, 5, 5, 6, 6, 7])
    status = np.array([1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 0])
    return spell_dataset(stops, status, {'a': rng.normal(size=12), 'b': rng.binomial(1, 0.5, size=12)})


def _generate(**overrides):
    params = dict(n_loans=800, max_horizon=48, true_beta=(0.5, -0.3), baseline_hazards=(0.03,), seed=5)
    params.update(overrides)
    return GeneratorService.generate(GeneratorSpec(**params), threads=1)


class PartialLikelihoodTests(SimpleTestCase):

    def test_six_observation_oracle(self):
        ds = spell_dataset(ORACLE_TIMES, ORACLE_STATUS, {'x': ORACLE_X})
        fit = CoxEngine.fit(ds, FitOptions(ties=Ties.EFRON))
        expected = optimize.brentq(_oracle_score, -10.0, 10.0, xtol=1e-14)
        self.assertTrue(fit.converged)
        self.assertLessEqual(abs(fit.coefficient('x') - expected), 1e-6)

        best = optimize.minimize_scalar(lambda b: -CoxEngine.log_partial_likelihood(ds, [b])[0],
                                        bracket=(-2.0, 2.0))
        self.assertAlmostEqual(fit.beta[0], best.x, places=4)

    def test_gradient_and_hessian_match_finite_differences(self):
        ds = _tied_dataset()
        beta = np.array([0.3, -0.7])
        step = 1e-5
        for ties in Ties.CHOICES:
            _, grad, hess = CoxEngine.log_partial_likelihood(ds, beta, ties)
            numeric_grad = np.zeros(2)
            numeric_hess = np.zeros((2, 2))
            for j in range(2):
                shift = np.zeros(2)
                shift[j] = step
                up = CoxEngine.log_partial_likelihood(ds, beta + shift, ties)
                down = CoxEngine.log_partial_likelihood(ds, beta - shift, ties)
                numeric_grad[j] = (up[0] - down[0]) / (2 * step)
                numeric_hess[:, j] = (up[1] - down[1]) / (2 * step)
            np.testing.assert_allclose(grad, numeric_grad, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(hess, numeric_hess, rtol=1e-5, atol=1e-8)

    def test_log_likelihood_is_concave(self):
        ds = _tied_dataset()
        for beta in ([0.0, 0.0], [1.5, -2.0], [-3.0, 1.0]):
            hess = CoxEngine.log_partial_likelihood(ds, beta)[2]
            self.assertTrue((np.linalg.eigvalsh(hess) < 0).all())

    def test_efron_equals_breslow_without_ties(self):
        ds = spell_dataset(ORACLE_TIMES, ORACLE_STATUS, {'x': ORACLE_X})
        efron = CoxEngine.log_partial_likelihood(ds, [0.4], Ties.EFRON)[0]
        breslow = CoxEngine.log_partial_likelihood(ds, [0.4], Ties.BRESLOW)[0]
        self.assertAlmostEqual(efron, breslow, places=12)

    def test_unknown_ties(self):
        ds = _tied_dataset()
        with self.assertRaises(ValueError):
            CoxEngine.log_partial_likelihood(ds, [0.0, 0.0], 'exact')


class RiskSetTests(SimpleTestCase):

    def setUp(self):
        self.panel = appendix_panel()

    def test_tfd_risk_sets(self):
        ds = SpellBuilderService.build_spells(self.panel, 'tfd')
        sets = CoxEngine.build_risk_sets(ds)[0]
        loans = ds.frame['loan_id'].to_numpy()
        self.assertEqual([s.failure_time for s in sets], [4, 9])
        self.assertEqual(sorted(loans[list(sets[0].at_risk)]), ['1', '3'])
        self.assertEqual(sorted(loans[list(sets[0].event_set)]), ['1', '3'])
        self.assertEqual(list(loans[list(sets[1].at_risk)]), ['4'])

    def test_pwp_second_stratum(self):
        ds = SpellBuilderService.build_spells(self.panel, 'pwp')
        by_stratum = CoxEngine.build_risk_sets(ds)
        self.assertEqual(sorted(by_stratum), [1, 2])
        self.assertEqual([s.failure_time for s in by_stratum[1]], [4, 5])
        (second,) = by_stratum[2]
        self.assertEqual(second.failure_time, 4)
        rows = ds.frame.iloc[list(second.at_risk)]
        self.assertEqual(set(zip(rows['loan_id'], rows['spell_num'])), {('4', 2)})

    def test_no_events(self):
        ds = SpellBuilderService.build_spells(self.panel.subset(['2']), 'ag')
        self.assertEqual(CoxEngine.build_risk_sets(ds), {})


class FitTests(SimpleTestCase):

    def test_null_model_gives_nelson_aalen(self):
        ds = spell_dataset([1, 2, 2, 3, 4], [1, 1, 0, 1, 0], {'x': [0.1, 0.2, 0.3, 0.4, 0.5]})
        fit = CoxEngine.fit(ds, covariates=[])
        self.assertTrue(fit.converged)
        self.assertEqual(fit.p, 0)
        hazard = fit.baseline[0]
        self.assertEqual(hazard.times.tolist(), [1, 2, 3])
        np.testing.assert_allclose(hazard.increments, [1 / 5, 1 / 4, 1 / 2])
        self.assertEqual(fit.log_pl, fit.log_pl_null)

    def test_breslow_baseline_at_zero(self):
        ds = spell_dataset([1, 2, 3], [1, 1, 0], {'x': [0.5, -0.2, 1.0]})
        fit = CoxEngine.fit_fixed(ds, [0.0], ties=Ties.BRESLOW)
        np.testing.assert_allclose(fit.baseline[0].cumulative, [1 / 3, 1 / 3 + 1 / 2])
        self.assertTrue(fit.fixed)
        self.assertEqual(fit.message, 'coefficients supplied')

    def test_predict_survival(self):
        ds = spell_dataset([1, 2, 3], [1, 1, 0], {'x': [0.0, 0.0, 0.0]})
        fit = CoxEngine.fit_fixed(ds, [0.0], ties=Ties.BRESLOW)
        spell = pd.DataFrame({'entry': [0, 1, 2], 'stop': [1, 2, 3], 'x': [0.0, 0.0, 0.0]})
        curve = CoxEngine.predict_survival(fit, spell)
        self.assertEqual(curve.times.tolist(), [0, 1, 2, 3])
        np.testing.assert_allclose(curve.survival, [1.0, np.exp(-1 / 3), np.exp(-5 / 6), np.exp(-5 / 6)])

    def test_predict_survival_from_records(self):
        ds = SpellBuilderService.build_spells(appendix_panel(), 'ag')
        fit = CoxEngine.fit_fixed(ds, [0.0], ties=Ties.BRESLOW)
        records = [r for r in ds.records() if r.loan_id == '4' and r.spell_num == 3]
        curve = CoxEngine.predict_survival(fit, records)
        self.assertEqual(curve.times.tolist(), [39, 40, 41])
        self.assertTrue((np.diff(curve.survival) <= 0).all())

    def test_predict_survival_schema_mismatch(self):
        ds = spell_dataset([1, 2, 3], [1, 1, 0], {'x': [0.0, 1.0, 0.0]})
        fit = CoxEngine.fit_fixed(ds, [0.2])
        with self.assertRaises(SchemaMismatchError):
            CoxEngine.predict_survival(fit, pd.DataFrame({'entry': [0], 'stop': [1], 'y': [1.0]}))

    def test_interval_survival_telescopes(self):
        ds = SpellBuilderService.build_spells(_generate(n_loans=200, cure_prob=0.5), 'pwp')
        fit = CoxEngine.fit(ds)
        table = CoxEngine.predict_interval_survival(fit, ds)
        self.assertEqual(len(table), len(ds))
        same = table['spell_id'].eq(table['spell_id'].shift())
        np.testing.assert_allclose(table['survival_start'][same], table['survival_stop'].shift()[same], rtol=1e-12)

    def test_aic(self):
        fit = CoxFit(technique=Technique.TFD, schema=tuple('abcde'), beta=np.zeros(5), vcov=np.eye(5),
                     log_pl=-100.0, n_events=10, n_spells=20, baseline={}, converged=True, iterations=3)
        self.assertEqual(CoxEngine.aic(fit), 210.0)

    def test_constant_covariate_is_rank_deficient(self):
        ds = spell_dataset([1, 2, 3, 4], [1, 0, 1, 1], {'x': [0.2, 0.5, 0.1, 0.9], 'c': [1.0] * 4})
        with self.assertRaises(RankDeficiencyError) as ctx:
            CoxEngine.fit(ds)
        self.assertEqual(ctx.exception.columns, ['c'])

    def test_collinear_covariates_are_rank_deficient(self):
        x = np.array([0.2, 0.5, 0.1, 0.9, 0.4])
        ds = spell_dataset([1, 2, 3, 4, 5], [1, 0, 1, 1, 0], {'x': x, 'y': 2 * x + 1})
        with self.assertRaises(RankDeficiencyError):
            CoxEngine.fit(ds)

    def test_no_events(self):
        ds = spell_dataset([1, 2], [0, 0], {'x': [0.0, 1.0]})
        with self.assertRaises(ModelFitError):
            CoxEngine.fit(ds)

    def test_unknown_covariate(self):
        with self.assertRaises(SchemaMismatchError):
            CoxEngine.fit(_tied_dataset(), covariates=['a', 'z'])

    def test_shift_invariance(self):
        ds = _tied_dataset()
        shifted = ds.frame.copy()
        shifted['a'] = shifted['a'] + 7.5
        fit = CoxEngine.fit(ds)
        moved = CoxEngine.fit(type(ds)(ds.technique, ds.schema, shifted))
        np.testing.assert_allclose(moved.beta, fit.beta, atol=1e-8)
        self.assertAlmostEqual(moved.log_pl, fit.log_pl, places=8)

    def test_separation_is_reported(self):
        ds = spell_dataset([1, 2, 3, 4, 5, 6], [1, 1, 1, 0, 0, 0], {'x': [1, 1, 1, 0, 0, 0]})
        fit = CoxEngine.fit(ds, FitOptions(max_iter=200))
        self.assertFalse(fit.converged)
        self.assertIn('separation', fit.message)

    def test_max_iter_reported(self):
        fit = CoxEngine.fit(_tied_dataset(), FitOptions(max_iter=1))
        self.assertFalse(fit.converged)
        self.assertIn('1 iterations', fit.message)

    def test_vcov_is_symmetric_positive_definite(self):
        fit = CoxEngine.fit(_tied_dataset(), FitOptions(robust=True))
        np.testing.assert_allclose(fit.vcov, fit.vcov.T)
        self.assertTrue((np.linalg.eigvalsh(fit.vcov) > 0).all())
        self.assertEqual(fit.robust_vcov.shape, (2, 2))
        self.assertTrue((fit.robust_se > 0).all())


class SyntheticRecoveryTests(SimpleTestCase):

    def test_coefficients_recovered(self):
        panel = _generate(n_loans=5000, max_horizon=60, baseline_hazards=(0.02,), cure_prob=0.5, seed=2024)
        for technique in Technique.values:
            with self.subTest(technique=technique):
                fit = CoxEngine.fit(SpellBuilderService.build_spells(panel, technique))
                self.assertTrue(fit.converged)
                for true, estimate, se in zip((0.5, -0.3), fit.beta, fit.se):
                    self.assertLess(abs(estimate - true), 3 * se)

    def test_single_spell_techniques_agree(self):
        panel = _generate(n_loans=400, settle_hazard=0.01)
        fits = [CoxEngine.fit(SpellBuilderService.build_spells(panel, t)) for t in Technique.values]
        for other in fits[1:]:
            np.testing.assert_allclose(other.beta, fits[0].beta, atol=1e-8)
            self.assertAlmostEqual(other.log_pl, fits[0].log_pl, places=8)

    def test_pwp_stratum_baselines(self):
        panel = _generate(n_loans=2000, max_horizon=120, true_beta=(0.3,), baseline_hazards=(0.01, 0.02),
                          cure_prob=0.5, seed=17)
        fit = CoxEngine.fit(SpellBuilderService.build_spells(panel, 'pwp'))
        ratio = fit.baseline[2].cumulative_at(24) / fit.baseline[1].cumulative_at(24)
        self.assertLess(abs(ratio - 2.0), 0.5)

    def test_thread_count_does_not_change_fit(self):
        one = CoxEngine.fit(SpellBuilderService.build_spells(_generate(n_loans=300), 'ag', threads=1))
        many = CoxEngine.fit(SpellBuilderService.build_spells(_generate(n_loans=300), 'ag', threads=4))
        self.assertEqual(one.beta.tolist(), many.beta.tolist())


class SerializerTests(SimpleTestCase):

    def test_fit_json_round_trip(self):
        ds = SpellBuilderService.build_spells(_generate(n_loans=150, cure_prob=0.5), 'pwp')
        fit = CoxEngine.fit(ds, FitOptions(robust=True))
        payload = json.loads(json.dumps(CoxFitSerializer(fit).data))
        self.assertEqual(payload['aic'], CoxEngine.aic(fit))
        self.assertEqual([row['name'] for row in payload['coefficients']], ['x1', 'x2'])
        again = load_validated(CoxFitSerializer, payload)
        np.testing.assert_array_equal(again.beta, fit.beta)
        np.testing.assert_array_equal(again.vcov, fit.vcov)
        self.assertEqual(sorted(again.baseline), sorted(fit.baseline))
        for key in fit.baseline:
            np.testing.assert_allclose(again.baseline[key].cumulative, fit.baseline[key].cumulative)
        self.assertEqual(again.technique, Technique.PWP)

    def test_vcov_shape_checked(self):
        fit = CoxEngine.fit(_tied_dataset())
        payload = json.loads(json.dumps(CoxFitSerializer(fit).data))
        payload['vcov'] = [[1.0]]
        with self.assertRaises(ValidationError):
            load_validated(CoxFitSerializer, payload)

    def test_fit_options(self):
        options = load_validated(FitOptionsSerializer, {'ties': 'breslow', 'max_iter': 50})
        self.assertEqual(options, FitOptions(ties='breslow', max_iter=50, tol=1e-9, robust=False))
        with self.assertRaises(ValidationError):
            load_validated(FitOptionsSerializer, {'ties': 'exact'})
        with self.assertRaises(ValidationError):
            load_validated(FitOptionsSerializer, {'tol': 0})
