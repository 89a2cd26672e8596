import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, stats

from apps.core.exceptions import DiagnosticError, ModelFitError
from apps.core.models import SpellDataset, Technique
from apps.core.services import Source
from apps.core.settings_manager import EngineSettings
from apps.cox.models import CoxFit, FitOptions
from apps.cox.services import CoxEngine
from apps.utils.parallel import ordered_map

from . import troc
from .models import (
    Concordance,
    CorrelationScreen,
    CoxSnellResiduals,
    KSMode,
    KSResult,
    MarkerSet,
    ScreeningReport,
    ScreenResult,
    TROCConfig,
    TROCCurve,
    TROCVariant,
)

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


class DiagnosticsService:
    """Discrimination and goodness-of-fit for fitted spell models."""

    # Harrell's c

    @staticmethod
    def concordance(times, scores, events, entries=None, strata=None) -> Concordance:
        """
        Pair counts for Harrell's c.

        A pair (i, j) is comparable when i has an event at T_i, j entered before
        T_i and is still under observation after it (T_j > T_i), and both sit in
        the same stratum. It is concordant when i has the higher score.
        """
        times = np.asarray(times)
        scores = np.asarray(scores, dtype=float)
        events = np.asarray(events).astype(bool)
        entries = np.full(len(times), -np.inf) if entries is None else np.asarray(entries)
        strata = np.zeros(len(times), dtype=np.int64) if strata is None else np.asarray(strata)

        concordant = tied = comparable = 0
        for i in np.flatnonzero(events):
            mask = (strata == strata[i]) & (times > times[i]) & (entries < times[i])
            others = scores[mask]
            concordant += int(np.count_nonzero(others < scores[i]))
            tied += int(np.count_nonzero(others == scores[i]))
            comparable += int(np.count_nonzero(mask))
        return Concordance(concordant, tied, comparable)

    @classmethod
    def harrell_c(cls, fit: CoxFit, ds: SpellDataset) -> float:
        """c over spells, scored by the linear predictor at each spell's final interval."""
        spells = ds.spells()
        eta = _final_eta(fit, ds)
        strata = spells['spell_num_binned'].to_numpy() if Technique(ds.technique) == Technique.PWP else None
        counts = cls.concordance(
            times=spells['spell_stop'].to_numpy(),
            scores=eta,
            events=spells['status'].to_numpy() == 1,
            entries=spells['spell_entry'].to_numpy(),
            strata=strata,
        )
        if counts.comparable == 0:
            raise DiagnosticError('no comparable spell pairs for the concordance index')
        logger.debug(f"Concordance: {counts.concordant} concordant, {counts.tied} tied of {counts.comparable}")
        return counts.c_index

    # goodness of fit

    @staticmethod
    def cox_snell_residuals(fit: CoxFit, ds: SpellDataset, adjust: str = 'median') -> CoxSnellResiduals:
        """
        Fitted cumulative hazard of every spell at its stop; censored spells get ln 2 added.

        Args:
            adjust: 'median' (add ln 2 to censored spells) or 'none'
        """
        if adjust not in ('median', 'none'):
            raise DiagnosticError(f"unknown residual adjustment {adjust!r}")
        scored = CoxEngine.predict_interval_survival(fit, ds)
        last = scored.groupby('spell_id', sort=True).tail(1)
        events = ds.frame['status'].to_numpy()[last.index.to_numpy()] == 1
        values = last['cumulative_hazard'].to_numpy().copy()
        if adjust == 'median':
            values[~events] += LN2
        return CoxSnellResiduals(values, events)

    @staticmethod
    def ks_statistic(residuals, mode: str = KSMode.ONE_SAMPLE, seed: int = 0,
                     reference: Optional[np.ndarray] = None) -> KSResult:
        """
        Kolmogorov-Smirnov distance of the residuals from the unit exponential.

        ``two_sample`` compares with an equal-size unit-exponential sample drawn
        from ``seed`` unless an explicit ``reference`` sample is given.
        """
        values = np.asarray(getattr(residuals, 'values', residuals), dtype=float)
        if len(values) == 0:
            raise DiagnosticError('no residuals to test')
        mode = KSMode(mode)
        if mode == KSMode.ONE_SAMPLE:
            result = stats.kstest(values, 'expon')
        else:
            if reference is None:
                reference = np.random.default_rng(seed).exponential(size=len(values))
            result = stats.ks_2samp(values, np.asarray(reference, dtype=float))
        return KSResult(float(result.statistic), float(result.pvalue), mode, len(values))

    # tROC

    @staticmethod
    def spell_markers(fit: CoxFit, ds: SpellDataset) -> MarkerSet:
        """One marker per spell: the linear predictor at its final interval."""
        spells = ds.spells()
        return MarkerSet(
            markers=_final_eta(fit, ds),
            spell_index=np.arange(len(spells)),
            times=spells['spell_stop'].to_numpy(dtype=np.int64),
            status=spells['status'].to_numpy(dtype=np.int64),
        )

    @staticmethod
    def period_markers(fit: CoxFit, ds: SpellDataset) -> MarkerSet:
        """Every interval's linear predictor, tagged with its spell's outcome."""
        spell_id = ds.spell_ids()
        spells = ds.spells()
        return MarkerSet(
            markers=CoxEngine.linear_predictor(fit, ds),
            spell_index=spell_id,
            times=spells['spell_stop'].to_numpy(dtype=np.int64)[spell_id],
            status=spells['status'].to_numpy(dtype=np.int64)[spell_id],
        )

    @classmethod
    def troc_classical(cls, markers: MarkerSet, config: TROCConfig, horizon: int) -> TROCCurve:
        if len(np.unique(markers.spell_index)) != len(markers):
            raise DiagnosticError('classical tROC takes one marker per spell')
        return cls._troc(markers, config, horizon, TROCVariant.CLASSICAL)

    @classmethod
    def troc_clustered(cls, markers: MarkerSet, config: TROCConfig, horizon: int) -> TROCCurve:
        return cls._troc(markers, config, horizon, TROCVariant.CLUSTERED)

    @staticmethod
    def tauc(curve: TROCCurve) -> float:
        return float(integrate.trapezoid(curve.tpr, curve.fpr))

    @classmethod
    def troc_curves(cls, markers: MarkerSet, config: TROCConfig, variant: str = TROCVariant.CLUSTERED,
                    threads: Optional[int] = None) -> dict:
        """Curves for every configured horizon; undefined horizons map to None."""
        build = cls.troc_classical if TROCVariant(variant) == TROCVariant.CLASSICAL else cls.troc_clustered

        def one(horizon):
            try:
                return build(markers, config, horizon)
            except DiagnosticError as exc:
                logger.warning(f"Skipping horizon {horizon}: {exc}")
                return None

        curves = ordered_map(one, list(config.horizons), threads=threads)
        return dict(zip(config.horizons, curves))

    @staticmethod
    def _troc(markers: MarkerSet, config: TROCConfig, horizon: int, variant: TROCVariant) -> TROCCurve:
        if not 0.0 < 2.0 * config.lambda_n < 1.0:
            raise DiagnosticError(f"2 * lambda_n must lie in (0, 1), got lambda_n={config.lambda_n}")
        if len(markers) == 0:
            raise DiagnosticError('no markers')
        if not np.all(np.isfinite(markers.markers)):
            raise DiagnosticError('markers must be finite')
        if not np.isin(markers.status, (0, 1)).all():
            raise DiagnosticError('status must be 0 or 1')

        thresholds = troc.threshold_grid(markers.markers, config.threshold_step)
        raw_fpr, raw_tpr = troc.roc_points(markers, thresholds, horizon, config.lambda_n)
        fpr, tpr = troc.clean_curve(raw_fpr, raw_tpr)
        return TROCCurve(int(horizon), variant, thresholds, fpr, tpr, raw_fpr, raw_tpr)

    @staticmethod
    def write_curve(curve: TROCCurve, target: Source) -> None:
        curve.as_frame().to_csv(target, index=False, float_format=EngineSettings.get_float_format(),
                                lineterminator='\n')

    # covariate screening

    @classmethod
    def screen_single_factor(cls, ds: SpellDataset, name: str, options: Optional[FitOptions] = None,
                             evaluation: Optional[SpellDataset] = None) -> ScreenResult:
        """One-covariate fit and its c on ``evaluation`` (default: the fitting data)."""
        fit = CoxEngine.fit(ds, options, covariates=[name])
        c = cls.harrell_c(fit, evaluation if evaluation is not None else ds)
        return ScreenResult(name, fit, c)

    @classmethod
    def screen_covariates(cls, ds: SpellDataset, names: Optional[Sequence[str]] = None,
                          options: Optional[FitOptions] = None, evaluation: Optional[SpellDataset] = None,
                          threads: Optional[int] = None) -> ScreeningReport:
        """Single-factor screen ranked by c, best first; ties keep schema order."""
        names = list(ds.schema if names is None else names)

        def screen(name):
            try:
                return cls.screen_single_factor(ds, name, options, evaluation)
            except (ModelFitError, DiagnosticError) as exc:
                logger.warning(f"Single-factor screen dropped {name}: {exc}")
                return str(exc)

        outcomes = ordered_map(screen, names, threads=threads)
        results = [o for o in outcomes if isinstance(o, ScreenResult)]
        rejected = {name: o for name, o in zip(names, outcomes) if isinstance(o, str)}
        results.sort(key=lambda r: -r.c_statistic)
        logger.info(f"Screened {len(names)} covariates; ranking {[r.name for r in results]}")
        return ScreeningReport(tuple(results), rejected)

    @staticmethod
    def correlation_screen(ds: SpellDataset, names: Optional[Sequence[str]] = None,
                           threshold: Optional[float] = None) -> CorrelationScreen:
        """Spearman correlations across covariates and the pairs with |rho| >= threshold."""
        names = list(ds.schema if names is None else names)
        threshold = EngineSettings.get_correlation_threshold() if threshold is None else float(threshold)
        X = ds.covariate_matrix(names)
        if len(names) < 2:
            rho = np.ones((len(names), len(names)))
        else:
            with np.errstate(invalid='ignore', divide='ignore'):
                statistic = stats.spearmanr(X).statistic
            rho = np.array([[1.0, statistic], [statistic, 1.0]]) if len(names) == 2 else np.asarray(statistic)
        matrix = pd.DataFrame(rho, index=names, columns=names)
        pairs = []
        for a in range(len(names)):
            for b in range(a + 1, len(names)):
                value = float(rho[a, b])
                if np.isfinite(value) and abs(value) >= threshold:
                    pairs.append((names[a], names[b], value))
        return CorrelationScreen(matrix, tuple(pairs), threshold)


def _final_eta(fit: CoxFit, ds: SpellDataset) -> np.ndarray:
    eta = CoxEngine.linear_predictor(fit, ds)
    spell_id = ds.spell_ids()
    last = np.r_[spell_id[1:] != spell_id[:-1], True] if len(spell_id) else np.zeros(0, dtype=bool)
    return eta[last]
