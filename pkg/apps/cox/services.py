import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import linalg

from apps.core.constants import COMMON_STRATUM, SPELL_KEY_COLUMNS
from apps.core.exceptions import ModelFitError, RankDeficiencyError, SchemaMismatchError
from apps.core.models import SpellDataset, SpellRecord, Technique
from apps.core.settings_manager import EngineSettings

from .likelihood import CoxDesign, PartialLikelihood
from .models import BaselineHazard, CoxFit, FitOptions, RiskSet, SurvivalCurve

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30

# Newton step still this large when the gradient vanishes: the likelihood is monotone
DIVERGING_STEP = 0.1


class CoxEngine:
    """Cox proportional-hazards fitting and prediction for TFD, AG and PWP spell data."""

    @staticmethod
    def default_options(**overrides) -> FitOptions:
        values = {
            'ties': EngineSettings.get_ties(),
            'max_iter': EngineSettings.get_max_iter(),
            'tol': EngineSettings.get_tol(),
            'robust': False,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return FitOptions(**values)

    @staticmethod
    def build_risk_sets(ds: SpellDataset) -> Dict[int, List[RiskSet]]:
        """
        Risk sets per stratum, one per unique failure time.

        Returns:
            dict: stratum key -> RiskSet list in ascending failure time;
                  empty when the dataset has no events
        """
        design = CoxDesign.from_dataset(ds)
        result: Dict[int, List[RiskSet]] = {}
        for key in np.unique(design.strata):
            in_stratum = design.strata == key
            event_times = np.unique(design.stop[in_stratum & (design.status == 1)])
            sets = []
            for t in event_times:
                at_risk = np.flatnonzero(in_stratum & (design.entry < t) & (t <= design.stop))
                events = np.flatnonzero(in_stratum & (design.stop == t) & (design.status == 1))
                sets.append(RiskSet(int(t), tuple(at_risk.tolist()), tuple(events.tolist()), int(key)))
            if sets:
                result[int(key)] = sets
        return result

    @classmethod
    def fit(cls, ds: SpellDataset, options: Optional[FitOptions] = None,
            covariates: Optional[Sequence[str]] = None) -> CoxFit:
        """
        Maximize the log partial likelihood by Newton-Raphson with step-halving.

        Args:
            ds: spell dataset; PWP data are stratified by binned spell number
            options: ties, max_iter, tol, robust
            covariates: subset of the dataset schema to use (default: all)

        Returns:
            CoxFit: non-convergence and separation are reported on the fit, not raised
        """
        options = options or cls.default_options()
        if covariates is not None:
            ds = _restrict_schema(ds, covariates)
        design = CoxDesign.from_dataset(ds)
        if design.n_events == 0:
            raise ModelFitError('cannot fit a Cox model without any default events')

        likelihood = PartialLikelihood(design, options.ties)
        cls._check_rank(design, likelihood)

        beta = np.zeros(design.p)
        log_pl, grad, hess = likelihood.evaluate(beta)
        log_pl_null = log_pl
        converged = False
        message = ''
        iterations = 0
        scale = design.X.std(axis=0) if design.n else np.zeros(design.p)
        separation_limit = EngineSettings.get_separation_limit()
        last_step = np.zeros(design.p)

        while True:
            gradient_norm = float(np.max(np.abs(grad))) if design.p else 0.0
            if gradient_norm <= options.tol:
                if np.any(last_step > DIVERGING_STEP):
                    flagged = [design.names[j] for j in np.flatnonzero(last_step > DIVERGING_STEP)]
                    message = f"separation suspected: coefficients still moving for {', '.join(flagged)}"
                    logger.warning(message)
                else:
                    converged = True
                break
            if iterations >= options.max_iter:
                message = f'no convergence within {options.max_iter} iterations'
                break
            iterations += 1
            step = _newton_step(hess, grad)

            factor = 1.0
            for _ in range(MAX_HALVINGS):
                candidate = beta + factor * step
                new_pl, new_grad, new_hess = likelihood.evaluate(candidate)
                if np.isfinite(new_pl) and new_pl >= log_pl - 1e-12 * max(1.0, abs(log_pl)):
                    break
                factor /= 2.0
            else:
                message = 'step-halving failed to improve the partial likelihood'
                break

            gain = new_pl - log_pl
            last_step = np.abs(factor * step)
            beta, log_pl, grad, hess = candidate, new_pl, new_grad, new_hess
            logger.debug(f"Newton iteration {iterations}: log PL {log_pl:.10f}, step factor {factor}")

            standardized = np.abs(beta) * scale
            if np.any(standardized > separation_limit):
                flagged = [design.names[j] for j in np.flatnonzero(standardized > separation_limit)]
                message = f"separation suspected: diverging coefficients for {', '.join(flagged)}"
                logger.warning(message)
                break
            if abs(gain) <= 1e-14 * max(1.0, abs(log_pl)) and np.max(np.abs(factor * step)) < 1e-10:
                # no further progress representable in floating point
                converged = True
                message = 'converged at machine precision'
                gradient_norm = float(np.max(np.abs(grad)))
                break

        vcov = _inverse_information(hess)
        robust_vcov = None
        if options.robust:
            robust_vcov = cls._robust_vcov(likelihood, design, beta, vcov)

        fit = CoxFit(
            technique=Technique(ds.technique),
            schema=tuple(ds.schema),
            beta=beta,
            vcov=vcov,
            log_pl=float(log_pl),
            n_events=design.n_events,
            n_spells=ds.n_spells,
            baseline=cls._baseline(likelihood, beta),
            converged=converged,
            iterations=iterations,
            ties=options.ties,
            log_pl_null=float(log_pl_null),
            message=message,
            robust_vcov=robust_vcov,
            gradient_norm=float(np.max(np.abs(grad))) if design.p else 0.0,
            strata=tuple(int(b.key) for b in likelihood.blocks),
        )
        logger.info(
            f"Fitted {fit.technique.label} model ({options.ties}): converged={converged} after {iterations} "
            f"iterations, log PL {fit.log_pl:.6f}, {fit.n_events} events in {fit.n_spells} spells"
        )
        return fit

    @classmethod
    def fit_fixed(cls, ds: SpellDataset, beta, ties: Optional[str] = None,
                  covariates: Optional[Sequence[str]] = None) -> CoxFit:
        """Evaluate the model at supplied coefficients without optimizing."""
        if covariates is not None:
            ds = _restrict_schema(ds, covariates)
        design = CoxDesign.from_dataset(ds)
        beta = np.asarray(beta, dtype=float).reshape(design.p)
        ties = ties or EngineSettings.get_ties()
        likelihood = PartialLikelihood(design, ties)
        log_pl, grad, hess = likelihood.evaluate(beta)
        return CoxFit(
            technique=Technique(ds.technique),
            schema=tuple(ds.schema),
            beta=beta,
            vcov=_inverse_information(hess),
            log_pl=float(log_pl),
            n_events=design.n_events,
            n_spells=ds.n_spells,
            baseline=cls._baseline(likelihood, beta),
            converged=True,
            iterations=0,
            ties=ties,
            log_pl_null=float(likelihood.evaluate(np.zeros(design.p), hessian=False)[0]),
            message='coefficients supplied',
            fixed=True,
            gradient_norm=float(np.max(np.abs(grad))) if design.p else 0.0,
            strata=tuple(int(b.key) for b in likelihood.blocks),
        )

    @staticmethod
    def log_partial_likelihood(ds: SpellDataset, beta, ties: Optional[str] = None):
        """(log PL, gradient, Hessian) at ``beta``."""
        likelihood = PartialLikelihood(CoxDesign.from_dataset(ds), ties or EngineSettings.get_ties())
        return likelihood.evaluate(beta)

    @classmethod
    def baseline_hazard(cls, fit: CoxFit, ds: SpellDataset) -> Dict[int, BaselineHazard]:
        """Breslow baseline step functions re-estimated on ``ds`` at the fitted coefficients."""
        ds = _align_schema(fit, ds)
        likelihood = PartialLikelihood(CoxDesign.from_dataset(ds), fit.ties)
        return cls._baseline(likelihood, fit.beta)

    @staticmethod
    def aic(fit: CoxFit) -> float:
        return -2.0 * fit.log_pl + 2.0 * fit.p

    @classmethod
    def predict_survival(cls, fit: CoxFit, spell: Union[pd.DataFrame, Sequence[SpellRecord]]) -> SurvivalCurve:
        """
        Predicted survival over one spell's intervals, using each interval's covariates.

        Args:
            fit: fitted model
            spell: the spell's intervals as SpellRecords or a spell frame

        Returns:
            SurvivalCurve: starts at (first entry, 1.0)
        """
        frame = _spell_frame(spell, fit.schema)
        if frame.empty:
            return SurvivalCurve(np.zeros(1, dtype=np.int64), np.ones(1))
        frame = frame.sort_values('entry', kind='mergesort')
        hazard = cls._interval_hazards(fit, frame)
        survival = np.exp(-np.cumsum(hazard))
        times = np.r_[frame['entry'].iloc[0], frame['stop'].to_numpy()]
        return SurvivalCurve(times.astype(np.int64), np.r_[1.0, survival])

    @classmethod
    def predict_interval_survival(cls, fit: CoxFit, ds: SpellDataset) -> pd.DataFrame:
        """
        Per-interval predicted survival for every spell in ``ds``.

        Returns:
            DataFrame: ``spell_id``, ``stop``, ``survival_start``, ``survival_stop`` and
            ``cumulative_hazard`` (at the interval stop) aligned with ``ds.frame`` rows
        """
        ds = _align_schema(fit, ds)
        hazard = cls._interval_hazards(fit, ds.frame)
        spell_id = ds.spell_ids()
        cumulative = pd.Series(hazard).groupby(spell_id).cumsum().to_numpy()
        survival_stop = np.exp(-cumulative)
        survival_start = np.exp(-(cumulative - hazard))
        return pd.DataFrame({
            'spell_id': spell_id,
            'stop': ds.frame['stop'].to_numpy(),
            'survival_start': survival_start,
            'survival_stop': survival_stop,
            'cumulative_hazard': cumulative,
        })

    @staticmethod
    def linear_predictor(fit: CoxFit, ds: SpellDataset) -> np.ndarray:
        ds = _align_schema(fit, ds)
        X = ds.covariate_matrix(fit.schema)
        return X @ fit.beta if fit.p else np.zeros(len(ds))

    # internals

    @staticmethod
    def _interval_hazards(fit: CoxFit, frame: pd.DataFrame) -> np.ndarray:
        X = frame[list(fit.schema)].to_numpy(dtype=float).reshape(len(frame), fit.p)
        risk = np.exp(X @ fit.beta) if fit.p else np.ones(len(frame))
        entry = frame['entry'].to_numpy(dtype=np.int64)
        stop = frame['stop'].to_numpy(dtype=np.int64)
        if Technique(fit.technique) == Technique.PWP:
            strata = frame['spell_num_binned'].to_numpy(dtype=np.int64)
        else:
            strata = np.full(len(frame), COMMON_STRATUM, dtype=np.int64)
        increments = np.zeros(len(frame))
        for key in np.unique(strata):
            baseline = fit.baseline.get(int(key))
            if baseline is None or len(baseline.times) == 0:
                continue
            rows = strata == key
            increments[rows] = baseline.cumulative_at(stop[rows]) - baseline.cumulative_at(entry[rows])
        return risk * increments

    @staticmethod
    def _baseline(likelihood: PartialLikelihood, beta) -> Dict[int, BaselineHazard]:
        return {
            key: BaselineHazard(times=np.asarray(times, dtype=np.int64), increments=np.asarray(increments))
            for key, (times, increments) in likelihood.breslow_increments(beta).items()
        }

    @staticmethod
    def _check_rank(design: CoxDesign, likelihood: PartialLikelihood) -> None:
        """Reject covariates that are constant or collinear on the event-weighted risk sets."""
        if design.p == 0:
            return
        tol = EngineSettings.get_rank_tol()
        constant = [j for j in range(design.p) if np.ptp(design.X[:, j]) == 0]
        information = -likelihood.evaluate(np.zeros(design.p))[2]
        diag = np.diag(information).copy()
        flat = [j for j in range(design.p) if j not in constant and diag[j] <= tol * max(1.0, diag.max())]
        rejected = set(constant) | set(flat)

        keep = [j for j in range(design.p) if j not in rejected]
        if keep:
            scale = np.sqrt(diag[keep])
            correlation = information[np.ix_(keep, keep)] / np.outer(scale, scale)
            _, r, pivots = linalg.qr(correlation, pivoting=True)
            pivot_size = np.abs(np.diag(r))
            for position, column in enumerate(pivots):
                if pivot_size[position] < tol * max(1.0, pivot_size[0]):
                    rejected.add(keep[column])

        if rejected:
            names = [design.names[j] for j in sorted(rejected)]
            logger.error(f"Rank check rejected covariates: {names}")
            raise RankDeficiencyError(names)

    @staticmethod
    def _robust_vcov(likelihood: PartialLikelihood, design: CoxDesign, beta, vcov) -> np.ndarray:
        """Sandwich variance with loans as clusters."""
        residuals = likelihood.score_residuals(beta)
        _, cluster_index = np.unique(design.clusters, return_inverse=True)
        clustered = np.zeros((cluster_index.max() + 1 if len(cluster_index) else 0, design.p))
        np.add.at(clustered, cluster_index, residuals)
        meat = clustered.T @ clustered
        robust = vcov @ meat @ vcov
        return (robust + robust.T) / 2.0


def _newton_step(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        return linalg.solve(-hess, grad, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        logger.warning('Information matrix not positive definite; using least-squares Newton step')
        return linalg.lstsq(-hess, grad)[0]


def _inverse_information(hess: np.ndarray) -> np.ndarray:
    if hess.size == 0:
        return np.zeros((0, 0))
    try:
        vcov = linalg.inv(-hess)
    except linalg.LinAlgError:
        vcov = linalg.pinvh(-hess)
    return (vcov + vcov.T) / 2.0


def _restrict_schema(ds: SpellDataset, covariates: Sequence[str]) -> SpellDataset:
    missing = [name for name in covariates if name not in ds.schema]
    if missing:
        raise SchemaMismatchError(f"covariates not in spell data: {', '.join(missing)}")
    return ds.with_schema(covariates)


def _align_schema(fit: CoxFit, ds: SpellDataset) -> SpellDataset:
    missing = [name for name in fit.schema if name not in ds.schema]
    if missing:
        raise SchemaMismatchError(f"spell data lack fitted covariates: {', '.join(missing)}")
    if tuple(ds.schema) != tuple(fit.schema):
        ds = ds.with_schema(fit.schema)
    return ds


def _spell_frame(spell, schema) -> pd.DataFrame:
    if isinstance(spell, pd.DataFrame):
        missing = [name for name in schema if name not in spell.columns]
        if missing:
            raise SchemaMismatchError(f"spell lacks covariates: {', '.join(missing)}")
        return spell
    records = list(spell)
    for record in records:
        if len(record.covariates) != len(schema):
            raise SchemaMismatchError(
                f"spell record has {len(record.covariates)} covariates, model expects {len(schema)}")
    rows = []
    for record in records:
        row = {name: getattr(record, name) for name in SPELL_KEY_COLUMNS}
        row.update(dict(zip(schema, record.covariates)))
        rows.append(row)
    columns = list(SPELL_KEY_COLUMNS) + list(schema)
    return pd.DataFrame(rows, columns=columns)
