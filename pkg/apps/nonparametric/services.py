import logging
from typing import Optional

import numpy as np
import pandas as pd

from apps.core.exceptions import TermStructureError
from apps.core.models import SpellDataset
from apps.core.services import Source
from apps.core.settings_manager import EngineSettings
from apps.cox.models import CoxFit
from apps.cox.services import CoxEngine

from .models import Denominator, KaplanMeier, TermStructure, TermStructureKind

logger = logging.getLogger(__name__)


class TermStructureService:
    """Kaplan-Meier and term-structures of default probability on the technique's clock."""

    @staticmethod
    def kaplan_meier(ds: SpellDataset) -> KaplanMeier:
        """
        Product-limit estimate with left truncation.

        n_u counts intervals with entry < u <= stop; strata are pooled.
        """
        frame = ds.frame
        entry = np.sort(frame['entry'].to_numpy(dtype=np.int64))
        stop = np.sort(frame['stop'].to_numpy(dtype=np.int64))
        events = frame.loc[frame['status'] == 1, 'stop'].to_numpy(dtype=np.int64)

        times, d = np.unique(events, return_counts=True)
        n = (len(stop) - np.searchsorted(stop, times, side='left')) - (
            len(entry) - np.searchsorted(entry, times, side='left'))
        hazard = d / n if len(times) else np.zeros(0)
        survival = np.cumprod(1.0 - hazard)
        return KaplanMeier(times=times, survival=survival, hazard=hazard,
                           n_at_risk=n.astype(np.int64), n_events=d.astype(np.int64))

    @classmethod
    def actual_term_structure(cls, ds: SpellDataset, horizon: Optional[int] = None) -> TermStructure:
        """f_A(t) = Ŝ(t-1) * ĥ(t) at each failure time up to ``horizon``."""
        horizon = _check_horizon(horizon)
        km = cls.kaplan_meier(ds)
        keep = km.times <= horizon
        previous = np.r_[1.0, km.survival[:-1]]
        probs = (previous * km.hazard)[keep]
        logger.debug(f"Actual term-structure: {int(keep.sum())} failure times up to {horizon}")
        return TermStructure(km.times[keep], probs, TermStructureKind.ACTUAL, km.n_at_risk[keep])

    @staticmethod
    def predicted_term_structure(fit: CoxFit, ds: SpellDataset, horizon: Optional[int] = None,
                                 denominator: str = Denominator.ACTIVE) -> TermStructure:
        """
        Portfolio average of per-spell f_P(t, x) = Ŝ(t-1|x) - Ŝ(t|x).

        Each monthly interval contributes at its stop time. With ``active`` the
        average at t runs over spells covering t; with ``all`` over every spell.
        """
        horizon = _check_horizon(horizon)
        denominator = Denominator(denominator)
        scored = CoxEngine.predict_interval_survival(fit, ds)
        scored = scored.loc[scored['stop'] <= horizon]
        if scored.empty:
            empty = np.zeros(0)
            return TermStructure(empty.astype(np.int64), empty, TermStructureKind.PREDICTED,
                                 empty.astype(np.int64))

        f = (scored['survival_start'] - scored['survival_stop']).to_numpy()
        times, index = np.unique(scored['stop'].to_numpy(dtype=np.int64), return_inverse=True)
        totals = np.bincount(index, weights=f, minlength=len(times))
        pairs = pd.DataFrame({'t': index, 'spell': scored['spell_id'].to_numpy()}).drop_duplicates()
        covering = np.bincount(pairs['t'].to_numpy(), minlength=len(times))
        if denominator == Denominator.ALL:
            n = np.full(len(times), ds.n_spells, dtype=np.int64)
        else:
            n = covering.astype(np.int64)
        return TermStructure(times, totals / n, TermStructureKind.PREDICTED, n)

    @staticmethod
    def term_structure_mae(a: TermStructure, b: TermStructure, t1: int, horizon: int) -> float:
        """Sum of |a(t) - b(t)| over t1..horizon, divided by (horizon - t1)."""
        if horizon <= t1:
            raise TermStructureError(f"horizon {horizon} must exceed start {t1}")
        grid = np.arange(int(t1), int(horizon) + 1)
        return float(np.abs(a.value_at(grid) - b.value_at(grid)).sum() / (horizon - t1))

    @staticmethod
    def overlay(actual: TermStructure, predicted: TermStructure) -> pd.DataFrame:
        times = np.union1d(actual.times, predicted.times)
        f_actual = actual.value_at(times)
        f_predicted = predicted.value_at(times)
        return pd.DataFrame({
            't': times,
            'f_actual': f_actual,
            'f_predicted': f_predicted,
            'abs_gap': np.abs(f_actual - f_predicted),
        })

    @staticmethod
    def write_term_structure(ts: TermStructure, target: Source) -> None:
        ts.as_frame().to_csv(target, index=False, float_format=EngineSettings.get_float_format(),
                             lineterminator='\n')

    @classmethod
    def write_overlay(cls, actual: TermStructure, predicted: TermStructure, target: Source) -> None:
        cls.overlay(actual, predicted).to_csv(target, index=False, sep=' ',
                                              float_format=EngineSettings.get_float_format(),
                                              lineterminator='\n')


def _check_horizon(horizon) -> int:
    horizon = EngineSettings.get_term_structure_horizon() if horizon is None else int(horizon)
    if horizon < 1:
        raise TermStructureError(f"horizon must be at least 1, got {horizon}")
    return horizon
