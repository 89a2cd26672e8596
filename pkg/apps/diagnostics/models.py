from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from django.db import models

from apps.cox.models import CoxFit


class TROCVariant(models.TextChoices):
    CLASSICAL = 'classical', 'Classical'
    CLUSTERED = 'clustered', 'Clustered (mean-adjusted)'


class KSMode(models.TextChoices):
    ONE_SAMPLE = 'one_sample', 'Against the unit-exponential CDF'
    TWO_SAMPLE = 'two_sample', 'Against a seeded unit-exponential sample'


@dataclass(frozen=True)
class TROCConfig:
    """``2 * lambda_n`` is the share of observations in each neighbourhood."""
    lambda_n: float = 0.05
    horizons: Tuple[int, ...] = (3, 12, 24, 36)
    threshold_step: float = 0.01


@dataclass(frozen=True, eq=False)
class MarkerSet:
    """Markers with the spell each belongs to and that spell's outcome.

    ``times``/``status`` repeat the spell-level values on every marker.
    """
    markers: np.ndarray
    spell_index: np.ndarray
    times: np.ndarray
    status: np.ndarray

    def __len__(self) -> int:
        return len(self.markers)

    @property
    def n_spells(self) -> int:
        return len(np.unique(self.spell_index))

    def transformed(self, func) -> 'MarkerSet':
        return MarkerSet(func(self.markers), self.spell_index, self.times, self.status)


@dataclass(frozen=True, eq=False)
class TROCCurve:
    """tROC points ordered by descending threshold, from (0, 0) to (1, 1).

    ``fpr``/``tpr`` are the cleaned coordinates; ``raw_*`` the estimator output.
    """
    horizon: int
    variant: TROCVariant
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    raw_fpr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    raw_tpr: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'p_c': self.thresholds, 'fpr': self.fpr, 'tpr': self.tpr})


@dataclass(frozen=True, eq=False)
class CoxSnellResiduals:
    values: np.ndarray
    events: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    mode: KSMode
    n: int

    @property
    def one_minus_d(self) -> float:
        return 1.0 - self.statistic


@dataclass(frozen=True)
class Concordance:
    concordant: float
    tied: float
    comparable: int

    @property
    def c_index(self) -> float:
        return (self.concordant + 0.5 * self.tied) / self.comparable


@dataclass(frozen=True, eq=False)
class ScreenResult:
    name: str
    fit: CoxFit
    c_statistic: float


@dataclass(frozen=True, eq=False)
class ScreeningReport:
    """Single-factor results, best c first, plus covariates that could not be fitted."""
    results: Tuple[ScreenResult, ...]
    rejected: Dict[str, str] = field(default_factory=dict)

    @property
    def ranking(self) -> List[str]:
        return [result.name for result in self.results]

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'rank': np.arange(1, len(self.results) + 1),
            'covariate': self.ranking,
            'beta': [float(r.fit.beta[0]) for r in self.results],
            'se': [float(r.fit.se[0]) for r in self.results],
            'p_value': [float(r.fit.p_values[0]) for r in self.results],
            'c_statistic': [r.c_statistic for r in self.results],
        })


@dataclass(frozen=True, eq=False)
class CorrelationScreen:
    matrix: pd.DataFrame
    pairs: Tuple[Tuple[str, str, float], ...]
    threshold: float
