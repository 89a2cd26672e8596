from dataclasses import dataclass
from datetime import date
from typing import Optional, Tuple

from django.db import models


class CovariateKind(models.TextChoices):
    NORMAL = 'normal', 'Time-fixed normal'
    BINARY = 'binary', 'Time-fixed Bernoulli'
    AR1 = 'ar1', 'Stationary AR(1) path'


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    kind: CovariateKind = CovariateKind.NORMAL
    scale: float = 1.0
    prob: float = 0.5
    phi: float = 0.9


@dataclass(frozen=True)
class GeneratorSpec:
    """Discrete-time recurrent-default portfolio.

    ``baseline_hazards[j-1]`` is the monthly hazard level of spell ``j``; the
    last level carries over to later spells. Months in default last
    geometric(``cure_prob``) and are not emitted. Each loan is observed from
    a random age in ``[0, max_left_truncation]`` up to a censoring month drawn
    uniformly from ``[censor_min, max_horizon]``.
    """
    n_loans: int
    max_horizon: int
    true_beta: Tuple[float, ...]
    baseline_hazards: Tuple[float, ...]
    covariates: Tuple[CovariateSpec, ...] = ()
    cure_prob: float = 0.0
    settle_hazard: float = 0.0
    writeoff_hazard: float = 0.0
    censor_min: Optional[int] = None
    max_left_truncation: int = 0
    seed: int = 0
    calendar_origin: Optional[date] = None

    @property
    def covariate_names(self) -> Tuple[str, ...]:
        return tuple(spec.name for spec in self.resolved_covariates)

    @property
    def resolved_covariates(self) -> Tuple[CovariateSpec, ...]:
        if self.covariates:
            return self.covariates
        return tuple(CovariateSpec(name=f'x{k + 1}') for k in range(len(self.true_beta)))

    def hazard_for_spell(self, spell_num: int) -> float:
        return self.baseline_hazards[min(spell_num, len(self.baseline_hazards)) - 1]

