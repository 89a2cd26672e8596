from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats

from apps.core.models import Technique


class Ties:
    EFRON = 'efron'
    BRESLOW = 'breslow'
    CHOICES = (EFRON, BRESLOW)


@dataclass(frozen=True)
class FitOptions:
    ties: str = Ties.EFRON
    max_iter: int = 25
    tol: float = 1e-9
    robust: bool = False


@dataclass(frozen=True)
class RiskSet:
    """Intervals at risk at one failure time and those failing there (row indices)."""
    failure_time: int
    at_risk: Tuple[int, ...]
    event_set: Tuple[int, ...]
    stratum: int = 0


@dataclass(frozen=True, eq=False)
class BaselineHazard:
    """Breslow step function for one stratum."""
    times: np.ndarray
    increments: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    def cumulative_at(self, t) -> np.ndarray:
        """Cumulative baseline hazard at time(s) ``t`` (0 before the first failure time)."""
        padded = np.r_[0.0, self.cumulative]
        return padded[np.searchsorted(self.times, t, side='right')]

    def pairs(self):
        return list(zip(self.times.tolist(), self.cumulative.tolist()))


@dataclass(frozen=True)
class SurvivalCurve:
    """Predicted survival of one spell: ``survival[k]`` holds at ``times[k]``; the first point is (start, 1)."""
    times: np.ndarray
    survival: np.ndarray


@dataclass(frozen=True, eq=False)
class CoxFit:
    technique: Technique
    schema: Tuple[str, ...]
    beta: np.ndarray
    vcov: np.ndarray
    log_pl: float
    n_events: int
    n_spells: int
    baseline: Dict[int, BaselineHazard]
    converged: bool
    iterations: int
    ties: str = Ties.EFRON
    log_pl_null: Optional[float] = None
    message: str = ''
    robust_vcov: Optional[np.ndarray] = None
    fixed: bool = False
    gradient_norm: float = 0.0
    strata: Tuple[int, ...] = field(default=())

    @property
    def p(self) -> int:
        return len(self.beta)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def robust_se(self) -> Optional[np.ndarray]:
        if self.robust_vcov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.robust_vcov), 0.0, None))

    @property
    def z(self) -> np.ndarray:
        se = self.se
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(se > 0, self.beta / se, np.nan)

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.z))

    def significant(self, alpha: float = 0.05) -> np.ndarray:
        return self.p_values < alpha

    def coefficient(self, name: str) -> float:
        return float(self.beta[self.schema.index(name)])
