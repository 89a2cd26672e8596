from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from apps.core.models import ResolutionType


@dataclass(frozen=True, eq=False)
class ResolutionSeries:
    """Per-calendar-period share of spells resolving as ``kappa``.

    Only periods with at least one stopping spell appear.
    """
    times: np.ndarray
    rates: np.ndarray
    kappa: ResolutionType
    n_at_risk: np.ndarray
    labels: Optional[Tuple[str, ...]] = None

    def __len__(self) -> int:
        return len(self.times)

    def rate_at(self, t: int) -> Optional[float]:
        k = np.searchsorted(self.times, t)
        if k < len(self.times) and self.times[k] == t:
            return float(self.rates[k])
        return None

    def as_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'t_prime': self.times, 'n': self.n_at_risk, 'rate': self.rates})
        if self.labels is not None:
            frame['calendar_month'] = list(self.labels)
        return frame


@dataclass(frozen=True)
class Representativeness:
    """AD between the full set and its training/validation parts."""
    kappa: ResolutionType
    full_vs_train: float
    full_vs_valid: float
    train_vs_valid: float

    def as_dict(self) -> dict:
        return {
            'kappa': self.kappa.label,
            'full_vs_train': self.full_vs_train,
            'full_vs_valid': self.full_vs_valid,
            'train_vs_valid': self.train_vs_valid,
        }
