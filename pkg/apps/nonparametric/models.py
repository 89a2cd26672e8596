from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from django.db import models


class TermStructureKind(models.TextChoices):
    ACTUAL = 'actual', 'Actual'
    PREDICTED = 'predicted', 'Predicted'


class Denominator(models.TextChoices):
    ACTIVE = 'active', 'Spells covering t'
    ALL = 'all', 'Every spell'


@dataclass(frozen=True, eq=False)
class KaplanMeier:
    """Product-limit fit on the technique's clock, one point per failure time."""
    times: np.ndarray
    survival: np.ndarray
    hazard: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray

    def survival_at(self, t) -> np.ndarray:
        """Step-function value Ŝ(t); 1 before the first failure time."""
        padded = np.r_[1.0, self.survival]
        return padded[np.searchsorted(self.times, t, side='right')]


@dataclass(frozen=True, eq=False)
class TermStructure:
    times: np.ndarray
    probs: np.ndarray
    kind: TermStructureKind
    n_at_risk: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.times)

    def value_at(self, t) -> np.ndarray:
        """f(t) with zero at times the structure does not list."""
        t = np.asarray(t)
        k = np.searchsorted(self.times, t)
        inside = k < len(self.times)
        hit = np.zeros(t.shape, dtype=bool)
        hit[inside] = self.times[k[inside]] == t[inside]
        values = np.zeros(t.shape)
        values[hit] = self.probs[k[hit]]
        return values

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def as_frame(self) -> pd.DataFrame:
        n = self.n_at_risk if self.n_at_risk is not None else np.zeros(len(self.times), dtype=np.int64)
        return pd.DataFrame({'t': self.times, 'f': self.probs, 'n_at_risk': n})
