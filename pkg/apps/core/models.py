from dataclasses import dataclass, field
from datetime import date
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from django.db import models

from apps.utils.dateManager import periodLabel

from .constants import SPELL_KEY_COLUMNS


class ResolutionType(models.IntegerChoices):
    DEFAULT = 1, 'Default'
    SETTLED = 2, 'Settled'
    WRITE_OFF = 3, 'Write-off'
    CENSORED = 4, 'Censored'


class LoanState(models.TextChoices):
    PERFORMING = 'PERF', 'Performing'
    DEFAULT = 'DEF', 'Default'
    SETTLED = 'SET', 'Settled'
    WRITE_OFF = 'WO', 'Write-off'


class Technique(models.TextChoices):
    TFD = 'tfd', 'Time to first default'
    AG = 'ag', 'Andersen-Gill'
    PWP = 'pwp', 'Prentice-Williams-Peterson gap time'


@dataclass(frozen=True)
class SchemaConfig:
    covariates: Tuple[str, ...] = ()
    calendar_origin: Optional[date] = None


@dataclass(frozen=True)
class PanelViolation:
    loan_id: Optional[str]
    kind: str
    description: str

    def __str__(self):
        where = f"loan {self.loan_id}" if self.loan_id is not None else 'panel'
        return f"{where}: {self.kind}: {self.description}"


@dataclass(frozen=True, eq=False)
class Panel:
    """Long-format loan-month table.

    ``frame`` holds ``loan_id, period, state`` followed by one float column per
    schema name. Construction never reorders rows; ``ingest_panel`` sorts.
    """
    schema: Tuple[str, ...]
    frame: pd.DataFrame
    calendar_origin: Optional[date] = None

    @classmethod
    def empty(cls, schema: Sequence[str] = (), calendar_origin: Optional[date] = None) -> 'Panel':
        frame = pd.DataFrame({
            'loan_id': pd.Series([], dtype=object),
            'period': pd.Series([], dtype='int64'),
            'state': pd.Series([], dtype=object),
        })
        for name in schema:
            frame[name] = pd.Series([], dtype='float64')
        return cls(schema=tuple(schema), frame=frame, calendar_origin=calendar_origin)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def loan_ids(self) -> list:
        return list(pd.unique(self.frame['loan_id']))

    @property
    def n_loans(self) -> int:
        return int(self.frame['loan_id'].nunique())

    def subset(self, loan_ids) -> 'Panel':
        keep = self.frame['loan_id'].isin(set(loan_ids))
        return Panel(self.schema, self.frame.loc[keep].reset_index(drop=True), self.calendar_origin)

    def calendar_label(self, period: int) -> Optional[str]:
        return periodLabel(self.calendar_origin, period)

    def equals(self, other: 'Panel') -> bool:
        return (
            self.schema == other.schema
            and self.calendar_origin == other.calendar_origin
            and self.frame.reset_index(drop=True).equals(other.frame.reset_index(drop=True))
        )


@dataclass(frozen=True)
class SpellRecord:
    """One monthly counting-process interval of a performing spell.

    ``entry``/``stop`` follow the technique's clock; ``spell_entry``/``spell_stop``
    are the spell-level bounds on that clock and ``spell_period`` is the period
    label used in layout tables (loan period on the first spell, position in
    the spell afterwards).
    """
    loan_id: str
    spell_num: int
    spell_num_binned: int
    entry: int
    stop: int
    status: int
    resolution: ResolutionType
    spell_age: int
    period: int
    spell_period: int
    spell_entry: int
    spell_stop: int
    covariates: Tuple[float, ...] = field(default=())


@dataclass(frozen=True, eq=False)
class SpellDataset:
    """Counting-process spell data for one technique.

    Rows are sorted by (loan_id, spell_num, entry). ``frame`` carries
    ``SPELL_KEY_COLUMNS`` followed by the schema columns.
    """
    technique: Technique
    schema: Tuple[str, ...]
    frame: pd.DataFrame
    calendar_origin: Optional[date] = None

    def __len__(self) -> int:
        return len(self.frame)

    def records(self) -> Iterator[SpellRecord]:
        covariates = self.frame[list(self.schema)].to_numpy(dtype=float)
        for k, row in enumerate(self.frame[list(SPELL_KEY_COLUMNS)].itertuples(index=False)):
            yield SpellRecord(
                loan_id=str(row.loan_id),
                spell_num=int(row.spell_num),
                spell_num_binned=int(row.spell_num_binned),
                entry=int(row.entry),
                stop=int(row.stop),
                status=int(row.status),
                resolution=ResolutionType(int(row.resolution)),
                spell_age=int(row.spell_age),
                period=int(row.period),
                spell_period=int(row.spell_period),
                spell_entry=int(row.spell_entry),
                spell_stop=int(row.spell_stop),
                covariates=tuple(covariates[k]),
            )

    @property
    def n_loans(self) -> int:
        return int(self.frame['loan_id'].nunique())

    @property
    def n_spells(self) -> int:
        return len(self.spells())

    @property
    def n_events(self) -> int:
        return int(self.frame['status'].sum())

    def covariate_matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        names = list(self.schema if names is None else names)
        return self.frame[names].to_numpy(dtype=float).reshape(len(self.frame), len(names))

    def spell_ids(self) -> np.ndarray:
        """Integer spell index per row, numbered in row order."""
        keys = self.frame['loan_id'].astype(str) + '\x1f' + self.frame['spell_num'].astype(str)
        changed = keys.ne(keys.shift()).to_numpy()
        return np.cumsum(changed) - 1

    def spells(self) -> pd.DataFrame:
        """One row per spell: the spell's last interval plus its first entry."""
        if self.frame.empty:
            return self.frame.iloc[0:0].assign(first_period=pd.Series([], dtype='int64'))
        groups = self.frame.groupby(['loan_id', 'spell_num'], sort=False)
        last = groups.tail(1).reset_index(drop=True)
        first_period = groups['period'].first().to_numpy()
        return last.assign(first_period=first_period)

    def with_schema(self, names: Sequence[str]) -> 'SpellDataset':
        names = tuple(names)
        frame = self.frame[list(SPELL_KEY_COLUMNS) + list(names)]
        return SpellDataset(self.technique, names, frame, self.calendar_origin)

    def first_spells(self) -> 'SpellDataset':
        frame = self.frame.loc[self.frame['spell_num'] == 1].reset_index(drop=True)
        return SpellDataset(self.technique, self.schema, frame, self.calendar_origin)

    def for_loans(self, loan_ids) -> 'SpellDataset':
        keep = self.frame['loan_id'].isin(set(loan_ids))
        return SpellDataset(self.technique, self.schema, self.frame.loc[keep].reset_index(drop=True),
                            self.calendar_origin)
