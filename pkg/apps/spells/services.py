import logging
from typing import Optional

import numpy as np
import pandas as pd

from apps.core.constants import SPELL_INT_COLUMNS, SPELL_KEY_COLUMNS
from apps.core.exceptions import PanelInvariantError, SpellFormatError
from apps.core.models import LoanState, Panel, ResolutionType, SpellDataset, Technique
from apps.core.services import PanelService, Source
from apps.core.settings_manager import EngineSettings
from apps.utils.parallel import chunk_bounds, ordered_map, resolve_threads

from .models import SpellSummary

logger = logging.getLogger(__name__)

_RESOLUTION_CODES = {
    LoanState.PERFORMING.value: ResolutionType.CENSORED.value,
    LoanState.DEFAULT.value: ResolutionType.DEFAULT.value,
    LoanState.SETTLED.value: ResolutionType.SETTLED.value,
    LoanState.WRITE_OFF.value: ResolutionType.WRITE_OFF.value,
}


class SpellBuilderService:
    """Turns a loan-month Panel into technique-specific counting-process spells."""

    @staticmethod
    def build_spells(panel: Panel, technique, threads: Optional[int] = None) -> SpellDataset:
        """
        Build the spell dataset for one technique.

        A performing spell starts at a PERF row and runs over consecutive
        months; it ends on the first DEF/SET/WO month (kept as the spell's
        last interval) or on the loan's last observed month (censored).
        Months spent in default between spells belong to no spell.

        Args:
            panel: validated panel
            technique: 'tfd', 'ag' or 'pwp'
            threads: worker threads for the per-loan pass

        Returns:
            SpellDataset: rows sorted by (loan_id, spell_num, entry)
        """
        technique = Technique(technique)
        violations = PanelService.validate_panel(panel)
        if violations:
            raise PanelInvariantError(violations)

        bin_cap = EngineSettings.get_spell_bin_cap()
        frame = panel.frame
        n_jobs = resolve_threads(threads)

        loan = frame['loan_id'].astype(str).to_numpy()
        loan_starts = np.flatnonzero(np.r_[True, loan[1:] != loan[:-1]]) if len(loan) else np.zeros(0, int)
        loan_edges = np.r_[loan_starts, len(loan)]
        blocks = [
            (int(loan_edges[a]), int(loan_edges[b]))
            for a, b in chunk_bounds(len(loan_starts), n_jobs * 4)
        ]

        def build_block(bounds):
            start, stop = bounds
            return _spell_rows(frame.iloc[start:stop], panel.schema, technique, bin_cap)

        parts = ordered_map(build_block, blocks, threads=n_jobs)
        if parts:
            spells = pd.concat(parts, ignore_index=True)
        else:
            spells = _spell_rows(frame, panel.schema, technique, bin_cap)

        dataset = SpellDataset(technique, tuple(panel.schema), spells, panel.calendar_origin)
        logger.info(
            f"Built {technique.label} spells: {dataset.n_spells} spells, {len(dataset)} intervals, "
            f"{dataset.n_events} default events from {panel.n_loans} loans"
        )
        return dataset

    @staticmethod
    def spell_summary(ds: SpellDataset) -> SpellSummary:
        spells = ds.spells()
        if spells.empty:
            return SpellSummary()
        max_spell = spells.groupby('loan_id', sort=False)['spell_num'].max()
        histogram = {int(k): int(v) for k, v in max_spell.value_counts().sort_index().items()}
        counts = spells['resolution'].value_counts().sort_index()
        resolution_counts = {ResolutionType(int(k)): int(v) for k, v in counts.items()}
        return SpellSummary(histogram, resolution_counts)

    @staticmethod
    def write_spells(ds: SpellDataset, target: Source) -> None:
        columns = list(SPELL_KEY_COLUMNS) + list(ds.schema)
        ds.frame[columns].to_csv(target, index=False, float_format=EngineSettings.get_float_format(),
                                 lineterminator='\n')
        logger.info(f"Wrote {len(ds)} {ds.technique} spell intervals")

    @staticmethod
    def read_spells(source: Source, technique, calendar_origin=None) -> SpellDataset:
        """Read a spell CSV written by ``write_spells``; covariates are the trailing columns."""
        technique = Technique(technique)
        try:
            frame = pd.read_csv(source, dtype={'loan_id': str}, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise SpellFormatError('missing header row', row=1)

        header = list(frame.columns)
        if header[:len(SPELL_KEY_COLUMNS)] != list(SPELL_KEY_COLUMNS):
            raise SpellFormatError(f"spell header must start with {list(SPELL_KEY_COLUMNS)}", row=1)
        schema = tuple(header[len(SPELL_KEY_COLUMNS):])

        frame['loan_id'] = frame['loan_id'].astype(str).astype(object)
        for name in SPELL_INT_COLUMNS:
            values = pd.to_numeric(frame[name], errors='coerce')
            if values.isna().any():
                row = int(np.flatnonzero(values.isna().to_numpy())[0]) + 2
                raise SpellFormatError(f"column {name!r} is not an integer", row=row)
            frame[name] = values.astype('int64')
        for name in schema:
            values = pd.to_numeric(frame[name], errors='coerce')
            if not np.isfinite(values.to_numpy(dtype=float)).all():
                row = int(np.flatnonzero(~np.isfinite(values.to_numpy(dtype=float)))[0]) + 2
                raise SpellFormatError(f"covariate {name!r} is not numeric", row=row)
            frame[name] = values.astype('float64')

        if technique == Technique.TFD and (frame['spell_num'] != 1).any():
            raise SpellFormatError('TFD spell files only hold first spells')
        if (frame['stop'] <= frame['entry']).any():
            row = int(np.flatnonzero((frame['stop'] <= frame['entry']).to_numpy())[0]) + 2
            raise SpellFormatError('interval stop must exceed entry', row=row)
        return SpellDataset(technique, schema, frame, calendar_origin)


def _spell_rows(frame: pd.DataFrame, schema, technique: Technique, bin_cap: int) -> pd.DataFrame:
    """Vectorized spell construction for a block of whole loans."""
    loan = frame['loan_id'].astype(str).to_numpy()
    period = frame['period'].to_numpy(dtype=np.int64)
    state = frame['state'].astype(str).to_numpy()
    n = len(frame)

    performing = state == LoanState.PERFORMING.value
    same_loan = np.r_[False, loan[1:] == loan[:-1]] if n else np.zeros(0, bool)
    consecutive = np.r_[False, period[1:] == period[:-1] + 1] if n else np.zeros(0, bool)
    prev_performing = np.r_[False, performing[:-1]] if n else np.zeros(0, bool)

    # row continues the spell opened by an earlier PERF row
    continues = same_loan & consecutive & prev_performing
    in_spell = performing | continues
    opens = performing & ~continues

    rows = np.flatnonzero(in_spell)
    spell_index = np.cumsum(opens)[rows] - 1

    loan_in = loan[rows]
    period_in = period[rows]
    opens_in = opens[rows]

    # spell number within loan
    first_of_loan = np.r_[True, loan_in[1:] != loan_in[:-1]] if len(rows) else np.zeros(0, bool)
    opens_cum = np.cumsum(opens_in)
    loan_base = np.maximum.accumulate(np.where(first_of_loan, opens_cum - opens_in, 0)) if len(rows) else opens_cum
    spell_num = opens_cum - loan_base

    # per-spell aggregates broadcast back to rows
    n_spells = int(opens.sum())
    first_period = np.zeros(n_spells, dtype=np.int64)
    last_period = np.zeros(n_spells, dtype=np.int64)
    last_row = np.zeros(n_spells, dtype=np.int64)
    if len(rows):
        starts = np.flatnonzero(np.r_[True, spell_index[1:] != spell_index[:-1]])
        ends = np.r_[starts[1:], len(rows)] - 1
        first_period[:] = period_in[starts]
        last_period[:] = period_in[ends]
        last_row[:] = rows[ends]
    resolution_of_spell = np.array([_RESOLUTION_CODES[s] for s in state[last_row]], dtype=np.int64)

    f = first_period[spell_index]
    length = (last_period - first_period + 1)[spell_index]
    resolution = resolution_of_spell[spell_index]
    is_last = rows == last_row[spell_index]
    status = (is_last & (resolution == ResolutionType.DEFAULT.value)).astype(np.int64)

    if technique == Technique.PWP:
        entry = period_in - f
        stop = entry + 1
        spell_entry = np.zeros_like(entry)
        spell_stop = length
    else:
        entry = period_in - 1
        stop = period_in
        spell_entry = f - 1
        spell_stop = last_period[spell_index]
    spell_period = np.where(spell_num == 1, period_in, period_in - f + 1)

    out = pd.DataFrame({
        'loan_id': loan_in.astype(object),
        'spell_num': spell_num.astype(np.int64),
        'spell_num_binned': np.minimum(spell_num, bin_cap).astype(np.int64),
        'entry': entry.astype(np.int64),
        'stop': stop.astype(np.int64),
        'status': status,
        'resolution': resolution,
        'spell_age': length.astype(np.int64),
        'period': period_in,
        'spell_period': spell_period.astype(np.int64),
        'spell_entry': spell_entry.astype(np.int64),
        'spell_stop': spell_stop.astype(np.int64),
    })
    for name in schema:
        out[name] = frame[name].to_numpy(dtype=float)[rows]

    if technique == Technique.TFD:
        out = out.loc[out['spell_num'] == 1].reset_index(drop=True)
    return out
