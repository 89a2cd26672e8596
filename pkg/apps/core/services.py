import logging
from typing import IO, List, Union
from pathlib import Path

import numpy as np
import pandas as pd

from .constants import LOAN_STATUS_LABELS, PANEL_KEY_COLUMNS
from .exceptions import PanelFormatError, PanelInvariantError, SamplingError
from .models import LoanState, Panel, PanelViolation, SchemaConfig
from .settings_manager import EngineSettings

logger = logging.getLogger(__name__)

# First data row sits on line 2 of the file
HEADER_OFFSET = 2

Source = Union[str, Path, IO[str]]


class PanelService:
    """Panel ingestion, validation and CSV emission."""

    @staticmethod
    def ingest_panel(source: Source, schema: SchemaConfig) -> Panel:
        """
        Read a loan-month CSV into a validated, sorted Panel.

        Args:
            source: path or text stream with ``loan_id,period,state`` then covariates
            schema: covariate names (and optional calendar origin)

        Returns:
            Panel: rows sorted by (loan_id, period)
        """
        try:
            raw = pd.read_csv(source, dtype=str, keep_default_na=False, encoding='utf-8')
        except pd.errors.EmptyDataError:
            raise PanelFormatError('missing header row', row=1)
        except pd.errors.ParserError as exc:
            raise PanelFormatError(f'malformed CSV: {exc}')

        expected = list(PANEL_KEY_COLUMNS) + list(schema.covariates)
        header = [str(c).strip() for c in raw.columns]
        if sorted(header) != sorted(expected) or header[:len(PANEL_KEY_COLUMNS)] != list(PANEL_KEY_COLUMNS):
            raise PanelFormatError(f"header {header} does not match expected columns {expected}", row=1)
        raw.columns = header
        raw = raw[expected]

        row_numbers = np.arange(len(raw)) + HEADER_OFFSET

        loan_ids = raw['loan_id'].str.strip()
        blank_ids = loan_ids.eq('').to_numpy()
        if blank_ids.any():
            raise PanelFormatError('empty loan_id', row=int(row_numbers[blank_ids][0]))

        periods = pd.to_numeric(raw['period'].str.strip(), errors='coerce')
        bad_period = (periods.isna() | (periods != np.floor(periods))).to_numpy()
        if bad_period.any():
            k = int(np.flatnonzero(bad_period)[0])
            raise PanelFormatError(f"period {raw['period'].iloc[k]!r} is not an integer", row=int(row_numbers[k]))

        states = raw['state'].str.strip()
        bad_state = (~states.isin(LoanState.values)).to_numpy()
        if bad_state.any():
            k = int(np.flatnonzero(bad_state)[0])
            raise PanelFormatError(
                f"unknown state label {states.iloc[k]!r} (expected one of {', '.join(LoanState.values)})",
                row=int(row_numbers[k]),
            )

        frame = pd.DataFrame({
            'loan_id': loan_ids.astype(object),
            'period': periods.astype('int64'),
            'state': states.astype(object),
        })
        for name in schema.covariates:
            text = raw[name].str.strip()
            missing = text.eq('').to_numpy()
            if missing.any():
                raise PanelFormatError(f"missing value for covariate {name!r}", row=int(row_numbers[missing][0]))
            values = pd.to_numeric(text, errors='coerce')
            bad = (~np.isfinite(values.to_numpy(dtype=float))) if len(values) else np.zeros(0, dtype=bool)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise PanelFormatError(f"non-numeric value {text.iloc[k]!r} for covariate {name!r}",
                                       row=int(row_numbers[k]))
            frame[name] = values.astype('float64')

        duplicated = frame.duplicated(['loan_id', 'period'], keep='first').to_numpy()
        if duplicated.any():
            k = int(np.flatnonzero(duplicated)[0])
            raise PanelFormatError(
                f"duplicate (loan_id, period) = ({frame['loan_id'].iloc[k]}, {frame['period'].iloc[k]})",
                row=int(row_numbers[k]),
            )

        frame = frame.sort_values(['loan_id', 'period'], kind='mergesort').reset_index(drop=True)
        panel = Panel(schema=tuple(schema.covariates), frame=frame, calendar_origin=schema.calendar_origin)

        violations = PanelService.validate_panel(panel)
        if violations:
            raise PanelInvariantError(violations)

        logger.info(f"Ingested panel: {len(panel)} rows, {panel.n_loans} loans, {len(panel.schema)} covariates")
        return panel

    @staticmethod
    def validate_panel(panel: Panel) -> List[PanelViolation]:
        """Check every Panel invariant; violations are returned, never raised."""
        violations: List[PanelViolation] = []
        schema = list(panel.schema)
        frame = panel.frame

        if len(set(schema)) != len(schema):
            violations.append(PanelViolation(None, 'schema', f"duplicate covariate names in {schema}"))
        missing = [c for c in list(PANEL_KEY_COLUMNS) + schema if c not in frame.columns]
        if missing:
            violations.append(PanelViolation(None, 'schema', f"missing columns {missing}"))
            return violations
        if frame.empty:
            return violations

        loan = frame['loan_id'].astype(str).to_numpy()
        period = frame['period'].to_numpy(dtype=np.int64)
        state = frame['state'].astype(str).to_numpy()

        for k in np.flatnonzero(~np.isin(state, LoanState.values)):
            violations.append(PanelViolation(loan[k], 'state', f"unknown state {state[k]!r} at period {period[k]}"))
        for k in np.flatnonzero(period < 1):
            violations.append(PanelViolation(loan[k], 'period', f"period {period[k]} is below 1"))
        if schema:
            values = frame[schema].to_numpy(dtype=float)
            for k in np.flatnonzero(~np.isfinite(values).all(axis=1)):
                violations.append(PanelViolation(loan[k], 'covariate', f"non-finite covariate at period {period[k]}"))

        same_loan = loan[1:] == loan[:-1]
        step = period[1:] - period[:-1]
        prev_state = state[:-1]

        for k in np.flatnonzero(~same_loan & (loan[1:] < loan[:-1])):
            violations.append(PanelViolation(loan[k + 1], 'ordering', f"loan follows {loan[k]} out of order"))
        for k in np.flatnonzero(same_loan & (step == 0)):
            violations.append(PanelViolation(loan[k], 'duplicate', f"period {period[k]} appears twice"))
        for k in np.flatnonzero(same_loan & (step < 0)):
            violations.append(PanelViolation(
                loan[k], 'ordering', f"period {period[k + 1]} follows period {period[k]}"))
        for k in np.flatnonzero(same_loan & (step > 1) & (prev_state == LoanState.PERFORMING.value)):
            violations.append(PanelViolation(
                loan[k], 'gap', f"gap within performing spell between periods {period[k]} and {period[k + 1]}"))
        terminal = np.isin(prev_state, [LoanState.SETTLED.value, LoanState.WRITE_OFF.value])
        for k in np.flatnonzero(same_loan & terminal):
            violations.append(PanelViolation(
                loan[k], 'after_terminal', f"period {period[k + 1]} observed after {prev_state[k]} at period {period[k]}"))

        if violations:
            logger.warning(f"Panel validation found {len(violations)} violation(s)")
        return violations

    @staticmethod
    def write_panel(panel: Panel, target: Source) -> None:
        panel.frame.to_csv(target, index=False, float_format=EngineSettings.get_float_format(),
                           lineterminator='\n')
        logger.info(f"Wrote panel with {len(panel)} rows")

    @staticmethod
    def loan_status_strata(panel: Panel) -> dict:
        """Stratum label per loan from its last observed state."""
        last = panel.frame.groupby('loan_id', sort=False)['state'].last()
        return {str(loan_id): LOAN_STATUS_LABELS[state] for loan_id, state in last.items()}

    @staticmethod
    def covariate_strata(panel: Panel, name: str) -> dict:
        """Stratum label per loan from the last observed value of a covariate."""
        if name not in panel.schema:
            raise SamplingError(f"unknown strata column {name!r}; use 'loan_status' or a covariate name")
        last = panel.frame.groupby('loan_id', sort=False)[name].last()
        return {str(loan_id): format(value, 'g') for loan_id, value in last.items()}
