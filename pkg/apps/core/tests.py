import io
from datetime import date

import pandas as pd
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.utils.baseSerializers import load_validated

from .exceptions import PanelFormatError, PanelInvariantError, SamplingError
from .models import LoanState, Panel, SchemaConfig
from .serializers import SchemaConfigSerializer
from .services import PanelService
from .testing import appendix_panel, appendix_schema


def _panel(rows, schema=('x',)):
    frame = pd.DataFrame(rows, columns=['loan_id', 'period', 'state', *schema])
    frame['loan_id'] = frame['loan_id'].astype(str).astype(object)
    frame['period'] = frame['period'].astype('int64')
    for name in schema:
        frame[name] = frame[name].astype('float64')
    return Panel(tuple(schema), frame)


class IngestPanelTests(SimpleTestCase):

    def test_appendix_fixture(self):
        panel = appendix_panel()
        self.assertEqual(panel.n_loans, 4)
        self.assertEqual(len(panel), 25)
        self.assertEqual(panel.schema, ('ltv',))
        loan3 = panel.frame.loc[panel.frame['loan_id'] == '3', 'period'].tolist()
        self.assertEqual(loan3, [1, 2, 3, 4, 11, 12, 13])
        self.assertEqual(panel.calendar_origin, date(2007, 1, 1))

    def test_rows_are_sorted(self):
        text = "loan_id,period,state,x\nb,2,PERF,1\na,1,PERF,2\nb,1,PERF,3\n"
        panel = PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))
        keys = list(zip(panel.frame['loan_id'], panel.frame['period']))
        self.assertEqual(keys, [('a', 1), ('b', 1), ('b', 2)])

    def test_header_only(self):
        panel = PanelService.ingest_panel(io.StringIO("loan_id,period,state,x\n"), SchemaConfig(('x',)))
        self.assertEqual(len(panel), 0)
        self.assertEqual(PanelService.validate_panel(panel), [])

    def test_duplicate_row_reports_row_number(self):
        text = "loan_id,period,state,x\n1,1,PERF,0.1\n1,2,PERF,0.2\n1,2,PERF,0.3\n"
        with self.assertRaises(PanelFormatError) as ctx:
            PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))
        self.assertEqual(ctx.exception.row, 4)
        self.assertIn('duplicate', str(ctx.exception))

    def test_non_numeric_covariate(self):
        text = "loan_id,period,state,x\n1,1,PERF,0.1\n1,2,PERF,abc\n"
        with self.assertRaises(PanelFormatError) as ctx:
            PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))
        self.assertEqual(ctx.exception.row, 3)

    def test_missing_covariate_is_rejected(self):
        text = "loan_id,period,state,x\n1,1,PERF,\n"
        with self.assertRaises(PanelFormatError) as ctx:
            PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))
        self.assertIn('missing', str(ctx.exception))

    def test_unknown_state(self):
        text = "loan_id,period,state,x\n1,1,PERF,0.1\n1,2,LATE,0.2\n"
        with self.assertRaises(PanelFormatError) as ctx:
            PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))
        self.assertEqual(ctx.exception.row, 3)
        self.assertIn('LATE', str(ctx.exception))

    def test_header_mismatch(self):
        with self.assertRaises(PanelFormatError) as ctx:
            PanelService.ingest_panel(io.StringIO("loan_id,period,state,y\n"), SchemaConfig(('x',)))
        self.assertEqual(ctx.exception.row, 1)

    def test_gap_inside_spell_is_an_invariant_error(self):
        text = "loan_id,period,state,x\n1,1,PERF,0\n1,2,PERF,0\n1,4,PERF,0\n"
        with self.assertRaises(PanelInvariantError):
            PanelService.ingest_panel(io.StringIO(text), SchemaConfig(('x',)))

    def test_write_then_ingest_is_identity(self):
        panel = appendix_panel()
        buffer = io.StringIO()
        PanelService.write_panel(panel, buffer)
        buffer.seek(0)
        again = PanelService.ingest_panel(buffer, appendix_schema())
        self.assertTrue(panel.equals(again))


class ValidatePanelTests(SimpleTestCase):

    def test_appendix_is_clean(self):
        self.assertEqual(PanelService.validate_panel(appendix_panel()), [])

    def test_gap_within_performing_spell(self):
        panel = _panel([('1', 1, 'PERF', 0), ('1', 2, 'PERF', 0), ('1', 4, 'PERF', 0)])
        kinds = [v.kind for v in PanelService.validate_panel(panel)]
        self.assertEqual(kinds, ['gap'])

    def test_gap_after_default_is_allowed(self):
        panel = _panel([('1', 1, 'PERF', 0), ('1', 2, 'DEF', 0), ('1', 7, 'PERF', 0)])
        self.assertEqual(PanelService.validate_panel(panel), [])

    def test_descending_periods(self):
        panel = _panel([('1', 3, 'PERF', 0), ('1', 2, 'PERF', 0)])
        violations = PanelService.validate_panel(panel)
        self.assertIn('ordering', [v.kind for v in violations])
        self.assertEqual(violations[0].loan_id, '1')

    def test_rows_after_settlement(self):
        panel = _panel([('1', 1, 'PERF', 0), ('1', 2, 'SET', 0), ('1', 3, 'PERF', 0)])
        self.assertEqual([v.kind for v in PanelService.validate_panel(panel)], ['after_terminal'])


class StrataTests(SimpleTestCase):

    def test_loan_status_strata(self):
        strata = PanelService.loan_status_strata(appendix_panel())
        self.assertEqual(strata, {'1': 'defaulted', '2': 'active', '3': 'settled', '4': 'active'})

    def test_covariate_strata_unknown_column(self):
        with self.assertRaises(SamplingError):
            PanelService.covariate_strata(appendix_panel(), 'region')

    def test_covariate_strata_uses_last_value(self):
        panel = _panel([('1', 1, 'PERF', 0), ('1', 2, 'PERF', 1), ('2', 1, 'PERF', 0)])
        self.assertEqual(PanelService.covariate_strata(panel, 'x'), {'1': '1', '2': '0'})


class SchemaConfigTests(SimpleTestCase):

    def test_calendar_labels(self):
        panel = appendix_panel()
        self.assertEqual(panel.calendar_label(1), '2007-01')
        self.assertEqual(panel.calendar_label(13), '2008-01')

    def test_duplicate_names_rejected(self):
        with self.assertRaises(ValidationError):
            load_validated(SchemaConfigSerializer, {'covariates': ['x', 'x']})

    def test_reserved_names_rejected(self):
        with self.assertRaises(ValidationError):
            load_validated(SchemaConfigSerializer, {'covariates': ['period']})

    def test_state_labels(self):
        self.assertEqual(sorted(LoanState.values), ['DEF', 'PERF', 'SET', 'WO'])
