import io

import numpy as np
from django.test import SimpleTestCase

from apps.core.exceptions import PanelInvariantError, SpellFormatError
from apps.core.models import ResolutionType, Technique
from apps.core.testing import appendix_panel
from apps.synthgen.models import GeneratorSpec
from apps.synthgen.services import GeneratorService

from .services import SpellBuilderService

D, S, C = ResolutionType.DEFAULT, ResolutionType.SETTLED, ResolutionType.CENSORED

# loan, period, spell number, spell period, entry, stop, resolution, spell age
AG_TABLE = [
    ('1', 1, 1, 1, 0, 4, D, 4), ('1', 2, 1, 2, 0, 4, D, 4), ('1', 3, 1, 3, 0, 4, D, 4), ('1', 4, 1, 4, 0, 4, D, 4),
    ('2', 1, 1, 1, 0, 3, C, 3), ('2', 2, 1, 2, 0, 3, C, 3), ('2', 3, 1, 3, 0, 3, C, 3),
    ('3', 1, 1, 1, 0, 4, D, 4), ('3', 2, 1, 2, 0, 4, D, 4), ('3', 3, 1, 3, 0, 4, D, 4), ('3', 4, 1, 4, 0, 4, D, 4),
    ('3', 11, 2, 1, 10, 13, S, 3), ('3', 12, 2, 2, 10, 13, S, 3), ('3', 13, 2, 3, 10, 13, S, 3),
    ('4', 5, 1, 5, 4, 9, D, 5), ('4', 6, 1, 6, 4, 9, D, 5), ('4', 7, 1, 7, 4, 9, D, 5),
    ('4', 8, 1, 8, 4, 9, D, 5), ('4', 9, 1, 9, 4, 9, D, 5),
    ('4', 20, 2, 1, 19, 23, D, 4), ('4', 21, 2, 2, 19, 23, D, 4), ('4', 22, 2, 3, 19, 23, D, 4),
    ('4', 23, 2, 4, 19, 23, D, 4),
    ('4', 40, 3, 1, 39, 41, C, 2), ('4', 41, 3, 2, 39, 41, C, 2),
]

TFD_TABLE = [row for row in AG_TABLE if row[2] == 1]

PWP_TABLE = [
    ('1', 1, 1, 1, 0, 4, D, 4), ('1', 2, 1, 2, 0, 4, D, 4), ('1', 3, 1, 3, 0, 4, D, 4), ('1', 4, 1, 4, 0, 4, D, 4),
    ('2', 1, 1, 1, 0, 3, C, 3), ('2', 2, 1, 2, 0, 3, C, 3), ('2', 3, 1, 3, 0, 3, C, 3),
    ('3', 1, 1, 1, 0, 4, D, 4), ('3', 2, 1, 2, 0, 4, D, 4), ('3', 3, 1, 3, 0, 4, D, 4), ('3', 4, 1, 4, 0, 4, D, 4),
    ('3', 11, 2, 1, 0, 3, S, 3), ('3', 12, 2, 2, 0, 3, S, 3), ('3', 13, 2, 3, 0, 3, S, 3),
    ('4', 5, 1, 5, 0, 5, D, 5), ('4', 6, 1, 6, 0, 5, D, 5), ('4', 7, 1, 7, 0, 5, D, 5),
    ('4', 8, 1, 8, 0, 5, D, 5), ('4', 9, 1, 9, 0, 5, D, 5),
    ('4', 20, 2, 1, 0, 4, D, 4), ('4', 21, 2, 2, 0, 4, D, 4), ('4', 22, 2, 3, 0, 4, D, 4),
    ('4', 23, 2, 4, 0, 4, D, 4),
    ('4', 40, 3, 1, 0, 2, C, 2), ('4', 41, 3, 2, 0, 2, C, 2),
]


def _layout(ds):
    return [
        (r.loan_id, r.period, r.spell_num, r.spell_period, r.spell_entry, r.spell_stop, r.resolution, r.spell_age)
        for r in ds.records()
    ]


def _intervals(ds, loan_id, spell_num):
    return [(r.entry, r.stop, r.status) for r in ds.records() if r.loan_id == loan_id and r.spell_num == spell_num]


def _portfolio(**overrides):
    params = dict(n_loans=300, max_horizon=60, true_beta=(0.4,), baseline_hazards=(0.03, 0.05, 0.06),
                  cure_prob=0.3, settle_hazard=0.005, max_left_truncation=6, censor_min=30, seed=11)
    params.update(overrides)
    return GeneratorService.generate(GeneratorSpec(**params), threads=1)


class AppendixLayoutTests(SimpleTestCase):

    def setUp(self):
        self.panel = appendix_panel()

    def test_tfd_table(self):
        ds = SpellBuilderService.build_spells(self.panel, Technique.TFD)
        self.assertEqual(_layout(ds), TFD_TABLE)

    def test_ag_table(self):
        ds = SpellBuilderService.build_spells(self.panel, Technique.AG)
        self.assertEqual(_layout(ds), AG_TABLE)

    def test_pwp_table(self):
        ds = SpellBuilderService.build_spells(self.panel, Technique.PWP)
        self.assertEqual(_layout(ds), PWP_TABLE)

    def test_ag_loan3_intervals(self):
        ds = SpellBuilderService.build_spells(self.panel, 'ag')
        self.assertEqual(_intervals(ds, '3', 1), [(0, 1, 0), (1, 2, 0), (2, 3, 0), (3, 4, 1)])
        self.assertEqual(_intervals(ds, '3', 2), [(10, 11, 0), (11, 12, 0), (12, 13, 0)])

    def test_pwp_loan3_second_spell(self):
        ds = SpellBuilderService.build_spells(self.panel, 'pwp')
        self.assertEqual(_intervals(ds, '3', 2), [(0, 1, 0), (1, 2, 0), (2, 3, 0)])

    def test_tfd_left_truncated_loan(self):
        ds = SpellBuilderService.build_spells(self.panel, 'tfd')
        self.assertEqual(_intervals(ds, '4', 1), [(4, 5, 0), (5, 6, 0), (6, 7, 0), (7, 8, 0), (8, 9, 1)])
        self.assertEqual(_intervals(ds, '4', 2), [])

    def test_ag_censored_third_spell(self):
        ds = SpellBuilderService.build_spells(self.panel, 'ag')
        self.assertEqual(_intervals(ds, '4', 3), [(39, 40, 0), (40, 41, 0)])

    def test_status_only_on_last_default_interval(self):
        ds = SpellBuilderService.build_spells(self.panel, 'ag')
        events = ds.frame.loc[ds.frame['status'] == 1, ['loan_id', 'spell_num', 'stop']]
        self.assertEqual([tuple(r) for r in events.itertuples(index=False)],
                         [('1', 1, 4), ('3', 1, 4), ('4', 1, 9), ('4', 2, 23)])

    def test_row_conservation(self):
        ds = SpellBuilderService.build_spells(self.panel, 'ag')
        self.assertEqual(len(ds), len(self.panel))

    def test_spell_num_binned(self):
        ds = SpellBuilderService.build_spells(self.panel, 'pwp')
        self.assertTrue((ds.frame['spell_num_binned'] == np.minimum(ds.frame['spell_num'], 4)).all())


class SpellSummaryTests(SimpleTestCase):

    def test_appendix_histogram(self):
        ds = SpellBuilderService.build_spells(appendix_panel(), 'ag')
        summary = SpellBuilderService.spell_summary(ds)
        self.assertEqual(summary.max_spell_histogram, {1: 2, 2: 1, 3: 1})
        self.assertEqual(summary.resolution_counts, {D: 4, S: 1, C: 2})
        self.assertEqual(summary.n_loans, 4)
        self.assertEqual(summary.n_spells, 7)

    def test_empty_dataset(self):
        ds = SpellBuilderService.build_spells(appendix_panel().subset([]), 'ag')
        summary = SpellBuilderService.spell_summary(ds)
        self.assertEqual(summary.max_spell_histogram, {})
        self.assertEqual(len(ds), 0)

    def test_no_cure_gives_single_spells(self):
        panel = _portfolio(cure_prob=0.0)
        summary = SpellBuilderService.spell_summary(SpellBuilderService.build_spells(panel, 'ag'))
        self.assertEqual(set(summary.max_spell_histogram), {1})


class SyntheticInvariantTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.panel = _portfolio()
        cls.ag = SpellBuilderService.build_spells(cls.panel, 'ag')
        cls.pwp = SpellBuilderService.build_spells(cls.panel, 'pwp')
        cls.tfd = SpellBuilderService.build_spells(cls.panel, 'tfd')

    def test_time_scale_equivalence(self):
        ag = self.ag.spells()
        pwp = self.pwp.spells()
        self.assertTrue(((ag['spell_stop'] - ag['spell_entry']).to_numpy() == pwp['spell_stop'].to_numpy()).all())
        self.assertTrue((pwp['spell_stop'] == pwp['spell_age']).all())

    def test_intervals_tile_within_spells(self):
        for ds in (self.ag, self.pwp):
            frame = ds.frame
            same = (frame['loan_id'].eq(frame['loan_id'].shift())
                    & frame['spell_num'].eq(frame['spell_num'].shift()))
            self.assertTrue((frame['entry'][same] == frame['stop'].shift()[same]).all())
            self.assertTrue((frame['stop'] > frame['entry']).all())

    def test_first_spell_identity(self):
        ag_first = self.ag.first_spells().frame
        self.assertTrue(ag_first.equals(self.tfd.frame))
        untruncated = ag_first.groupby(['loan_id'])['spell_entry'].transform('first') == 0
        pwp_first = self.pwp.first_spells().frame
        self.assertTrue(ag_first[untruncated].reset_index(drop=True).equals(
            pwp_first[untruncated.to_numpy()].reset_index(drop=True)))

    def test_ag_spells_of_a_loan_are_disjoint(self):
        spells = self.ag.spells()
        previous_stop = spells.groupby('loan_id')['spell_stop'].shift()
        later = previous_stop.notna()
        self.assertTrue((spells['spell_entry'][later] >= previous_stop[later]).all())

    def test_threads_do_not_change_output(self):
        single = SpellBuilderService.build_spells(self.panel, 'pwp', threads=1)
        many = SpellBuilderService.build_spells(self.panel, 'pwp', threads=4)
        self.assertTrue(single.frame.equals(many.frame))


class SpellCsvTests(SimpleTestCase):

    def test_written_spells_read_back(self):
        ds = SpellBuilderService.build_spells(appendix_panel(), 'pwp')
        buffer = io.StringIO()
        SpellBuilderService.write_spells(ds, buffer)
        buffer.seek(0)
        again = SpellBuilderService.read_spells(buffer, 'pwp')
        self.assertEqual(again.schema, ('ltv',))
        self.assertTrue(again.frame.equals(ds.frame))

    def test_tfd_file_with_later_spells_is_rejected(self):
        ds = SpellBuilderService.build_spells(appendix_panel(), 'ag')
        buffer = io.StringIO()
        SpellBuilderService.write_spells(ds, buffer)
        buffer.seek(0)
        with self.assertRaises(SpellFormatError):
            SpellBuilderService.read_spells(buffer, 'tfd')

    def test_bad_header(self):
        with self.assertRaises(SpellFormatError):
            SpellBuilderService.read_spells(io.StringIO("loan_id,entry,stop\n1,0,1\n"), 'ag')

    def test_invalid_panel_is_refused(self):
        panel = appendix_panel()
        broken = panel.frame.drop(index=1).reset_index(drop=True)
        with self.assertRaises(PanelInvariantError):
            SpellBuilderService.build_spells(type(panel)(panel.schema, broken), 'ag')
