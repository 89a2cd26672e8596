"""
Build counting-process spells for one technique

Usage:
    python manage.py build_spells --panel panel.csv --schema schema.json --technique pwp
"""
from apps.core.models import Technique
from apps.core.services import PanelService
from apps.pipeline.services import PipelineService
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand


class Command(SpellhazCommand):
    help = 'Restructure a panel into TFD, AG or PWP spell data'

    def add_command_arguments(self, parser):
        parser.add_argument('--panel', required=True, help='Panel CSV')
        parser.add_argument('--schema', required=True, help='Schema config (JSON or YAML)')
        parser.add_argument('--technique', required=True, choices=Technique.values)
        parser.add_argument('--out', default=None, help='Spell CSV (default: <out-dir>/spells_<technique>.csv)')

    def run(self, **options):
        schema = PipelineService.load_schema(options['schema'])
        panel = PanelService.ingest_panel(options['panel'], schema)
        ds = SpellBuilderService.build_spells(panel, options['technique'], threads=options['threads'])
        target = self.out_path(options['out'], f"spells_{options['technique']}.csv")
        SpellBuilderService.write_spells(ds, target)

        summary = SpellBuilderService.spell_summary(ds)
        self.stdout.write(f"Loans by highest spell number: {summary.max_spell_histogram}")
        self.stdout.write(
            f"Spells by resolution: {({k.label: v for k, v in summary.resolution_counts.items()})}")
        self.success(f"Wrote {len(ds)} intervals ({ds.n_spells} spells) to {target}")
