"""
Validate a loan-month panel CSV and write it back sorted

Usage:
    python manage.py ingest --panel raw.csv --schema schema.json
"""
from apps.core.services import PanelService
from apps.pipeline.services import PipelineService
from apps.utils.baseCommands import SpellhazCommand


class Command(SpellhazCommand):
    help = 'Ingest and validate a loan-month panel'

    def add_command_arguments(self, parser):
        parser.add_argument('--panel', required=True, help='Panel CSV: loan_id,period,state,<covariates>')
        parser.add_argument('--schema', required=True, help='Schema config (JSON or YAML)')
        parser.add_argument('--out', default=None, help='Sorted panel CSV (default: <out-dir>/panel.csv)')

    def run(self, **options):
        schema = PipelineService.load_schema(options['schema'])
        panel = PanelService.ingest_panel(options['panel'], schema)
        target = self.out_path(options['out'], 'panel.csv')
        PanelService.write_panel(panel, target)
        self.success(f"Panel valid: {len(panel)} rows, {panel.n_loans} loans -> {target}")
