"""
Generate a synthetic loan-month panel from a generator spec

Usage:
    python manage.py synth --spec spec.json --out panel.csv
"""
from apps.core.services import PanelService
from apps.pipeline.services import PipelineService
from apps.synthgen.services import GeneratorService
from apps.utils.baseCommands import SpellhazCommand


class Command(SpellhazCommand):
    help = 'Simulate a recurrent-default loan panel with known hazards'

    def add_command_arguments(self, parser):
        parser.add_argument('--spec', required=True, help='Generator spec (JSON or YAML)')
        parser.add_argument('--out', default=None, help='Panel CSV (default: <out-dir>/panel.csv)')

    def run(self, **options):
        spec = PipelineService.load_generator_spec(options['spec'], seed=options['seed'])
        panel = GeneratorService.generate(spec, threads=options['threads'])
        target = self.out_path(options['out'], 'panel.csv')
        PanelService.write_panel(panel, target)
        self.success(f"Wrote {len(panel)} rows for {panel.n_loans} loans to {target}")
