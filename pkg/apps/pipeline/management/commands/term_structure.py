"""
Actual (Kaplan-Meier) and predicted (Cox) term-structures of default probability

Usage:
    python manage.py term_structure --fit fit.json --spells valid_spells.csv --horizon 240 \
        --out actual.csv,predicted.csv
"""
from apps.core.settings_manager import EngineSettings
from apps.nonparametric.models import Denominator
from apps.pipeline.services import PipelineService
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand, parse_list


class Command(SpellhazCommand):
    help = 'Compare actual and predicted term-structures and report their MAE'

    def add_command_arguments(self, parser):
        parser.add_argument('--fit', required=True, help='Fit JSON written by fit')
        parser.add_argument('--spells', required=True, help='Spell CSV to evaluate on')
        parser.add_argument('--horizon', type=int, default=None, help='Last month (default: settings)')
        parser.add_argument('--t1', type=int, default=1, help='First month of the MAE window (default: 1)')
        parser.add_argument('--denominator', choices=Denominator.values, default=Denominator.ACTIVE.value)
        parser.add_argument('--out', default=None, help='actual.csv,predicted.csv')

    def run(self, **options):
        fit = PipelineService.read_fit(options['fit'])
        ds = SpellBuilderService.read_spells(options['spells'], fit.technique)
        horizon = options['horizon']
        if horizon is None:
            horizon = EngineSettings.get_term_structure_horizon()

        targets = parse_list(options['out']) or []
        if targets and len(targets) != 2:
            raise ValueError('--out takes two comma-separated paths: actual,predicted')
        actual_path = self.out_path(targets[0] if targets else None, 'actual.csv')
        predicted_path = self.out_path(targets[1] if targets else None, 'predicted.csv')

        mae = PipelineService.term_structures(
            fit, ds, horizon, options['t1'], options['denominator'], actual_path, predicted_path,
            actual_path.with_name('overlay.dat'), actual_path.with_name('term_structure.json'))
        self.success(f"MAE over [{options['t1']}, {horizon}] = {mae:.6g}")
