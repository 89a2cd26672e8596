"""
Split a panel into training and validation loans and check representativeness

Usage:
    python manage.py sample --panel panel.csv --schema schema.json --technique pwp --train-fraction 0.7
"""
from apps.core.constants import LOAN_STATUS_STRATA
from apps.core.models import ResolutionType, Technique
from apps.core.services import PanelService
from apps.core.settings_manager import EngineSettings
from apps.pipeline.services import PipelineService, write_json
from apps.sampling.services import SamplingService
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand


class Command(SpellhazCommand):
    help = 'Stratified clustered train/validation split with resolution-rate checks'

    def add_command_arguments(self, parser):
        parser.add_argument('--panel', required=True, help='Panel CSV')
        parser.add_argument('--schema', required=True, help='Schema config (JSON or YAML)')
        parser.add_argument('--technique', choices=Technique.values, default=Technique.PWP.value)
        parser.add_argument('--train-fraction', type=float, default=None,
                            help='Share of loans per stratum for training (default: settings)')
        parser.add_argument('--strata-col', default=LOAN_STATUS_STRATA,
                            help="'loan_status' or a covariate name (default: loan_status)")

    def run(self, **options):
        seed = options['seed'] or 0
        fraction = options['train_fraction']
        if fraction is None:
            fraction = EngineSettings.get_train_fraction()
        schema = PipelineService.load_schema(options['schema'])
        panel = PanelService.ingest_panel(options['panel'], schema)
        full = SpellBuilderService.build_spells(panel, options['technique'], threads=options['threads'])
        train, valid = PipelineService.split(panel, full, fraction, options['strata_col'], seed)

        SpellBuilderService.write_spells(train, self.out_path(None, 'train_spells.csv'))
        SpellBuilderService.write_spells(valid, self.out_path(None, 'valid_spells.csv'))
        report = PipelineService.representativeness(full, train, valid)
        write_json(report, self.out_path(None, 'representativeness.json'))
        for kappa, series in ((k, SamplingService.resolution_rate(full, k)) for k in ResolutionType):
            if len(series):
                SamplingService.write_series(series, self.out_path(None, f'resolution_{kappa.name.lower()}.csv'))
        for spell_bin, series in SamplingService.resolution_rates_by_spell(full, ResolutionType.DEFAULT).items():
            if len(series):
                SamplingService.write_series(series, self.out_path(None, f'resolution_default_spell{spell_bin}.csv'))

        for kappa, values in report.items():
            self.stdout.write(f"AD {kappa}: {values}")
        self.success(f"Training {train.n_loans} loans / validation {valid.n_loans} loans in {self.out_dir}")
