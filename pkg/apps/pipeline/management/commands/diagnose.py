"""
Harrell's c, tROC/tAUC, Cox-Snell residuals and KS statistic for a fitted model

Usage:
    python manage.py diagnose --fit fit.json --spells valid_spells.csv --train-spells train_spells.csv \
        --horizons 3,12,24,36 --lambda 0.05 --troc clustered
"""
from apps.diagnostics.models import KSMode, TROCVariant
from apps.diagnostics.serializers import TROCConfigSerializer
from apps.pipeline.services import PipelineService, read_structured
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand, parse_list
from apps.utils.baseSerializers import load_validated


class Command(SpellhazCommand):
    help = 'Discrimination and goodness-of-fit diagnostics'

    def add_command_arguments(self, parser):
        parser.add_argument('--fit', required=True, help='Fit JSON written by fit')
        parser.add_argument('--spells', required=True, help='Validation spell CSV (c, tROC)')
        parser.add_argument('--train-spells', default=None,
                            help='Fitting spell CSV for Cox-Snell/KS (default: --spells)')
        parser.add_argument('--horizons', default=None, help='Comma-separated horizons in months')
        parser.add_argument('--lambda', dest='lambda_n', type=float, default=None,
                            help='Neighbourhood half-width on the marker CDF scale')
        parser.add_argument('--troc', choices=TROCVariant.values, default=TROCVariant.CLUSTERED.value)
        parser.add_argument('--ks-mode', choices=KSMode.values, default=KSMode.ONE_SAMPLE.value)
        parser.add_argument('--troc-config', default=None, help='TROCConfig file (JSON or YAML)')

    def run(self, **options):
        fit = PipelineService.read_fit(options['fit'])
        valid = SpellBuilderService.read_spells(options['spells'], fit.technique)
        train = valid
        if options['train_spells']:
            train = SpellBuilderService.read_spells(options['train_spells'], fit.technique)

        data = read_structured(options['troc_config']) if options['troc_config'] else {}
        if options['horizons']:
            data['horizons'] = parse_list(options['horizons'], int)
        if options['lambda_n'] is not None:
            data['lambda_n'] = options['lambda_n']
        config = load_validated(TROCConfigSerializer, data)

        self.out_dir.mkdir(parents=True, exist_ok=True)
        written = PipelineService.diagnose(fit, train, valid, config, options['troc'], options['ks_mode'],
                                           options['seed'] or 0, self.out_dir, options['threads'])
        for path in written:
            self.stdout.write(f"  {path}")
        self.success(f"Diagnostics written to {self.out_dir}")
