"""
Single-factor Cox screen ranked by Harrell's c, plus Spearman correlation screen

Usage:
    python manage.py screen --spells train_spells.csv --technique pwp
"""
from apps.core.models import Technique
from apps.cox.models import Ties
from apps.cox.services import CoxEngine
from apps.pipeline.services import PipelineService
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand, parse_list


class Command(SpellhazCommand):
    help = 'Rank covariates by the c-statistic of their single-factor models'

    def add_command_arguments(self, parser):
        parser.add_argument('--spells', required=True, help='Spell CSV used for fitting')
        parser.add_argument('--technique', required=True, choices=Technique.values)
        parser.add_argument('--covariates', default=None, help='Comma-separated covariates (default: all)')
        parser.add_argument('--ties', choices=Ties.CHOICES, default=None)
        parser.add_argument('--threshold', type=float, default=None,
                            help='Report covariate pairs with |Spearman rho| at or above this')

    def run(self, **options):
        ds = SpellBuilderService.read_spells(options['spells'], options['technique'])
        names = parse_list(options['covariates']) or list(ds.schema)
        fit_options = CoxEngine.default_options(ties=options['ties'])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        report, correlation, _ = PipelineService.screen(ds, fit_options, names, self.out_dir,
                                                        options['threads'], options['threshold'])
        for rank, result in enumerate(report.results, start=1):
            self.stdout.write(f"{rank:>3}. {result.name:<24} c={result.c_statistic:.4f}")
        for name, reason in report.rejected.items():
            self.stdout.write(self.style.WARNING(f"     {name}: {reason}"))
        for a, b, rho in correlation.pairs:
            self.stdout.write(f"correlated: {a} ~ {b} (rho={rho:.3f})")
        self.success(f"Screening written to {self.out_dir}")
