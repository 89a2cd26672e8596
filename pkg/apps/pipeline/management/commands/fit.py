"""
Fit a Cox model to a spell CSV

Usage:
    python manage.py fit --spells spells_pwp.csv --technique pwp --ties efron --covariates ltv,dti
"""
from apps.core.models import Technique
from apps.cox.models import Ties
from apps.cox.serializers import FitOptionsSerializer
from apps.cox.services import CoxEngine
from apps.pipeline.services import PipelineService
from apps.spells.services import SpellBuilderService
from apps.utils.baseCommands import SpellhazCommand, parse_list
from apps.utils.baseSerializers import load_validated


class Command(SpellhazCommand):
    help = 'Maximize the Cox partial likelihood and write the fit as JSON'

    def add_command_arguments(self, parser):
        parser.add_argument('--spells', required=True, help='Spell CSV written by build_spells')
        parser.add_argument('--technique', required=True, choices=Technique.values)
        parser.add_argument('--ties', choices=Ties.CHOICES, default=None)
        parser.add_argument('--covariates', default=None, help='Comma-separated subset of the spell covariates')
        parser.add_argument('--max-iter', type=int, default=None)
        parser.add_argument('--tol', type=float, default=None)
        parser.add_argument('--robust', action='store_true', help='Also report loan-clustered sandwich variance')
        parser.add_argument('--out', default=None, help='Fit JSON (default: <out-dir>/fit.json)')

    def run(self, **options):
        ds = SpellBuilderService.read_spells(options['spells'], options['technique'])
        data = {'robust': options['robust']}
        for key in ('ties', 'max_iter', 'tol'):
            if options[key] is not None:
                data[key] = options[key]
        fit_options = load_validated(FitOptionsSerializer, data)

        fit = CoxEngine.fit(ds, fit_options, covariates=parse_list(options['covariates']))
        target = self.out_path(options['out'], 'fit.json')
        PipelineService.write_fit(fit, target)

        for j, name in enumerate(fit.schema):
            self.stdout.write(
                f"{name:>20} beta={fit.beta[j]: .6f} se={fit.se[j]:.6f} p={fit.p_values[j]:.4g}")
        self.stdout.write(f"log PL={fit.log_pl:.6f} AIC={CoxEngine.aic(fit):.3f} events={fit.n_events}")
        if not fit.converged:
            self.stdout.write(self.style.WARNING(f"Not converged: {fit.message}"))
        self.success(f"Wrote fit to {target}")
