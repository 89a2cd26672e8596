import io
import json
import tempfile
from pathlib import Path

import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.core.exceptions import PipelineStageError
from apps.core.models import Technique
from apps.core.testing import APPENDIX_PANEL, APPENDIX_SCHEMA
from apps.spells.services import SpellBuilderService
from apps.spells.tests import PWP_TABLE, _layout

from .services import MANIFEST_NAME, PipelineService, sha256_of

GENERATOR = {
    'n_loans': 300, 'max_horizon': 36, 'true_beta': [0.6], 'baseline_hazards': [0.05, 0.08],
    'cure_prob': 0.5, 'censor_min': 18, 'calendar_origin': '2015-01',
}


class PipelineTestCase(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, name='run.yaml', **overrides):
        config = {'technique': 'ag', 'generator': GENERATOR, 'seed': 7, 'horizon': 36,
                  'troc': {'horizons': [3, 12], 'lambda_n': 0.1}}
        config.update(overrides)
        path = self.tmp / name
        path.write_text(yaml.safe_dump(config), encoding='utf-8')
        return path


class LoadConfigTests(PipelineTestCase):

    def test_unknown_technique(self):
        path = self.write_config(technique='wlw')
        with self.assertRaises(ValidationError) as ctx:
            PipelineService.load_config(path)
        message = str(ctx.exception.detail['technique'][0])
        self.assertEqual(message, 'unknown technique "wlw"; supported: tfd, ag, pwp')

    def test_panel_paths_resolve_next_to_config(self):
        path = self.tmp / 'run.json'
        path.write_text(json.dumps({'technique': 'pwp', 'panel': 'panel.csv', 'schema': str(APPENDIX_SCHEMA)}))
        config = PipelineService.load_config(path)
        self.assertEqual(config.panel, self.tmp / 'panel.csv')
        self.assertEqual(config.schema.covariates, ('ltv',))
        self.assertEqual(config.technique, Technique.PWP)
        self.assertEqual(config.troc.horizons, (3, 12, 24, 36))

    def test_exactly_one_data_source(self):
        path = self.write_config(panel='panel.csv')
        with self.assertRaises(ValidationError):
            PipelineService.load_config(path)

    def test_panel_needs_schema(self):
        path = self.write_config(generator=None, panel='panel.csv')
        with self.assertRaises(ValidationError):
            PipelineService.load_config(path)

    def test_window_start_below_horizon(self):
        with self.assertRaises(ValidationError):
            PipelineService.load_config(self.write_config(t1=36))


class RunPipelineTests(PipelineTestCase):

    def test_complete_run(self):
        manifest = PipelineService.run_pipeline(self.write_config(), self.tmp / 'out', threads=1)
        self.assertEqual(manifest.status, 'complete')
        self.assertEqual([stage.name for stage in manifest.stages],
                         ['synth', 'ingest', 'build_spells', 'sample', 'fit', 'screen', 'diagnose',
                          'term_structure'])
        for name in ('panel.csv', 'fit.json', 'diagnostics.json', 'actual.csv', 'overlay.dat'):
            self.assertIn(name, manifest.outputs)

        written = json.loads((self.tmp / 'out' / MANIFEST_NAME).read_text())
        self.assertEqual(written['seed'], 7)
        self.assertEqual(written['outputs'], manifest.outputs)
        summary = json.loads((self.tmp / 'out' / 'diagnostics.json').read_text())
        self.assertEqual([row['horizon'] for row in summary], [3, 12])
        self.assertEqual(set(summary[0]), {'horizon', 'tauc', 'harrell_c', 'aic', 'ks_D', 'one_minus_D'})

    def test_outputs_do_not_depend_on_threads(self):
        config = self.write_config()
        single = PipelineService.run_pipeline(config, self.tmp / 'one', threads=1)
        many = PipelineService.run_pipeline(config, self.tmp / 'many', threads=3)
        self.assertEqual(single.outputs, many.outputs)

    def test_seed_override(self):
        config = self.write_config()
        base = PipelineService.run_pipeline(config, self.tmp / 'a', threads=1)
        other = PipelineService.run_pipeline(config, self.tmp / 'b', seed=8, threads=1)
        self.assertEqual(other.seed, 8)
        self.assertNotEqual(base.outputs['panel.csv'], other.outputs['panel.csv'])

    def test_failed_stage_is_recorded(self):
        config = self.write_config(covariates=['missing'])
        with self.assertRaises(PipelineStageError) as ctx:
            PipelineService.run_pipeline(config, self.tmp / 'out', threads=1)
        self.assertEqual(ctx.exception.stage, 'fit')

        manifest = json.loads((self.tmp / 'out' / MANIFEST_NAME).read_text())
        self.assertEqual(manifest['status'], 'failed')
        self.assertEqual(manifest['failed_stage'], 'fit')
        self.assertIn('SchemaMismatchError', manifest['cause'])
        self.assertIn('spells.csv', manifest['stale'])

    def test_schema_file_is_hashed(self):
        schema = self.tmp / 'schema.json'
        schema.write_text(APPENDIX_SCHEMA.read_text(encoding='utf-8'), encoding='utf-8')
        config = self.tmp / 'run.json'
        config.write_text(json.dumps({'technique': 'ag', 'panel': 'absent.csv', 'schema': 'schema.json'}))

        def inputs(out):
            with self.assertRaises(PipelineStageError):
                PipelineService.run_pipeline(config, self.tmp / out, threads=1)
            return json.loads((self.tmp / out / MANIFEST_NAME).read_text())

        first = inputs('a')
        self.assertEqual(first['inputs'][str(schema)], sha256_of(schema))
        schema.write_text(schema.read_text(encoding='utf-8') + '\n', encoding='utf-8')
        second = inputs('b')
        self.assertEqual(first['config_sha256'], second['config_sha256'])
        self.assertNotEqual(first['inputs'][str(schema)], second['inputs'][str(schema)])


class CommandTests(PipelineTestCase):

    def test_build_spells_reproduces_pwp_layout(self):
        target = self.tmp / 'spells.csv'
        call_command('build_spells', panel=str(APPENDIX_PANEL), schema=str(APPENDIX_SCHEMA), technique='pwp',
                     out=str(target), stdout=io.StringIO())
        ds = SpellBuilderService.read_spells(target, 'pwp')
        self.assertEqual(_layout(ds), PWP_TABLE)

    def test_unknown_technique_names_supported_ones(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('build_spells', panel=str(APPENDIX_PANEL), schema=str(APPENDIX_SCHEMA), technique='wlw')
        message = str(ctx.exception)
        for name in ('wlw', 'tfd', 'ag', 'pwp'):
            self.assertIn(name, message)

    def test_bad_panel_exits_with_validation_code(self):
        panel = self.tmp / 'panel.csv'
        panel.write_text("loan_id,period,state,ltv\n1,1,PERF,0.5\n1,1,PERF,0.5\n")
        with self.assertRaises(CommandError) as ctx:
            call_command('ingest', panel=str(panel), schema=str(APPENDIX_SCHEMA), out_dir=str(self.tmp))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_file_is_a_failure(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('fit', spells=str(self.tmp / 'absent.csv'), technique='ag', out_dir=str(self.tmp))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_failed_pipeline_stage_keeps_validation_code(self):
        config = self.write_config(covariates=['missing'])
        with self.assertRaises(CommandError) as ctx:
            call_command('pipeline', config=str(config), out_dir=str(self.tmp / 'out'), threads=1)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("stage 'fit' failed", str(ctx.exception))

    def _synthetic_panel(self):
        spec = self.tmp / 'spec.yaml'
        spec.write_text(yaml.safe_dump(GENERATOR), encoding='utf-8')
        panel = self.tmp / 'panel.csv'
        call_command('synth', spec=str(spec), out=str(panel), seed=3, threads=1, stdout=io.StringIO())
        schema = self.tmp / 'schema.json'
        schema.write_text(json.dumps({'covariates': ['x1'], 'calendar_origin': '2015-01'}))
        return panel, schema

    def test_sample_writes_rates_per_spell(self):
        panel, schema = self._synthetic_panel()
        out = self.tmp / 'sample'
        call_command('sample', panel=str(panel), schema=str(schema), technique='pwp', train_fraction=0.6,
                     seed=1, out_dir=str(out), stdout=io.StringIO())
        for name in ('train_spells.csv', 'valid_spells.csv', 'representativeness.json',
                     'resolution_default.csv', 'resolution_default_spell1.csv'):
            self.assertTrue((out / name).exists(), name)

    def test_zero_train_fraction_is_rejected(self):
        panel, schema = self._synthetic_panel()
        with self.assertRaises(CommandError) as ctx:
            call_command('sample', panel=str(panel), schema=str(schema), train_fraction=0.0,
                         out_dir=str(self.tmp / 'sample'), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('train_fraction', str(ctx.exception))
