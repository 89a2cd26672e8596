"""
Run every stage from a single config and write a reproducible manifest

Usage:
    python manage.py pipeline --config run.yaml --out-dir artifacts/run1 --seed 7 --threads 4
"""
from apps.pipeline.services import MANIFEST_NAME, PipelineService
from apps.utils.baseCommands import SpellhazCommand


class Command(SpellhazCommand):
    help = 'synth -> ingest -> build_spells -> sample -> fit -> screen -> diagnose -> term_structure'

    def add_command_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Pipeline config (JSON or YAML)')

    def run(self, **options):
        manifest = PipelineService.run_pipeline(options['config'], self.out_dir, seed=options['seed'],
                                                threads=options['threads'])
        for stage in manifest.stages:
            self.stdout.write(f"  {stage.name:<16} {stage.seconds:8.3f}s  {', '.join(stage.outputs)}")
        self.success(f"Pipeline complete; manifest at {self.out_dir / MANIFEST_NAME}")
