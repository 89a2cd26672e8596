import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Optional, Tuple, Union

import django
import joblib
import numpy as np
import pandas as pd
import rest_framework
import scipy
import yaml

from apps.core.constants import LOAN_STATUS_STRATA
from apps.core.exceptions import PipelineStageError
from apps.core.models import Panel, ResolutionType, SchemaConfig, SpellDataset
from apps.core.serializers import SchemaConfigSerializer
from apps.core.services import PanelService
from apps.core.settings_manager import EngineSettings
from apps.cox.models import CoxFit, FitOptions
from apps.cox.serializers import CoxFitSerializer
from apps.cox.services import CoxEngine
from apps.diagnostics.models import KSMode, TROCConfig, TROCVariant
from apps.diagnostics.serializers import SummarySerializer
from apps.diagnostics.services import DiagnosticsService
from apps.nonparametric.models import Denominator
from apps.nonparametric.services import TermStructureService
from apps.sampling.services import SamplingService
from apps.spells.services import SpellBuilderService
from apps.synthgen.models import GeneratorSpec
from apps.synthgen.serializers import GeneratorSpecSerializer
from apps.synthgen.services import GeneratorService
from apps.utils.baseSerializers import load_validated

from .models import PipelineConfig, RunManifest, Stage, StageRecord
from .serializers import PipelineConfigSerializer

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(data, target: Path) -> None:
    target.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def read_structured(path: Union[str, Path]) -> dict:
    """JSON or YAML file contents (chosen by extension)."""
    path = Path(path)
    text = path.read_text(encoding='utf-8')
    if path.suffix.lower() in ('.yaml', '.yml'):
        return yaml.safe_load(text) or {}
    return json.loads(text)


def package_versions() -> dict:
    return {
        'spellhaz': EngineSettings.get_version(),
        'django': django.get_version(),
        'djangorestframework': rest_framework.VERSION,
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'joblib': joblib.__version__,
    }


class PipelineService:
    """File-level stage helpers shared by the subcommands, and the end-to-end run."""

    # inputs

    @staticmethod
    def load_schema(path: Union[str, Path]) -> SchemaConfig:
        return load_validated(SchemaConfigSerializer, read_structured(path))

    @staticmethod
    def load_generator_spec(path: Union[str, Path], seed: Optional[int] = None) -> GeneratorSpec:
        spec = load_validated(GeneratorSpecSerializer, read_structured(path))
        return spec if seed is None else replace(spec, seed=seed)

    @staticmethod
    def load_config(path: Union[str, Path]) -> PipelineConfig:
        path = Path(path)
        raw = read_structured(path)
        schema_file = None
        if isinstance(raw.get('schema'), str):
            schema_file = Path(raw['schema'])
            if not schema_file.is_absolute():
                schema_file = path.parent / schema_file
            raw['schema'] = read_structured(schema_file)
        config = load_validated(PipelineConfigSerializer, raw, context={'base_dir': path.parent})
        return replace(config, schema_file=schema_file)

    @staticmethod
    def read_fit(path: Union[str, Path]) -> CoxFit:
        return load_validated(CoxFitSerializer, read_structured(path))

    @staticmethod
    def write_fit(fit: CoxFit, target: Path) -> None:
        write_json(CoxFitSerializer(fit).data, target)

    # stages

    @staticmethod
    def strata_labels(panel: Panel, strata_col: str) -> dict:
        if strata_col == LOAN_STATUS_STRATA:
            return PanelService.loan_status_strata(panel)
        return PanelService.covariate_strata(panel, strata_col)

    @classmethod
    def split(cls, panel: Panel, full: SpellDataset, train_fraction: float, strata_col: str,
              seed: int) -> Tuple[SpellDataset, SpellDataset]:
        train_panel, valid_panel = SamplingService.split_sample(
            panel, train_fraction, cls.strata_labels(panel, strata_col), seed)
        return full.for_loans(train_panel.loan_ids), full.for_loans(valid_panel.loan_ids)

    @staticmethod
    def representativeness(full: SpellDataset, train: SpellDataset, valid: SpellDataset) -> dict:
        report = {}
        for kappa in ResolutionType:
            if not (full.spells()['resolution'] == kappa.value).any():
                continue
            report[kappa.name.lower()] = SamplingService.representativeness(full, train, valid, kappa).as_dict()
        return report

    @staticmethod
    def screen(train: SpellDataset, options: FitOptions, covariates, out_dir: Path,
               threads: Optional[int] = None, threshold: Optional[float] = None):
        """Single-factor and correlation screens; returns (report, correlation, written paths)."""
        report = DiagnosticsService.screen_covariates(train, covariates, options, threads=threads)
        correlation = DiagnosticsService.correlation_screen(train, covariates, threshold)
        screening_path = out_dir / 'screening.csv'
        correlation_path = out_dir / 'correlation.csv'
        report.as_frame().to_csv(screening_path, index=False, float_format=EngineSettings.get_float_format(),
                                 lineterminator='\n')
        correlation.matrix.to_csv(correlation_path, float_format=EngineSettings.get_float_format(),
                                  lineterminator='\n')
        if correlation.pairs:
            logger.info(f"Highly correlated covariates (|rho| >= {correlation.threshold}): {correlation.pairs}")
        return report, correlation, [screening_path, correlation_path]

    @staticmethod
    def diagnose(fit: CoxFit, train: SpellDataset, valid: SpellDataset, config: TROCConfig,
                 variant: TROCVariant, ks_mode: KSMode, seed: int, out_dir: Path,
                 threads: Optional[int] = None) -> list:
        """c, tROC on ``valid``; Cox-Snell/KS and AIC on the fitting data ``train``."""
        written = []
        c = DiagnosticsService.harrell_c(fit, valid)
        if TROCVariant(variant) == TROCVariant.CLUSTERED:
            markers = DiagnosticsService.period_markers(fit, valid)
        else:
            markers = DiagnosticsService.spell_markers(fit, valid)
        curves = DiagnosticsService.troc_curves(markers, config, variant, threads=threads)

        residuals = DiagnosticsService.cox_snell_residuals(fit, train)
        ks = DiagnosticsService.ks_statistic(residuals, ks_mode, seed=seed)
        residual_path = out_dir / 'cox_snell.csv'
        pd.DataFrame({'residual': residuals.values, 'event': residuals.events.astype(int)}).to_csv(
            residual_path, index=False, float_format=EngineSettings.get_float_format(), lineterminator='\n')
        written.append(residual_path)

        aic = CoxEngine.aic(fit)
        summary = []
        for horizon, curve in curves.items():
            tauc = None
            if curve is not None:
                curve_path = out_dir / f'troc_{TROCVariant(variant).value}_h{horizon}.csv'
                DiagnosticsService.write_curve(curve, curve_path)
                written.append(curve_path)
                tauc = DiagnosticsService.tauc(curve)
            summary.append({
                'horizon': int(horizon),
                'tauc': tauc,
                'harrell_c': c,
                'aic': aic,
                'ks_D': ks.statistic,
                'one_minus_D': ks.one_minus_d,
            })
        summary_path = out_dir / 'diagnostics.json'
        write_json(SummarySerializer(summary, many=True).data, summary_path)
        written.append(summary_path)
        logger.info(f"Diagnostics: c={c:.4f}, AIC={aic:.3f}, KS D={ks.statistic:.4f}")
        return written

    @staticmethod
    def term_structures(fit: CoxFit, ds: SpellDataset, horizon: int, t1: int, denominator: Denominator,
                        actual_path: Path, predicted_path: Path, overlay_path: Path, summary_path: Path) -> float:
        actual = TermStructureService.actual_term_structure(ds, horizon)
        predicted = TermStructureService.predicted_term_structure(fit, ds, horizon, denominator)
        mae = TermStructureService.term_structure_mae(actual, predicted, t1, horizon)
        TermStructureService.write_term_structure(actual, actual_path)
        TermStructureService.write_term_structure(predicted, predicted_path)
        TermStructureService.write_overlay(actual, predicted, overlay_path)
        write_json({
            'horizon': horizon,
            't1': t1,
            'denominator': Denominator(denominator).value,
            'mae': mae,
            'sum_actual': actual.total,
            'sum_predicted': predicted.total,
        }, summary_path)
        logger.info(f"Term-structure MAE over [{t1}, {horizon}]: {mae:.6g}")
        return mae

    # end to end

    @classmethod
    def run_pipeline(cls, config_path: Union[str, Path], out_dir: Union[str, Path],
                     seed: Optional[int] = None, threads: Optional[int] = None) -> RunManifest:
        """
        Run every stage into ``out_dir`` and write ``manifest.json``.

        Args:
            config_path: JSON or YAML run configuration
            out_dir: artifact directory (created)
            seed: overrides the configured seed
            threads: overrides the configured thread count

        Returns:
            RunManifest: also written to ``out_dir/manifest.json``

        Raises:
            PipelineStageError: naming the failed stage; the manifest lists stale outputs
        """
        config_path = Path(config_path)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        config = cls.load_config(config_path)
        if seed is not None:
            config = replace(config, seed=seed)
        if threads is not None:
            config = replace(config, threads=threads)

        manifest = RunManifest(seed=config.seed, versions=package_versions(),
                               config_sha256=sha256_of(config_path))
        if config.schema_file is not None:
            manifest.inputs[str(config.schema_file)] = sha256_of(config.schema_file)
        run = _Run(manifest, out_dir)
        try:
            cls._run_stages(config, run)
        except PipelineStageError as exc:
            manifest.status = 'failed'
            manifest.failed_stage = exc.stage
            manifest.cause = f"{type(exc.cause).__name__}: {exc.cause}"
            manifest.stale = sorted(path.name for path in run.written if path.exists())
            write_json(manifest.as_dict(), out_dir / MANIFEST_NAME)
            logger.error(f"Pipeline aborted: {exc}")
            raise
        manifest.status = 'complete'
        manifest.outputs = {path.name: sha256_of(path) for path in sorted(run.written)}
        write_json(manifest.as_dict(), out_dir / MANIFEST_NAME)
        logger.info(f"Pipeline complete: {len(manifest.outputs)} outputs in {out_dir}")
        return manifest

    @classmethod
    def _run_stages(cls, config: PipelineConfig, run: '_Run') -> None:
        out_dir = run.out_dir
        threads = config.threads

        panel_path = config.panel
        schema = config.schema
        if config.generator is not None:
            with run.stage(Stage.SYNTH):
                spec = replace(config.generator, seed=config.seed)
                panel = GeneratorService.generate(spec, threads=threads)
                panel_path = run.output('panel.csv')
                PanelService.write_panel(panel, panel_path)
                schema = SchemaConfig(spec.covariate_names, spec.calendar_origin)
        else:
            run.manifest.inputs[str(panel_path)] = _input_hash(panel_path)

        with run.stage(Stage.INGEST):
            panel = PanelService.ingest_panel(panel_path, schema)

        with run.stage(Stage.BUILD_SPELLS):
            full = SpellBuilderService.build_spells(panel, config.technique, threads=threads)
            SpellBuilderService.write_spells(full, run.output('spells.csv'))

        with run.stage(Stage.SAMPLE):
            train, valid = cls.split(panel, full, config.train_fraction, config.strata_col, config.seed)
            SpellBuilderService.write_spells(train, run.output('train_spells.csv'))
            SpellBuilderService.write_spells(valid, run.output('valid_spells.csv'))
            write_json(cls.representativeness(full, train, valid), run.output('representativeness.json'))
            SamplingService.write_series(SamplingService.resolution_rate(full, ResolutionType.DEFAULT),
                                         run.output('resolution_rates.csv'))

        with run.stage(Stage.FIT):
            fit = CoxEngine.fit(train, config.fit, covariates=config.covariates)
            cls.write_fit(fit, run.output('fit.json'))

        covariates = list(fit.schema)
        if config.screen and covariates:
            with run.stage(Stage.SCREEN):
                _, _, written = cls.screen(train, config.fit, covariates, out_dir, threads)
                run.written.extend(written)

        with run.stage(Stage.DIAGNOSE):
            written = cls.diagnose(fit, train, valid, config.troc, config.troc_variant, config.ks_mode,
                                   config.seed, out_dir, threads)
            run.written.extend(written)

        with run.stage(Stage.TERM_STRUCTURE):
            cls.term_structures(fit, valid, config.horizon, config.t1, config.denominator,
                                run.output('actual.csv'), run.output('predicted.csv'),
                                run.output('overlay.dat'), run.output('term_structure.json'))


class _Run:
    """Stage timing and output bookkeeping for one pipeline run."""

    def __init__(self, manifest: RunManifest, out_dir: Path):
        self.manifest = manifest
        self.out_dir = out_dir
        self.written = []

    def output(self, name: str) -> Path:
        path = self.out_dir / name
        self.written.append(path)
        return path

    @contextmanager
    def stage(self, stage: Stage):
        record = StageRecord(stage.value)
        before = len(self.written)
        start = time.perf_counter()
        logger.info(f"Stage {stage.value} started")
        try:
            yield record
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(stage.value, exc) from exc
        finally:
            record.seconds = round(time.perf_counter() - start, 6)
            record.outputs = [path.name for path in self.written[before:]]
            self.manifest.stages.append(record)


def _input_hash(path) -> str:
    try:
        return sha256_of(path)
    except OSError as exc:
        raise PipelineStageError(Stage.INGEST.value, exc) from exc
