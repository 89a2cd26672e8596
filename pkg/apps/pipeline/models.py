from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from django.db import models

from apps.core.constants import LOAN_STATUS_STRATA
from apps.core.models import SchemaConfig, Technique
from apps.cox.models import FitOptions
from apps.diagnostics.models import KSMode, TROCConfig, TROCVariant
from apps.nonparametric.models import Denominator
from apps.synthgen.models import GeneratorSpec


class Stage(models.TextChoices):
    SYNTH = 'synth', 'Generate synthetic panel'
    INGEST = 'ingest', 'Ingest panel'
    BUILD_SPELLS = 'build_spells', 'Build spells'
    SAMPLE = 'sample', 'Split sample'
    FIT = 'fit', 'Fit Cox model'
    SCREEN = 'screen', 'Screen covariates'
    DIAGNOSE = 'diagnose', 'Diagnostics'
    TERM_STRUCTURE = 'term_structure', 'Term-structures'


@dataclass(frozen=True)
class PipelineConfig:
    """One end-to-end run: either ``panel`` (with ``schema``) or ``generator`` supplies the data."""
    technique: Technique
    panel: Optional[Path] = None
    schema: Optional[SchemaConfig] = None
    schema_file: Optional[Path] = None
    generator: Optional[GeneratorSpec] = None
    seed: int = 0
    train_fraction: float = 0.7
    strata_col: str = LOAN_STATUS_STRATA
    covariates: Optional[Tuple[str, ...]] = None
    fit: FitOptions = field(default_factory=FitOptions)
    troc: TROCConfig = field(default_factory=TROCConfig)
    troc_variant: TROCVariant = TROCVariant.CLUSTERED
    ks_mode: KSMode = KSMode.ONE_SAMPLE
    horizon: int = 240
    t1: int = 1
    denominator: Denominator = Denominator.ACTIVE
    screen: bool = True
    threads: Optional[int] = None


@dataclass
class StageRecord:
    name: str
    seconds: float = 0.0
    outputs: List[str] = field(default_factory=list)


@dataclass
class RunManifest:
    seed: int
    versions: Dict[str, str]
    config_sha256: Optional[str]
    inputs: Dict[str, str] = field(default_factory=dict)
    stages: List[StageRecord] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)
    status: str = 'running'
    failed_stage: Optional[str] = None
    cause: Optional[str] = None
    stale: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            'seed': self.seed,
            'status': self.status,
            'versions': self.versions,
            'config_sha256': self.config_sha256,
            'inputs': self.inputs,
            'stages': [{'name': s.name, 'seconds': s.seconds, 'outputs': s.outputs} for s in self.stages],
            'outputs': self.outputs,
            'failed_stage': self.failed_stage,
            'cause': self.cause,
            'stale': self.stale,
        }
