"""Fixture loaders and small dataset builders used by the app test suites."""
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .models import ResolutionType, SchemaConfig, SpellDataset, Technique
from .serializers import SchemaConfigSerializer
from .services import PanelService
from apps.utils.baseSerializers import load_validated

FIXTURE_DIR = Path(__file__).resolve().parent / 'fixtures'
APPENDIX_PANEL = FIXTURE_DIR / 'appendix_panel.csv'
APPENDIX_SCHEMA = FIXTURE_DIR / 'appendix_schema.json'


def appendix_schema() -> SchemaConfig:
    return load_validated(SchemaConfigSerializer, {'covariates': ['ltv'], 'calendar_origin': '2007-01'})


def appendix_panel():
    return PanelService.ingest_panel(APPENDIX_PANEL, appendix_schema())


def spell_dataset(stops: Sequence[int], status: Sequence[int], covariates: Mapping[str, Sequence[float]],
                  entries: Optional[Sequence[int]] = None, technique=Technique.TFD,
                  spell_nums: Optional[Sequence[int]] = None) -> SpellDataset:
    """One single-interval spell per position: (entry, stop], event flag and covariate values."""
    stops = np.asarray(stops, dtype=np.int64)
    n = len(stops)
    entries = np.zeros(n, dtype=np.int64) if entries is None else np.asarray(entries, dtype=np.int64)
    status = np.asarray(status, dtype=np.int64)
    spell_nums = np.ones(n, dtype=np.int64) if spell_nums is None else np.asarray(spell_nums, dtype=np.int64)
    resolution = np.where(status == 1, ResolutionType.DEFAULT.value, ResolutionType.CENSORED.value)
    frame = pd.DataFrame({
        'loan_id': [f"L{k + 1:05d}" for k in range(n)],
        'spell_num': spell_nums,
        'spell_num_binned': np.minimum(spell_nums, 4),
        'entry': entries,
        'stop': stops,
        'status': status,
        'resolution': resolution.astype(np.int64),
        'spell_age': stops - entries,
        'period': stops,
        'spell_period': stops,
        'spell_entry': entries,
        'spell_stop': stops,
    })
    for name, values in covariates.items():
        frame[name] = np.asarray(values, dtype=float)
    return SpellDataset(Technique(technique), tuple(covariates), frame)
