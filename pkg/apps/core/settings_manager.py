from pathlib import Path
from typing import List, Optional

from django.conf import settings as django_settings


class EngineSettings:
    """Centralized accessor for ``SPELLHAZ_SETTINGS``"""

    SETTINGS_NAME = 'SPELLHAZ_SETTINGS'

    @classmethod
    def get_settings(cls) -> dict:
        return getattr(django_settings, cls.SETTINGS_NAME, {})

    @classmethod
    def get(cls, key: str, default=None):
        return cls.get_settings().get(key, default)

    @classmethod
    def get_version(cls) -> str:
        return str(cls.get('VERSION', '0.0.0'))

    @classmethod
    def get_ties(cls) -> str:
        return str(cls.get('TIES', 'efron'))

    @classmethod
    def get_max_iter(cls) -> int:
        return int(cls.get('MAX_ITER', 25))

    @classmethod
    def get_tol(cls) -> float:
        return float(cls.get('TOL', 1e-9))

    @classmethod
    def get_rank_tol(cls) -> float:
        return float(cls.get('RANK_TOL', 1e-10))

    @classmethod
    def get_separation_limit(cls) -> float:
        return float(cls.get('SEPARATION_LIMIT', 20.0))

    @classmethod
    def get_significance_level(cls) -> float:
        return float(cls.get('SIGNIFICANCE_LEVEL', 0.05))

    @classmethod
    def get_spell_bin_cap(cls) -> int:
        return int(cls.get('SPELL_BIN_CAP', 4))

    @classmethod
    def get_train_fraction(cls) -> float:
        return float(cls.get('TRAIN_FRACTION', 0.7))

    @classmethod
    def get_lambda_n(cls) -> float:
        return float(cls.get('LAMBDA_N', 0.05))

    @classmethod
    def get_horizons(cls) -> List[int]:
        return [int(h) for h in cls.get('HORIZONS', [3, 12, 24, 36])]

    @classmethod
    def get_threshold_step(cls) -> float:
        return float(cls.get('THRESHOLD_STEP', 0.01))

    @classmethod
    def get_term_structure_horizon(cls) -> int:
        return int(cls.get('TERM_STRUCTURE_HORIZON', 240))

    @classmethod
    def get_correlation_threshold(cls) -> float:
        return float(cls.get('CORRELATION_THRESHOLD', 0.6))

    @classmethod
    def get_float_format(cls) -> Optional[str]:
        return cls.get('CSV_FLOAT_FORMAT')

    @classmethod
    def get_threads(cls) -> int:
        return max(1, int(cls.get('THREADS', 1)))

    @classmethod
    def get_output_dir(cls) -> Path:
        return Path(cls.get('OUTPUT_DIR', 'artifacts'))
