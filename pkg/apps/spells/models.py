from dataclasses import dataclass, field
from typing import Dict

from apps.core.models import ResolutionType


@dataclass(frozen=True)
class SpellSummary:
    """Loans by their highest spell number, spells by resolution."""
    max_spell_histogram: Dict[int, int] = field(default_factory=dict)
    resolution_counts: Dict[ResolutionType, int] = field(default_factory=dict)

    @property
    def n_loans(self) -> int:
        return sum(self.max_spell_histogram.values())

    @property
    def n_spells(self) -> int:
        return sum(self.resolution_counts.values())
