"""Exception hierarchy shared by every spellhaz app.

Validation-type errors (bad input files, broken panel invariants, schema
mismatches, sampling preconditions) are the ones the command layer maps to
exit code 2; everything else is an engine failure.
"""
from typing import Iterable, Optional


class SpellhazError(Exception):
    """Base class for engine errors."""


class PanelFormatError(SpellhazError):
    """A panel file could not be decoded."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SpellFormatError(PanelFormatError):
    """A spell CSV could not be decoded or does not fit its technique."""


class PanelInvariantError(SpellhazError):
    """A panel breaks the ordering/uniqueness/spell invariants."""

    def __init__(self, violations: Iterable):
        self.violations = list(violations)
        head = '; '.join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            head += f' (+{more} more)'
        super().__init__(f"panel has {len(self.violations)} violation(s): {head}")


class SchemaMismatchError(SpellhazError):
    """Covariate names do not match what a fit or dataset expects."""


class SamplingError(SpellhazError):
    pass


class ModelFitError(SpellhazError):
    pass


class RankDeficiencyError(ModelFitError):
    """Covariate columns that carry no independent information on the event sample."""

    def __init__(self, columns: Iterable[str]):
        self.columns = list(columns)
        super().__init__(f"rank-deficient covariates: {', '.join(self.columns)}")


class DiagnosticError(SpellhazError):
    pass


class UndefinedCurveError(DiagnosticError):
    """tROC denominators vanish at the requested horizon."""


class TermStructureError(SpellhazError):
    pass


class PipelineStageError(SpellhazError):
    """A pipeline stage failed; ``cause`` is the original error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


VALIDATION_ERRORS = (PanelFormatError, PanelInvariantError, SchemaMismatchError, SamplingError)
