import logging
from pathlib import Path
from typing import Optional

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from apps.core.exceptions import VALIDATION_ERRORS, PipelineStageError, SpellhazError
from apps.core.settings_manager import EngineSettings

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_FAILURE = 1


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineStageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, VALIDATION_ERRORS + (ValidationError,)):
        return EXIT_VALIDATION
    return EXIT_FAILURE


class SpellhazCommand(BaseCommand):
    """Base for engine subcommands.

    Adds the global ``--seed``, ``--threads`` and ``--out-dir`` flags and maps
    engine errors to exit code 2 (bad input) or 1 (anything else).
    Subclasses implement ``add_command_arguments`` and ``run``.
    """

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=None, help='Random seed (default: configured or 0)')
        parser.add_argument('--threads', type=int, default=None,
                            help='Worker threads (default: SPELLHAZ_THREADS or available cores)')
        parser.add_argument('--out-dir', default=None,
                            help='Directory for outputs (default: SPELLHAZ_OUT_DIR)')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        self.out_dir = Path(options['out_dir']) if options.get('out_dir') else EngineSettings.get_output_dir()
        try:
            self.run(**options)
        except (SpellhazError, ValidationError, OSError, ValueError) as exc:
            logger.error(f"{type(self).__module__.rsplit('.', 1)[-1]} failed: {exc}")
            raise CommandError(_describe(exc), returncode=exit_code_for(exc))

    def run(self, **options):
        raise NotImplementedError('subclasses of SpellhazCommand must provide a run() method')

    def out_path(self, value: Optional[str], default_name: str) -> Path:
        """``value`` as given, else ``default_name`` inside the output directory."""
        if value:
            return Path(value)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / default_name

    def success(self, message: str) -> None:
        self.stdout.write(self.style.SUCCESS(message))


def parse_list(value: Optional[str], cast=str) -> Optional[list]:
    """Comma-separated CLI list; None stays None."""
    if value is None:
        return None
    return [cast(item.strip()) for item in value.split(',') if item.strip()]


def _describe(exc: BaseException) -> str:
    if isinstance(exc, ValidationError):
        return f"invalid configuration: {exc.detail}"
    return str(exc)
