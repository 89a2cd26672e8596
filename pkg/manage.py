#!/usr/bin/env python
"""Command-line entry point for the spellhaz engine (synth, build_spells, fit, diagnose, ...)."""
import os
import sys


def main():
    """Dispatch to the engine's management commands."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Root.settings.production')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django, which hosts the spellhaz commands. "
            "Install the packages in requirements.txt into the active environment."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
