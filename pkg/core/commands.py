"""
Base class for the pipeline management commands.

Maps the ``core.exceptions`` hierarchy onto process exit codes:
1 usage, 2 data error, 3 internal.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from .exceptions import PipelineError

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):

    def handle(self, *args, **options):
        try:
            return self.run_command(*args, **options)
        except CommandError:
            raise
        except PipelineError as exc:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {exc}")
            raise CommandError(str(exc), returncode=exc.exit_code)
        except Exception as exc:
            logger.exception(f"Unexpected failure in {self.__module__}")
            raise CommandError(f"Internal error: {exc}", returncode=3)

    def run_command(self, *args, **options):
        raise NotImplementedError

    def report(self, label: str, value):
        self.stdout.write(f"  {label}: {value}")

    def done(self, message: str):
        self.stdout.write(self.style.SUCCESS(f"✓ {message}"))
