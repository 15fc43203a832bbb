"""
Hyphenated spelling of build_index.
Usage: python manage.py build-index --config run.env
"""

from apps.pipeline.management.commands.build_index import Command  # noqa: F401
