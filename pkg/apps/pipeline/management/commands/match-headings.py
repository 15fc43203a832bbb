"""
Hyphenated spelling of match_headings.
Usage: python manage.py match-headings --config run.env
"""

from apps.pipeline.management.commands.match_headings import Command  # noqa: F401
