"""
Match column headings of linkable tables to KB properties.
Usage: python manage.py match_headings --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Match column headings to KB properties'
    stage = 'match_headings'
