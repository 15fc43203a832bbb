"""
Classify unlinked mentions as in-KB, out-of-KB or not entities.
Usage: python manage.py discover --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Classify unlinked mentions'
    stage = 'discover'
