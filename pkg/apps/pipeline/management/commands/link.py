"""
Link core-column mentions to KB entities.
Usage: python manage.py link --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Link core-column mentions of every table to KB entities'
    stage = 'link'
