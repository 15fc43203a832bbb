"""
Train mention embeddings and cluster novel-entity mentions.
Usage: python manage.py resolve --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Resolve novel-entity mentions into clusters'
    stage = 'resolve'
