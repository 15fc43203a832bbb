"""
Build the BM25 search indexes over the KB snapshot.
Usage: python manage.py build_index --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Build the entity search index and the WD index'
    stage = 'build_index'
