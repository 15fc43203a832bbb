"""
Parse the table corpus into output/corpus.jsonl.
Usage: python manage.py ingest --config run.env
"""

from apps.pipeline.base import StageCommand


class Command(StageCommand):
    help = 'Parse the table corpus, skipping malformed records'
    stage = 'ingest'
