"""
Summarize the KB snapshot.
Usage: python manage.py kb_stats --kb-dir kb/
"""

from apps.pipeline.base import RunnerCommand


class Command(RunnerCommand):
    help = 'Load the KB snapshot and print its size'
    run_label = 'kb_stats'

    def perform(self, runner, **options):
        kb = runner.kb
        triples = [t for entity_triples in kb.triple_index.values() for t in entity_triples]
        self.report('entities', len(kb))
        self.report('types', len(kb.hierarchy.parent))
        self.report('surface_forms', len(kb.surface_form_index))
        self.report('triples', len(triples))
        self.report('properties', len({t.predicate for t in triples}))
        self.done(f"Loaded {runner.config.kb_dir}")
