"""
Run every stage in order and write output/manifest.json.
Usage: python manage.py run --config run.env
"""

from apps.pipeline.base import RunnerCommand


class Command(RunnerCommand):
    help = 'Run ingest, build_index, link, match_headings, discover and resolve in order'
    run_label = 'run'

    def perform(self, runner, **options):
        manifest = runner.run_all()
        for record in manifest.stages:
            self.stdout.write(f"{record.stage} ({record.seconds}s)")
            self.report_counts(record.counts)
        self.done(f"Pipeline finished; outputs in {runner.config.output_dir}")
