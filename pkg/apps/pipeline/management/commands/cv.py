"""
Grouped, stratified k-fold cross-validation of a classifier.
Usage: python manage.py cv headings --config run.env --cv-folds 5
"""

from apps.evaluation.services import format_report, write_report
from apps.learn.services import read_dataset_tsv
from apps.pipeline.base import RunnerCommand
from apps.pipeline.domain import TRAIN_TASKS


class Command(RunnerCommand):
    help = 'Cross-validate a classifier on its gold-derived dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('task', choices=TRAIN_TASKS)
        parser.add_argument('--dataset', help='Use a labelled feature TSV instead of gold files')

    def label(self, **options) -> str:
        return f"cv:{options['task']}"

    def perform(self, runner, task, **options):
        data = read_dataset_tsv(options['dataset']) if options.get('dataset') else None
        report = runner.cross_validate(task, data)
        means = {metric: stats['mean'] for metric, stats in report.summary.items()}
        self.stdout.write(format_report(f"{task}: {len(report.folds)}-fold cross-validation", means))
        write_report(runner.output(f"cv_{task}.json"), {"task": task, "folds": len(report.folds), "summary": report.summary})
        self.done(f"Cross-validated {task}")
