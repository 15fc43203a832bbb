"""
Train a classifier and save it to models_dir/<task>.json.
Usage: python manage.py train link --config run.env
       python manage.py train discover --dataset discover.tsv
"""

from apps.learn.services import feature_importance, read_dataset_tsv, write_dataset_tsv
from apps.pipeline.base import RunnerCommand
from apps.pipeline.domain import TASK_SURFACE, TRAIN_TASKS
from apps.resolve.domain import SURFACE_MODE_EMBEDDING


class Command(RunnerCommand):
    help = 'Train the link, headings, discover, discover_entity or surface classifier'

    def add_command_arguments(self, parser):
        parser.add_argument('task', choices=TRAIN_TASKS)
        parser.add_argument('--dataset', help='Train from a labelled feature TSV instead of gold files')
        parser.add_argument('--export-dataset', help='Also write the training examples to this TSV')

    def label(self, **options) -> str:
        return f"train:{options['task']}"

    def perform(self, runner, task, **options):
        if task == TASK_SURFACE and runner.config.surface_mode == SURFACE_MODE_EMBEDDING:
            tuned = runner.tune_threshold()
            self.report('threshold', tuned['threshold'])
            self.report('accuracy', f"{tuned['accuracy']:.4f}")
            self.done("Tuned the embedding threshold; set embedding_threshold to use it")
            return

        data = read_dataset_tsv(options['dataset']) if options.get('dataset') else runner.dataset(task)
        if options.get('export_dataset'):
            write_dataset_tsv(data, options['export_dataset'])
        model = runner.train(task, data)
        self.report('examples', len(data))
        self.report('positives', sum(data.labels))
        top = sorted(feature_importance(model).items(), key=lambda item: (-item[1], item[0]))[:5]
        self.report('top_features', ", ".join(f"{name}={weight:.3f}" for name, weight in top))
        self.done(f"Saved {runner.model_path(task)}")
