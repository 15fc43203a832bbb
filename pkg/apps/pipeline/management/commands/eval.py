"""
Score stage outputs against gold and write a JSON report.
Usage: python manage.py eval link --config run.env
       python manage.py eval discover --wd-sweep --report wd.json
"""

from apps.evaluation.services import format_report, write_report
from apps.pipeline.base import RunnerCommand
from apps.pipeline.domain import EVAL_TASKS


class Command(RunnerCommand):
    help = 'Evaluate link, headings, discover or resolve output against gold'

    def add_command_arguments(self, parser):
        parser.add_argument('task', choices=EVAL_TASKS)
        parser.add_argument('--wd-sweep', action='store_true', help='Add WD accuracy for every field choice and k')
        parser.add_argument('--report', help='Report path (default output_dir/eval_<task>.json)')

    def label(self, **options) -> str:
        return f"eval:{options['task']}"

    def perform(self, runner, task, **options):
        metrics = runner.evaluate(task, with_wd_sweep=options.get('wd_sweep', False))
        path = options.get('report') or runner.output(f"eval_{task}.json")
        write_report(path, {'task': task, 'metrics': metrics})
        self.stdout.write(format_report(f"{task} evaluation", metrics))
        self.done(f"Report written to {path}")
