"""
Shared plumbing for the pipeline management commands.

Every command accepts ``--config FILE`` plus one ``--<key>`` flag per
configuration key (underscores become hyphens), loads the run
configuration and records a PipelineRun row around its work.
"""

import argparse

from rest_framework import serializers

from core.commands import PipelineCommand

from .serializers import PipelineConfigSerializer
from .services import config_keys, load_config, manifest_for, tracked_run
from .stages import PipelineRunner


def _argument_type(field):
    if isinstance(field, serializers.IntegerField):
        return int
    if isinstance(field, serializers.FloatField):
        return float
    return str


class RunnerCommand(PipelineCommand):
    """Subclasses set ``run_label`` and implement ``perform``."""

    run_label = ""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Flat "key = value" configuration file')
        group = parser.add_argument_group('configuration overrides')
        for name, field in PipelineConfigSerializer().fields.items():
            flag = '--' + name.replace('_', '-')
            if isinstance(field, serializers.BooleanField):
                group.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
            elif isinstance(field, serializers.ChoiceField):
                group.add_argument(flag, dest=name, choices=list(field.choices), default=None)
            else:
                group.add_argument(flag, dest=name, type=_argument_type(field), default=None)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def label(self, **options) -> str:
        return self.run_label

    def run_command(self, *args, **options):
        config = load_config(options.get('config'), **{key: options.get(key) for key in config_keys()})
        with tracked_run(self.label(**options), config) as run:
            runner = PipelineRunner(config, manifest_for(config))
            self.perform(runner, **options)
            run.manifest = runner.manifest.to_dict()

    def perform(self, runner: PipelineRunner, **options):
        raise NotImplementedError

    def report_counts(self, counts):
        for name, value in counts.items():
            self.report(name, value)


class StageCommand(RunnerCommand):
    """One pipeline stage; ``stage`` names it."""

    stage = ""

    def label(self, **options) -> str:
        return self.stage

    def perform(self, runner: PipelineRunner, **options):
        record = runner.run_stage(self.stage)
        self.report_counts(record.counts)
        self.done(f"{self.stage} finished in {record.seconds}s")
