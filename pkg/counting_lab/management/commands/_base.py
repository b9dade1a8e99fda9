import logging

from django.core.management.base import BaseCommand, CommandError

from spectral_lab.instrumentation import trace_stage

from ...errors import ConfigError
from ...scenario import load_scenario, run_scenario

logger = logging.getLogger(__name__)


class LabCommand(BaseCommand):
    """Runs a subset of pipeline stages on a scenario built from a config and CLI overrides.

    Subclasses set ``stages``; a failed stage becomes a ``CommandError`` whose
    return code is that stage's exit code.
    """

    stages = ()
    config_required = False

    def add_arguments(self, parser):
        if self.config_required:
            parser.add_argument('config', help='Scenario config (JSON file)')
        else:
            parser.add_argument('--config', default=None, help='Scenario config (JSON file)')
        parser.add_argument('--out', dest='output_dir', default=None, help='Output directory')
        parser.add_argument('--seed', type=int, default=None, help='Seed of the random perturbation')
        parser.add_argument('--trunc', dest='truncation', type=int, default=None, help='Truncation size M')
        parser.add_argument('--threads', type=int, default=None, help='Worker threads for sampled checks')
        parser.add_argument('--name', default=None)
        parser.add_argument('--generator', default=None, choices=['power', 'condensing', 'periodic'])
        parser.add_argument('--alpha', type=float, default=None)
        parser.add_argument('--beta', type=float, default=None)
        parser.add_argument('--b', default=None, help='Subordination constant or "fit"')
        parser.add_argument('--perturbation', default=None, choices=['random', 'hermitian', 'zero'])

    def overrides(self, options):
        keys = ('output_dir', 'seed', 'truncation', 'name', 'generator', 'alpha', 'beta', 'b', 'perturbation')
        return {key: options.get(key) for key in keys}

    def scenario(self, options):
        source = options.get('config') or {}
        return load_scenario(source, **self.overrides(options))

    def run_stages(self, options):
        try:
            scenario = self.scenario(options)
        except ConfigError as e:
            logger.error(f"config rejected: {e.message}")
            raise CommandError(f"config: {e.message} {e.details}", returncode=e.exit_code)
        result = run_scenario(scenario, self.stages, options.get('threads'))
        return scenario, result

    def report(self, result):
        if not result.passed:
            message = result.error['message'] if result.error else 'failed'
            raise CommandError(f"stage {result.stage} failed: {message} (see {result.output_dir})",
                               returncode=result.exit_code)
        self.stdout.write(self.style.SUCCESS(
            f"{len(result.manifest['files'])} reports written to {result.output_dir}"))

    def handle(self, *args, **options):
        traced = trace_stage(f"command.{self.name()}")(self.run_stages)
        _, result = traced(options)
        self.report(result)

    @classmethod
    def name(cls):
        return cls.__module__.rsplit('.', 1)[-1]
