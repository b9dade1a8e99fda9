from django.core.management.base import CommandError

from spectral_lab.instrumentation import trace_stage

from ...errors import ConfigError
from ...models import ScenarioRun
from ...scenario import STAGES, run_scenario
from ._base import LabCommand, logger


class Command(LabCommand):
    help = "Run every pipeline stage of a scenario config and record the run"
    stages = STAGES
    config_required = True

    def handle(self, *args, **options):
        traced = trace_stage("command.run")(self.run_recorded)
        self.report(traced(options))

    def run_recorded(self, options):
        try:
            scenario = self.scenario(options)
        except ConfigError as e:
            logger.error(f"config rejected: {e.message}")
            raise CommandError(f"config: {e.message} {e.details}", returncode=e.exit_code)
        record = ScenarioRun.objects.create(
            name=scenario.name, seed=scenario.seed, truncation=scenario.truncation,
            output_dir=str(scenario.output_path()),
        )
        result = run_scenario(scenario, self.stages, options.get('threads'))
        record.finish(result)
        logger.info(f"recorded run {record.pk}: {record.status}")
        return result
