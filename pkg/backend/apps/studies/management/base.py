"""
Shared plumbing of the study commands: --config, --out, --metrics-file,
the output directory and the exit-code contract (2 config, 3 solver).
"""
from pathlib import Path
from typing import Optional

import structlog
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.common.exceptions import ConfigurationError
from apps.common.monitoring import MetricsCollector
from apps.common.services import ServiceResponse
from apps.studies.config import RunConfig, load_run_config
from apps.studies.writers import dumps

logger = structlog.get_logger(__name__)


class StudyCommand(BaseCommand):
    """Base class; subclasses set `study` and implement `run_study`"""

    study = ''

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            required=True,
            help='Path to the JSON run configuration'
        )
        parser.add_argument(
            '--out',
            default=None,
            help='Output directory (default: output.directory from the config, then AGEBIF_OUTPUT_DIR)'
        )
        parser.add_argument(
            '--metrics-file',
            default=None,
            help='Write Prometheus metrics in text format to this file after the run'
        )
        self.add_study_arguments(parser)

    def add_study_arguments(self, parser):
        pass

    def run_study(self, run: RunConfig, out_dir: Path, options) -> ServiceResponse:
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            run = load_run_config(options['config'])
        except ConfigurationError as exc:
            logger.error("config_rejected", study=self.study, message=exc.message)
            raise CommandError(self._message(exc.message, exc.diagnostics), returncode=exc.exit_code) from exc

        out_dir = Path(options['out'] or run.output_dir or settings.AGEBIF_OUTPUT_DIR)
        logger.info("study_started", study=self.study, config=str(options['config']), out=str(out_dir))
        try:
            with MetricsCollector.timed_study(self.study):
                response = self.run_study(run, out_dir, options)
        finally:
            self.export_metrics(options.get('metrics_file'))

        for warning in response.warnings:
            self.stderr.write(self.style.WARNING(warning))
        if not response.success:
            logger.error("study_failed", study=self.study, error=response.error, exit_code=response.exit_code)
            raise CommandError(self._message(response.error, response.diagnostics), returncode=response.exit_code)
        logger.info("study_finished", study=self.study)

    @staticmethod
    def _message(error: str, diagnostics) -> str:
        if not diagnostics:
            return error
        return f"{error}\n{dumps(diagnostics)}"

    @staticmethod
    def export_metrics(path: Optional[str]):
        path = path or settings.AGEBIF_METRICS_FILE
        if path:
            MetricsCollector.export(path)

    def written(self, path: Path):
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
