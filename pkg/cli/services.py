"""
Persistence of command results.
命令列模組 - 結果保存
"""

import logging

from django.db import transaction
from django.utils import timezone

from dynamics.models import DiagnosticsSample, SimulationRun, ValidationReport

logger = logging.getLogger(__name__)


class RunRecorder:
    """
    記錄輸出的執行資料

    Wraps the output writer: every emitted record is kept with its step
    index so the stored samples match the CSV rows.
    """

    def __init__(self, writer):
        self.writer = writer
        self.samples = []

    def record(self, index, record):
        self.samples.append((index, record))
        self.writer.record(index, record)

    def snapshot(self, index, state):
        self.writer.snapshot(index, state)

    def finish(self, result):
        self.writer.finish(result)

    def close(self):
        self.writer.close()


@transaction.atomic
def save_run(loaded, result, output_dir, summary, samples):
    run = SimulationRun.objects.create(
        label=loaded.run.label,
        config=dict(loaded.effective),
        status=result.status,
        stop_reason=result.stop_reason,
        final_t=result.final_t,
        steps=result.steps,
        output_dir=str(output_dir),
        summary=summary,
        finished_at=timezone.now(),
    )
    DiagnosticsSample.objects.bulk_create(
        DiagnosticsSample.from_record(run, index, record) for index, record in samples
    )
    logger.info('stored run %s with %d samples', run.pk, len(samples))
    return run


def save_validation(outcome):
    report = ValidationReport.objects.create(
        level=outcome.level,
        passed=outcome.passed,
        results=[result.as_dict() for result in outcome.results],
        duration=outcome.duration,
    )
    logger.info('stored validation report %s', report.pk)
    return report
