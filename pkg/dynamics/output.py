"""
Run artifacts: diagnostics CSV, extras CSV, snapshots and the JSON summary.
動力學模組 - 輸出檔案
"""

import csv
import json
import logging
import math
from pathlib import Path

from core.conf import get_setting
from surface.snapshot import write_snapshot
from .monitor import monitor_inequalities
from .records import CSV_COLUMNS, EXTRA_COLUMNS, DiagnosticsRecord, finite_or_none

logger = logging.getLogger(__name__)

DIAGNOSTICS_FILE = 'diagnostics.csv'
EXTRAS_FILE = 'extras.csv'
SUMMARY_FILE = 'summary.json'
CONFIG_FILE = 'config.effective'
SNAPSHOT_DIR = 'snapshots'

PEAK_FIELDS = (
    'gauge', 'inv_n', 'f_inf', 'g_inf', 'r1', 'r2', 'x_norm4', 'energy',
    'omega_iters', 'omega_res', 'max_xt', 'grad_xt', 'iso_j', 'amplitude',
    'gauge_rate', 'margin_ratio',
)


def resolve_output_dir(path):
    """Relative output.dir values live under the OUTPUT_ROOT setting."""
    path = Path(path)
    if path.is_absolute():
        return path
    return Path(get_setting('OUTPUT_ROOT')) / path


def snapshot_name(index):
    return f'step_{index:06d}.m3d'


def peak_values(records):
    peaks = {}
    for name in PEAK_FIELDS:
        values = [getattr(record, name) for record in records]
        finite = [v for v in values if math.isfinite(v)]
        peaks[name] = max(finite) if finite else None
    sigmas = [record.min_sigma for record in records]
    peaks['min_sigma'] = min(sigmas) if sigmas else None
    return peaks


def build_summary(result, monitor_tol=1e-3):
    records = result.records
    return {
        'status': result.status,
        'stop_reason': result.stop_reason,
        'message': result.message,
        'final_t': result.final_t,
        'steps': result.steps,
        'records': len(records),
        'rt_violations': sum(1 for record in records if record.rt_violated),
        'margin_breached': result.margin_breached,
        'peaks': {k: finite_or_none(v) for k, v in peak_values(records).items()},
        'amplitude': [[record.t, record.amplitude] for record in records],
        'monitor': monitor_inequalities(records, tol=monitor_tol).as_dict(),
        'final': records[-1].as_dict() if records else None,
    }


class CsvSeries:
    """Append-only CSV file with a fixed header."""

    def __init__(self, path, header):
        self.path = path
        self._file = open(path, 'w', newline='')
        self._writer = csv.writer(self._file, lineterminator='\n')
        self._writer.writerow(header)

    def write_row(self, row):
        self._writer.writerow(row)

    def flush(self):
        self._file.flush()

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None


class RunWriter:
    """
    執行輸出

    Observer for dynamics.evolution.Runner. Every file is complete after
    each call, so a run that stops early still leaves a valid output set.
    """

    def __init__(self, directory, config_text=None, monitor_tol=1e-3, extra=None):
        self.directory = Path(directory)
        self.snapshot_dir = self.directory / SNAPSHOT_DIR
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        self.monitor_tol = monitor_tol
        self.extra = extra or {}
        if config_text is not None:
            (self.directory / CONFIG_FILE).write_text(config_text)
        self.diagnostics = CsvSeries(self.directory / DIAGNOSTICS_FILE, CSV_COLUMNS)
        self.extras = CsvSeries(self.directory / EXTRAS_FILE, EXTRA_COLUMNS)
        self.snapshots = []
        self.summary = None

    def record(self, index, record: DiagnosticsRecord):
        self.diagnostics.write_row(record.csv_row())
        self.extras.write_row(record.extras_row())
        self.diagnostics.flush()
        self.extras.flush()

    def snapshot(self, index, state):
        path = self.snapshot_dir / snapshot_name(index)
        write_snapshot(path, state)
        self.snapshots.append(path)

    def close(self):
        self.diagnostics.close()
        self.extras.close()

    def finish(self, result):
        self.close()
        self.summary = build_summary(result, self.monitor_tol)
        self.summary['snapshots'] = [path.name for path in self.snapshots]
        self.summary.update(self.extra)
        with open(self.directory / SUMMARY_FILE, 'w') as handle:
            json.dump(self.summary, handle, indent=2, allow_nan=False)
            handle.write('\n')
        logger.info('run artifacts written to %s', self.directory)
