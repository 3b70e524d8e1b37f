"""
Django management command for simulation runs, snapshot diagnostics and
the validation suite.
Usage:
    python manage.py muskat3d run <config>
    python manage.py muskat3d diagnose <snapshot> [--params k=v ...]
    python manage.py muskat3d validate [--level fast|full] [--only 2 3]

Exit status: 0 clean finish, 2 guarded stop or failed validation, 1 error.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from cli.config import load_config_file, load_overrides
from cli.services import RunRecorder, save_run, save_validation
from cli.validation import LEVELS, run_validation
from core.exceptions import Muskat3DError
from dynamics.evolution import diagnose, run
from dynamics.output import RunWriter, resolve_output_dir
from dynamics.records import CSV_COLUMNS, EXTRA_COLUMNS
from surface.snapshot import read_snapshot

logger = logging.getLogger(__name__)

EXIT_STOPPED = 2
EXIT_ERROR = 1


class Command(BaseCommand):
    help = 'Run, diagnose and validate Muskat interface simulations'

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True)

        run_parser = actions.add_parser('run', help='Run a simulation from a configuration file')
        run_parser.add_argument('config', help='key = value configuration file')

        diagnose_parser = actions.add_parser('diagnose', help='Print the diagnostics of a snapshot')
        diagnose_parser.add_argument('snapshot', help='snapshot file written by a run')
        diagnose_parser.add_argument(
            '--params', nargs='*', default=[], metavar='KEY=VALUE',
            help='configuration overrides, e.g. fluid.mu2=2.0',
        )

        validate_parser = actions.add_parser('validate', help='Run the validation suite')
        validate_parser.add_argument('--level', choices=LEVELS, default='fast')
        validate_parser.add_argument('--only', nargs='*', type=int, help='criterion numbers')
        validate_parser.add_argument('--no-persist', action='store_true', help='do not store the report')

    def handle(self, *args, **options):
        action = options['action']
        try:
            getattr(self, f'handle_{action}')(options)
        except Muskat3DError as exc:
            raise CommandError(f'{exc.stop_reason}: {exc}', returncode=EXIT_ERROR) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_ERROR) from exc

    def handle_run(self, options):
        loaded = load_config_file(options['config'])
        cfg = loaded.run
        state, report = cfg.init.prepare(cfg.grid)
        extra = {}
        if report is not None:
            extra['isothermalization'] = {
                'j_initial': report.j_initial,
                'j_final': report.j_final,
                'iterations': report.iterations,
            }

        output_dir = resolve_output_dir(cfg.output.dir)
        writer = RunWriter(output_dir, loaded.text, monitor_tol=cfg.diag.monitor_tol, extra=extra)
        recorder = RunRecorder(writer)
        result = run(cfg, state, observer=recorder)
        if cfg.output.persist:
            save_run(loaded, result, output_dir, writer.summary, recorder.samples)

        line = (
            f'{result.status}: {result.stop_reason} at t={result.final_t:.6g} '
            f'after {result.steps} steps, outputs in {output_dir}'
        )
        if result.status == 'finished':
            self.stdout.write(self.style.SUCCESS(line))
            return
        if result.message:
            self.stdout.write(result.message)
        if result.status == 'stopped':
            self.stdout.write(self.style.WARNING(line))
            raise CommandError(f'run stopped: {result.stop_reason}', returncode=EXIT_STOPPED)
        self.stdout.write(self.style.ERROR(line))
        raise CommandError(f'run failed: {result.stop_reason}', returncode=EXIT_ERROR)

    def handle_diagnose(self, options):
        loaded = load_overrides(options['params'])
        state = read_snapshot(options['snapshot'], periodic=loaded.run.init.is_periodic)
        cfg = loaded.with_grid(state.grid).run
        record = diagnose(state, cfg)
        self.stdout.write(','.join(CSV_COLUMNS))
        self.stdout.write(','.join(record.csv_row()))
        self.stdout.write(','.join(EXTRA_COLUMNS))
        self.stdout.write(','.join(record.extras_row()))
        if record.rt_violated:
            self.stdout.write(self.style.WARNING(f'Rayleigh-Taylor condition fails: min σ = {record.min_sigma:.6g}'))

    def handle_validate(self, options):
        outcome = run_validation(options['level'], only=options['only'] or None)
        for result in outcome.results:
            values = ', '.join(f'{k}={v}' for k, v in result.as_dict()['measured'].items())
            text = f'[{result.number}] {result.name}: {values} ({result.duration:.1f}s)'
            if result.passed:
                self.stdout.write(self.style.SUCCESS(f'PASS {text}'))
            else:
                self.stdout.write(self.style.ERROR(f'FAIL {text} {result.error}'.rstrip()))
        if not options['no_persist']:
            save_validation(outcome)
        verdict = f'{outcome.level} validation: {sum(r.passed for r in outcome.results)}/{len(outcome.results)} passed'
        if not outcome.passed:
            raise CommandError(verdict, returncode=EXIT_STOPPED)
        self.stdout.write(self.style.SUCCESS(verdict))
