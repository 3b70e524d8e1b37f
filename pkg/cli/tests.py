import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from core.exceptions import ConfigSchemaError
from dynamics.models import SimulationRun, ValidationReport
from dynamics.output import DIAGNOSTICS_FILE, SUMMARY_FILE
from dynamics.records import CSV_COLUMNS
from spectral.grid import ParamGrid
from spectral.operators import riesz as true_riesz
from surface.snapshot import write_snapshot
from surface.state import MARGIN_TOLERANCE, SurfaceState
from .config import known_keys, load_config, render_effective
from .initial_data import InitialDataSpec
from .validation import run_validation


def flipped_riesz(F, j, grid):
    return -true_riesz(F, j, grid)


class ConfigParsingTests(SimpleTestCase):

    def test_defaults(self):
        loaded = load_config('')
        cfg = loaded.run
        self.assertEqual(cfg.grid, ParamGrid(32, math.pi))
        self.assertEqual(cfg.time.dt_policy, 'cfl')
        self.assertEqual(cfg.solver.tol, 1e-10)
        self.assertIsNone(cfg.quad.cutoff)
        self.assertEqual(cfg.init.kind, 'flat')
        self.assertEqual(cfg.output.dir, 'runs/default')
        self.assertEqual(set(loaded.effective), set(known_keys()))

    def test_comments_and_blank_lines(self):
        cfg = load_config('# header\n\ngrid.n = 16   # coarse\nfluid.mu2 = 3\n').run
        self.assertEqual(cfg.grid.n, 16)
        self.assertEqual(cfg.fluid.a_mu, 0.5)

    def test_unknown_key_is_named(self):
        with self.assertRaises(ConfigSchemaError) as caught:
            load_config('grid.n = 16\nsolver.tolerance = 1e-8\n')
        self.assertEqual(caught.exception.key, 'solver.tolerance')
        self.assertIn('line 2', str(caught.exception))

    def test_duplicate_and_malformed_lines(self):
        with self.assertRaises(ConfigSchemaError):
            load_config('grid.n = 16\ngrid.n = 32\n')
        with self.assertRaises(ConfigSchemaError):
            load_config('grid.n 16\n')

    def test_invalid_values_name_the_key(self):
        cases = {
            'grid.n = 24': 'grid.n',
            'run.guarded = maybe': 'run.guarded',
            'time.dt_policy = adaptive': 'time.dt_policy',
            'init.width = 0': 'init.width',
            'fluid.mu1 = -1': 'fluid.mu1',
            'grid.L = 1.0\nquad.cutoff = 2.0': 'quad.cutoff',
        }
        for text, key in cases.items():
            with self.subTest(text=text):
                with self.assertRaises(ConfigSchemaError) as caught:
                    load_config(text)
                self.assertEqual(caught.exception.key, key)

    def test_cutoff_is_checked_against_a_reloaded_grid(self):
        loaded = load_config('quad.cutoff = 2.0\n')
        self.assertEqual(loaded.run.quad.cutoff, 2.0)
        with self.assertRaises(ConfigSchemaError) as caught:
            loaded.with_grid(ParamGrid(16, 1.0))
        self.assertEqual(caught.exception.key, 'quad.cutoff')

    def test_cross_field_checks(self):
        with self.assertRaises(ConfigSchemaError):
            load_config('grid.n = 8\n')
        with self.assertRaises(ConfigSchemaError):
            load_config('init.kind = file\n')

    def test_run_flags_reach_the_quadrature(self):
        cfg = load_config('run.deterministic = false\nquad.cutoff = 1.5\nquad.ring = 2\n').run
        self.assertFalse(cfg.quadrature.deterministic)
        self.assertEqual(cfg.quadrature.cutoff, 1.5)
        self.assertEqual(cfg.quadrature.ring, 2)
        self.assertEqual(cfg.init.seed, 0)

    def test_effective_text_round_trip(self):
        text = load_config('grid.n = 16\nfluid.mu2 = 2.5\nrun.guarded = false\n').text
        lines = text.splitlines()
        self.assertEqual([line.split(' = ')[0] for line in lines], known_keys())
        self.assertIn('grid.L = 3.141592653589793', lines)
        self.assertIn('run.guarded = false', lines)
        self.assertIn('fluid.mu2 = 2.5', lines)
        reparsed = load_config(text)
        self.assertEqual(render_effective(reparsed.effective), text)


class InitialDataTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, math.pi)

    def test_flat(self):
        state = InitialDataSpec().build(self.grid)
        self.assertFalse(state.U.any())
        self.assertFalse(state.periodic)

    def test_cosine_mode_is_periodic(self):
        spec = InitialDataSpec(kind='cosine', k1=2, eps=1e-3)
        state = spec.build(self.grid)
        self.assertTrue(state.periodic)
        a1, _ = self.grid.mesh
        np.testing.assert_allclose(state.U[2], 1e-3 * np.cos(2.0 * a1), atol=1e-15)
        self.assertFalse(InitialDataSpec(kind='cosine', periodic='false').is_periodic)

    def test_bump_keeps_the_boundary_margin(self):
        state = InitialDataSpec(kind='bump', amplitude=0.1, width=0.5).build(self.grid)
        self.assertFalse(state.periodic)
        self.assertAlmostEqual(float(state.U[2].max()), 0.1, places=12)
        self.assertLessEqual(state.margin_ratio, 1e-6)

    def test_random_bump_is_seeded(self):
        first = InitialDataSpec(kind='random-bump', seed=3).build(self.grid)
        again = InitialDataSpec(kind='random-bump', seed=3).build(self.grid)
        other = InitialDataSpec(kind='random-bump', seed=4).build(self.grid)
        np.testing.assert_array_equal(first.U, again.U)
        self.assertFalse(np.array_equal(first.U, other.U))
        peak = np.unravel_index(np.argmax(np.sum(first.U ** 2, axis=0)), self.grid.shape)
        self.assertAlmostEqual(float(np.linalg.norm(first.U[(slice(None), *peak)])), 0.1, delta=0.02)
        for seed in range(50):
            state = InitialDataSpec(kind='random-bump', seed=seed).build(self.grid)
            self.assertLessEqual(state.margin_ratio, MARGIN_TOLERANCE, msg=f'seed {seed}')

    def test_wide_random_bump_is_narrowed_to_keep_the_margin(self):
        spec = InitialDataSpec(kind='random-bump', width=2.0, amplitude=0.2, seed=11)
        state = spec.build(self.grid)
        self.assertFalse(state.periodic)
        self.assertLessEqual(state.margin_ratio, MARGIN_TOLERANCE)

    def test_invalid_specs(self):
        with self.assertRaises(ConfigSchemaError):
            InitialDataSpec(width=0.0)
        with self.assertRaises(ConfigSchemaError):
            InitialDataSpec(kind='file')
        with self.assertRaises(ConfigSchemaError):
            InitialDataSpec(kind='wave')

    def test_file_must_match_the_grid(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'start.m3d'
            write_snapshot(path, SurfaceState(ParamGrid(16, math.pi), np.zeros((3, 16, 16))))
            spec = InitialDataSpec(kind='file', path=str(path))
            self.assertEqual(spec.build(ParamGrid(16, math.pi)).grid.n, 16)
            with self.assertRaises(ConfigSchemaError):
                spec.build(self.grid)

    def test_isothermalization_report(self):
        spec = InitialDataSpec(kind='bump', amplitude=0.1, isothermalize=True, iso_max_iter=50)
        state, report = spec.prepare(self.grid)
        self.assertLess(report.j_final, report.j_initial)
        self.assertIs(state, report.state)


def read_rows(directory):
    with open(Path(directory) / DIAGNOSTICS_FILE, newline='') as handle:
        return list(csv.reader(handle))


class RunCommandTests(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, body, name='run.cfg'):
        path = self.root / name
        out = self.root / name.replace('.cfg', '')
        path.write_text(f'grid.n = 16\noutput.dir = {out}\noutput.cadence = 1\n{body}')
        return path, out

    def test_flat_run_finishes(self):
        path, out = self.write_config('time.t_end = 0.1\n')
        stdout = StringIO()
        call_command('muskat3d', 'run', str(path), stdout=stdout)
        rows = read_rows(out)
        self.assertEqual(tuple(rows[0]), CSV_COLUMNS)
        for row in rows[1:]:
            self.assertLessEqual(float(row[CSV_COLUMNS.index('max_xt')]), 1e-12)
        self.assertIn('finished', stdout.getvalue())
        run = SimulationRun.objects.get()
        self.assertEqual(run.status, SimulationRun.Status.FINISHED)
        self.assertEqual(run.samples.count(), len(rows) - 1)
        self.assertEqual(run.config['grid.n'], 16)
        self.assertEqual((out / 'config.effective').read_text(), load_config(path.read_text()).text)

    def test_stable_cosine_decays(self):
        path, out = self.write_config(
            'time.t_end = 0.5\ninit.kind = cosine\ninit.eps = 1e-3\noutput.persist = false\n'
        )
        call_command('muskat3d', 'run', str(path), stdout=StringIO())
        summary = json.loads((out / SUMMARY_FILE).read_text())
        amplitudes = [value for _, value in summary['amplitude']]
        for before, after in zip(amplitudes[1:], amplitudes[2:]):
            self.assertLess(after, before)
        self.assertFalse(SimulationRun.objects.exists())

    def test_unstable_orientation_exits_with_guarded_status(self):
        path, out = self.write_config(
            'fluid.rho1 = 1.0\nfluid.rho2 = 0.0\nrun.sigma_min = 1.0\ninit.kind = cosine\n'
        )
        with self.assertRaises(CommandError) as caught:
            call_command('muskat3d', 'run', str(path), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
        summary = json.loads((out / SUMMARY_FILE).read_text())
        self.assertEqual(summary['stop_reason'], 'rayleigh-taylor')
        self.assertEqual(SimulationRun.objects.get().status, SimulationRun.Status.STOPPED)

    def test_schema_error_exits_with_error_status(self):
        path, _ = self.write_config('time.tend = 1.0\n')
        with self.assertRaises(CommandError) as caught:
            call_command('muskat3d', 'run', str(path), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('time.tend', str(caught.exception))

    def test_isothermalization_is_summarized(self):
        path, out = self.write_config(
            'time.t_end = 0.05\ninit.kind = bump\ninit.isothermalize = true\ninit.iso_max_iter = 20\n'
        )
        call_command('muskat3d', 'run', str(path), stdout=StringIO())
        summary = json.loads((out / SUMMARY_FILE).read_text())
        report = summary['isothermalization']
        self.assertLess(report['j_final'], report['j_initial'])


class DiagnoseCommandTests(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.grid = ParamGrid(16, math.pi)

    def diagnose(self, path, *params):
        stdout = StringIO()
        args = ['muskat3d', 'diagnose', str(path)]
        if params:
            args += ['--params', *params]
        call_command(*args, stdout=stdout)
        lines = stdout.getvalue().splitlines()
        return dict(zip(lines[0].split(','), lines[1].split(',')))

    def test_flat_snapshot(self):
        path = write_snapshot(self.root / 'flat.m3d', SurfaceState(self.grid, np.zeros((3, 16, 16))))
        record = self.diagnose(path)
        self.assertEqual(float(record['min_sigma']), 1.0)
        self.assertEqual(float(record['gauge']), 1.0)
        self.assertEqual(float(record['inv_n']), 1.0)
        record = self.diagnose(path, 'fluid.rho2=3.0')
        self.assertEqual(float(record['min_sigma']), 3.0)

    def test_mid_run_snapshot_reproduces_the_run_record(self):
        out = self.root / 'bump'
        config = self.root / 'bump.cfg'
        config.write_text(
            f'grid.n = 16\nfluid.mu2 = 2.0\ntime.t_end = 0.2\ninit.kind = bump\n'
            f'output.dir = {out}\noutput.cadence = 1\noutput.persist = false\n'
        )
        call_command('muskat3d', 'run', str(config), stdout=StringIO())
        rows = read_rows(out)
        in_run = dict(zip(rows[0], rows[2]))
        record = self.diagnose(out / 'snapshots' / 'step_000001.m3d', 'grid.n=16', 'fluid.mu2=2.0')
        for name in CSV_COLUMNS:
            expected = float(in_run[name])
            self.assertAlmostEqual(float(record[name]), expected, delta=1e-12 * max(1.0, abs(expected)))

    def test_truncated_snapshot_is_an_error(self):
        path = write_snapshot(self.root / 'flat.m3d', SurfaceState(self.grid, np.zeros((3, 16, 16))))
        path.write_bytes(path.read_bytes()[:-10])
        with self.assertRaises(CommandError) as caught:
            call_command('muskat3d', 'diagnose', str(path), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('snapshot-format', str(caught.exception))


class ValidationSuiteTests(SimpleTestCase):

    def test_spectral_identities_pass(self):
        outcome = run_validation('fast', only=[2])
        self.assertTrue(outcome.passed)
        self.assertLessEqual(outcome.results[0].measured['lambda_identity'], 1e-10)

    def test_flipped_riesz_sign_fails_the_identity(self):
        with mock.patch('spectral.operators.riesz', flipped_riesz):
            outcome = run_validation('fast', only=[2])
        self.assertFalse(outcome.passed)
        self.assertGreater(outcome.results[0].measured['lambda_identity'], 1.0)

    def test_operator_oracles(self):
        result = run_validation('fast', only=[3]).results[0]
        self.assertTrue(result.passed, result.measured)
        self.assertLessEqual(result.measured['tangential_kernel'], 0.1)
        self.assertNotIn('layer_orders', result.measured)

    def test_gauge_monitor_and_round_trips(self):
        outcome = run_validation('fast', only=[8, 9])
        self.assertEqual([r.number for r in outcome.results], [8, 9])
        for result in outcome.results:
            self.assertTrue(result.passed, (result.name, result.measured, result.error))
        self.assertTrue(outcome.results[0].measured['control_flagged'])

    def test_unknown_level(self):
        with self.assertRaises(ValueError):
            run_validation('thorough')


class ValidateCommandTests(TestCase):

    def test_report_is_stored(self):
        stdout = StringIO()
        call_command('muskat3d', 'validate', '--only', '2', stdout=stdout)
        self.assertIn('PASS [2] spectral-identities', stdout.getvalue())
        report = ValidationReport.objects.get()
        self.assertTrue(report.passed)
        self.assertEqual(report.results[0]['name'], 'spectral-identities')

    def test_failed_criterion_sets_the_exit_status(self):
        with mock.patch('spectral.operators.riesz', flipped_riesz):
            with self.assertRaises(CommandError) as caught:
                call_command('muskat3d', 'validate', '--only', '2', stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
        self.assertFalse(ValidationReport.objects.get().passed)
