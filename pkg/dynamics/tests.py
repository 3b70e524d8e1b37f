import csv
import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.contrib.auth import get_user_model
from django.test import SimpleTestCase, TestCase
from rest_framework.test import APITestCase

from birkhoff_rott.quadrature import QuadratureConfig
from core.exceptions import RayleighTaylorViolation
from layerpot.params import FluidParams
from spectral.grid import ParamGrid
from spectral.testing import gaussian_bump
from surface.geometry import geometry
from surface.snapshot import read_snapshot, write_snapshot
from surface.state import SurfaceState
from .config import GuardConfig, OutputConfig, RunConfig, TimeConfig
from .evolution import (
    advance, choose_dt, diagnose, energy, evaluate, rayleigh_taylor, run, step,
)
from .models import DiagnosticsSample, SimulationRun, ValidationReport
from .monitor import monitor_inequalities
from .output import CONFIG_FILE, DIAGNOSTICS_FILE, EXTRAS_FILE, SUMMARY_FILE, RunWriter
from .records import CSV_COLUMNS, format_value


def run_config(n=16, fluid=None, cadence=1, **time):
    time.setdefault('t_end', 0.2)
    return RunConfig(
        grid=ParamGrid(n, np.pi),
        fluid=fluid or FluidParams(),
        time=TimeConfig(**time),
        output=OutputConfig(cadence=cadence),
    )


def cosine_state(grid, eps, k=1):
    a1, _ = grid.mesh
    U = np.zeros((3, *grid.shape))
    U[2] = eps * np.cos(k * a1)
    return SurfaceState(grid, U, periodic=True)


def mode_amplitude(state, k=1):
    a1, _ = state.grid.mesh
    return 2.0 * float(np.mean(state.U[2] * np.cos(k * a1)))


def bump_state(grid, amplitude=0.1, width=0.5):
    U = np.zeros((3, *grid.shape))
    U[2] = gaussian_bump(grid, amplitude, width)
    return SurfaceState(grid, U)


class RayleighTaylorTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)

    def test_flat_surface(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        params = FluidParams(mu1=1.0, mu2=3.0, rho1=0.5, rho2=2.0)
        sigma, min_sigma = rayleigh_taylor(state, geometry(state), params, np.zeros((3, 16, 16)))
        np.testing.assert_array_equal(sigma, 1.5)
        self.assertEqual(min_sigma, 1.5)

    def test_equal_viscosities_reduce_to_the_normal(self):
        state = bump_state(self.grid, 0.3, 0.8)
        cache = geometry(state)
        params = FluidParams(mu1=2.0, mu2=2.0, rho1=0.0, rho2=1.0)
        br = np.random.default_rng(0).standard_normal((3, 16, 16))
        sigma, _ = rayleigh_taylor(state, cache, params, br)
        np.testing.assert_array_equal(sigma, cache.N[2])

    def test_small_bump_tends_to_the_density_jump(self):
        params = FluidParams(mu1=1.0, mu2=2.0)
        deviations = []
        for eps in (1e-2, 1e-3):
            state = bump_state(self.grid, eps, 0.6)
            evaluation = evaluate(state, run_config(fluid=params))
            _, min_sigma = rayleigh_taylor(state, evaluation.cache, params, evaluation.br)
            deviations.append(abs(min_sigma - 1.0))
        self.assertLess(deviations[1], 0.2 * deviations[0])


class EnergyTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.flat = SurfaceState(self.grid, np.zeros((3, 16, 16)))

    def test_flat_energy(self):
        self.assertEqual(energy(self.flat, FluidParams()), 3.0)
        self.assertEqual(energy(self.flat, FluidParams(mu1=1.0, mu2=4.0, rho2=2.0)), 2.5)

    def test_violation_is_an_error_when_guarded(self):
        params = FluidParams(rho1=1.0, rho2=0.0)
        with self.assertRaises(RayleighTaylorViolation) as ctx:
            energy(self.flat, params)
        self.assertEqual(ctx.exception.min_sigma, -1.0)
        self.assertEqual(ctx.exception.stop_reason, 'rayleigh-taylor')
        self.assertEqual(energy(self.flat, params, guarded=False), math.inf)

    def test_missing_velocity_uses_the_run_settings(self):
        cfg = run_config(fluid=FluidParams(mu1=1.0, mu2=3.0))
        cfg = replace(cfg, solver=replace(cfg.solver, method='picard', tol=1e-12))
        state = bump_state(self.grid, 0.1, 0.6)
        evaluation = evaluate(state, cfg)
        _, min_sigma = rayleigh_taylor(state, evaluation.cache, cfg.fluid, evaluation.br)
        expected = energy(state, cfg.fluid, min_sigma=min_sigma, gauge_stride=1)
        with mock.patch('dynamics.evolution.evaluate', wraps=evaluate) as spy:
            total = energy(state, cfg.fluid, cfg=cfg)
        self.assertEqual(spy.call_args.args[1].solver.method, 'picard')
        self.assertAlmostEqual(total, expected, delta=1e-12 * expected)

    def test_energy_is_a_function_of_the_saved_state(self):
        cfg = run_config()
        state = bump_state(self.grid)
        record = diagnose(state, cfg)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bump.m3d'
            write_snapshot(path, state)
            reloaded = read_snapshot(path)
        again = diagnose(reloaded, cfg)
        self.assertAlmostEqual(again.energy, record.energy, delta=1e-12)
        self.assertEqual(again.csv_row(), record.csv_row())


class StepTests(SimpleTestCase):

    def test_flat_state_is_a_fixed_point(self):
        cfg = run_config()
        state = SurfaceState(cfg.grid, np.zeros((3, 16, 16)))
        new_state, record = step(state, cfg, 0.05)
        self.assertLessEqual(float(np.max(np.abs(new_state.U))), 1e-13)
        self.assertEqual(new_state.t, 0.05)
        self.assertEqual(record.max_xt, 0.0)
        self.assertEqual(record.energy, 3.0)
        self.assertEqual(record.omega_iters, 0)

    def test_single_mode_decays_at_the_linear_rate(self):
        cfg = run_config(n=32)
        eps, dt = 1e-4, 0.05
        state = cosine_state(cfg.grid, eps)
        new_state, _ = step(state, cfg, dt)
        rate = -cfg.fluid.a_rho * 1.0
        expected = eps * math.exp(rate * dt)
        self.assertAlmostEqual(mode_amplitude(new_state) / expected, 1.0, delta=1e-6)

    def test_time_step_refinement_order(self):
        cfg = run_config(n=16)
        state = cosine_state(cfg.grid, 1e-2)

        def gap(dt):
            whole = advance(state, cfg, dt)
            half = advance(advance(state, cfg, 0.5 * dt), cfg, 0.5 * dt)
            return float(np.max(np.abs(whole.U - half.U)))

        order = math.log2(gap(0.4) / gap(0.2))
        self.assertGreaterEqual(order, 4.5)

    def test_cfl_time_step(self):
        cfg = run_config(n=16, t_end=1.0)
        h = cfg.grid.h
        self.assertAlmostEqual(choose_dt(cfg, 0.0, 0.0), min(0.5 * h / 0.5, 0.1))
        self.assertAlmostEqual(choose_dt(cfg, 0.0, 100.0), 0.5 * h / 100.0)
        self.assertAlmostEqual(choose_dt(cfg, 0.99, 0.0), 0.01)
        fixed = run_config(n=16, t_end=1.0, dt_policy='fixed', dt=0.03)
        self.assertEqual(choose_dt(fixed, 0.5, 7.0), 0.03)


    def test_guarded_step_aborts_when_sigma_is_not_positive(self):
        cfg = run_config(fluid=FluidParams(rho1=1.0, rho2=0.0))
        state = cosine_state(cfg.grid, 1e-3)
        with self.assertRaises(RayleighTaylorViolation) as caught:
            step(state, cfg, 0.01)
        self.assertLess(caught.exception.min_sigma, 0.0)
        self.assertEqual(caught.exception.context['stage'], 1)
        record = caught.exception.context['record']
        self.assertTrue(record.rt_violated)
        self.assertEqual(record.min_sigma, caught.exception.min_sigma)

    def test_guarded_rk_stages_are_checked(self):
        stable = run_config()
        unstable = replace(stable, fluid=FluidParams(rho1=1.0, rho2=0.0))
        state = cosine_state(stable.grid, 1e-3)
        start = evaluate(state, stable)
        with self.assertRaises(RayleighTaylorViolation) as caught:
            advance(state, unstable, 0.01, start)
        self.assertEqual(caught.exception.context['stage'], 2)
        with self.assertRaises(RayleighTaylorViolation):
            advance(state, unstable, 0.01)

    def test_unguarded_step_continues(self):
        cfg = replace(
            run_config(fluid=FluidParams(rho1=1.0, rho2=0.0)), run=GuardConfig(guarded=False),
        )
        new_state, record = step(cosine_state(cfg.grid, 1e-3), cfg, 0.01)
        self.assertTrue(record.rt_violated)
        self.assertEqual(new_state.t, 0.01)


class RunTests(SimpleTestCase):

    def test_flat_run(self):
        cfg = run_config(t_end=0.3)
        result = run(cfg, SurfaceState(cfg.grid, np.zeros((3, 16, 16))))
        self.assertEqual(result.stop_reason, 'finished')
        self.assertEqual(result.status, 'finished')
        self.assertAlmostEqual(result.final_t, 0.3, delta=1e-12)
        self.assertGreaterEqual(len(result.records), 2)
        for record in result.records:
            self.assertLessEqual(record.max_xt, 1e-12)
            self.assertEqual(record.energy, 3.0)

    def test_stable_mode_decays_monotonically(self):
        cfg = run_config(t_end=0.5)
        result = run(cfg, cosine_state(cfg.grid, 1e-3))
        self.assertEqual(result.status, 'finished')
        amplitudes = [record.amplitude for record in result.records]
        for before, after in zip(amplitudes[1:], amplitudes[2:]):
            self.assertLess(after, before)
        for record in result.records:
            self.assertAlmostEqual(record.min_sigma, 1.0, delta=0.1)
            self.assertFalse(record.rt_violated)

    def test_unstable_orientation_stops_when_guarded(self):
        cfg = run_config(fluid=FluidParams(rho1=1.0, rho2=0.0))
        result = run(cfg, cosine_state(cfg.grid, 1e-4))
        self.assertEqual(result.stop_reason, 'rayleigh-taylor')
        self.assertEqual(result.status, 'stopped')
        self.assertEqual(result.steps, 0)

    def test_unstable_mode_grows_when_unguarded(self):
        cfg = RunConfig(
            grid=ParamGrid(16, np.pi),
            fluid=FluidParams(rho1=1.0, rho2=0.0),
            time=TimeConfig(t_end=0.4, dt_policy='fixed', dt=0.05),
            run=GuardConfig(guarded=False),
            output=OutputConfig(cadence=1),
        )
        eps = 1e-4
        result = run(cfg, cosine_state(cfg.grid, eps))
        self.assertEqual(result.status, 'finished')
        self.assertTrue(all(record.rt_violated for record in result.records))
        self.assertTrue(all(record.energy == math.inf for record in result.records))
        rate = math.log(mode_amplitude(result.state) / eps) / result.final_t
        self.assertAlmostEqual(rate / abs(cfg.fluid.a_rho), 1.0, delta=0.05)

    def test_cutoff_beyond_the_box_is_rejected(self):
        with self.assertRaises(ValueError):
            RunConfig(grid=ParamGrid(16, np.pi), quad=QuadratureConfig(cutoff=10.0))

    def test_margin_breach_is_logged_once(self):
        cfg = run_config(t_end=0.2, dt_policy='fixed', dt=0.1)
        state = bump_state(cfg.grid, 0.05, 2.0)
        with self.assertLogs('dynamics', level='WARNING') as logs:
            result = run(cfg, state)
        breaches = [line for line in logs.output if 'boundary margin' in line]
        self.assertEqual(len(breaches), 1)
        self.assertTrue(result.margin_breached)
        self.assertEqual(result.status, 'finished')

    def test_margin_error_policy_stops(self):
        cfg = RunConfig(grid=ParamGrid(16, np.pi), run=GuardConfig(margin_policy='error'))
        result = run(cfg, bump_state(cfg.grid, 0.05, 2.0))
        self.assertEqual(result.stop_reason, 'boundary-margin')
        self.assertEqual(result.status, 'stopped')

    def test_repeat_runs_are_bit_identical(self):
        cfg = run_config(fluid=FluidParams(mu1=1.0, mu2=2.0), t_end=0.1)
        first = run(cfg, bump_state(cfg.grid, 0.05, 0.5))
        second = run(cfg, bump_state(cfg.grid, 0.05, 0.5))
        np.testing.assert_array_equal(first.state.U, second.state.U)
        self.assertEqual(
            [r.csv_row() for r in first.records], [r.csv_row() for r in second.records],
        )

    def test_stable_bump_satisfies_the_gauge_inequality(self):
        cfg = run_config(fluid=FluidParams(mu1=1.0, mu2=2.0), t_end=0.3)
        result = run(cfg, bump_state(cfg.grid, 0.1, 0.6))
        report = monitor_inequalities(result.records, tol=cfg.diag.monitor_tol)
        self.assertFalse(report.insufficient)
        self.assertEqual(report.violations, [])


def fake_record(t, gauge, grad_xt, min_sigma=1.0):
    return SimpleNamespace(t=t, gauge=gauge, grad_xt=grad_xt, min_sigma=min_sigma)


class MonitorTests(SimpleTestCase):

    def test_short_history_is_insufficient(self):
        report = monitor_inequalities([fake_record(0.0, 1.0, 0.0), fake_record(0.1, 1.0, 0.0)])
        self.assertTrue(report.insufficient)
        self.assertFalse(report.passed)

    def test_flat_history_is_identically_zero(self):
        history = [fake_record(0.1 * i, 1.0, 0.0) for i in range(4)]
        report = monitor_inequalities(history)
        self.assertTrue(report.passed)
        self.assertEqual([i.rate for i in report.intervals], [0.0, 0.0, 0.0])
        self.assertEqual(report.sigma_rate, [0.0, 0.0, 0.0])

    def test_corrupted_history_is_flagged(self):
        history = [
            fake_record(0.0, 1.0, 0.1),
            fake_record(0.1, 0.9, 0.1),
            fake_record(0.2, 1.5, 0.01),
        ]
        report = monitor_inequalities(history)
        self.assertEqual(len(report.violations), 1)
        self.assertEqual(report.violations[0].t0, 0.1)
        self.assertFalse(report.passed)
        self.assertEqual(report.as_dict()['violations'], 1)

    def test_sigma_series(self):
        history = [fake_record(0.0, 1.0, 0.0, 1.0), fake_record(0.5, 1.0, 0.0, 0.5),
                   fake_record(1.0, 1.0, 0.0, 0.25)]
        report = monitor_inequalities(history)
        self.assertEqual(report.sigma_rate, [2.0, 4.0])


class RecordFormatTests(SimpleTestCase):

    def test_round_trip_precision(self):
        value = 0.1 + 0.2
        self.assertEqual(float(format_value(value)), value)
        self.assertEqual(format_value(math.inf), 'inf')
        self.assertEqual(format_value(12), '12')
        self.assertEqual(format_value(1.0), '1')


class RunWriterTests(SimpleTestCase):

    def test_artifacts_of_a_flat_run(self):
        cfg = run_config(t_end=0.3, cadence=2)
        with tempfile.TemporaryDirectory() as tmp:
            writer = RunWriter(tmp, config_text='grid.n = 16\n')
            result = run(cfg, SurfaceState(cfg.grid, np.zeros((3, 16, 16))), observer=writer)
            directory = Path(tmp)
            with open(directory / DIAGNOSTICS_FILE, newline='') as handle:
                rows = list(csv.reader(handle))
            with open(directory / EXTRAS_FILE, newline='') as handle:
                extras = list(csv.reader(handle))
            summary = json.loads((directory / SUMMARY_FILE).read_text())
            config_text = (directory / CONFIG_FILE).read_text()
            snapshots = sorted(p.name for p in (directory / 'snapshots').iterdir())

        self.assertEqual(tuple(rows[0]), CSV_COLUMNS)
        self.assertEqual(extras[0][:2], ['t', 'dt'])
        self.assertEqual(float(rows[-1][0]), result.final_t)
        for row in rows[1:]:
            self.assertLessEqual(float(row[CSV_COLUMNS.index('max_xt')]), 1e-12)
        self.assertEqual(summary['stop_reason'], 'finished')
        self.assertEqual(summary['status'], 'finished')
        self.assertEqual(summary['peaks']['energy'], 3.0)
        self.assertTrue(summary['monitor']['passed'])
        self.assertEqual(summary['snapshots'], snapshots)
        self.assertEqual(len(snapshots), len(rows) - 1)
        self.assertEqual(config_text, 'grid.n = 16\n')

    def test_stopped_run_still_leaves_a_summary(self):
        cfg = run_config(fluid=FluidParams(rho1=1.0, rho2=0.0))
        with tempfile.TemporaryDirectory() as tmp:
            run(cfg, cosine_state(cfg.grid, 1e-4), observer=RunWriter(tmp))
            summary = json.loads((Path(tmp) / SUMMARY_FILE).read_text())
            with open(Path(tmp) / DIAGNOSTICS_FILE, newline='') as handle:
                rows = list(csv.reader(handle))
        self.assertEqual(summary['stop_reason'], 'rayleigh-taylor')
        self.assertEqual(summary['status'], 'stopped')
        self.assertEqual(len(rows), 2)
        self.assertIsNone(summary['peaks']['energy'])


    def test_unexpected_error_closes_the_csv_files(self):
        cfg = run_config()
        with tempfile.TemporaryDirectory() as tmp:
            writer = RunWriter(tmp)
            with mock.patch('dynamics.evolution.diagnose', side_effect=RuntimeError('boom')):
                with self.assertRaises(RuntimeError):
                    run(cfg, SurfaceState(cfg.grid, np.zeros((3, 16, 16))), observer=writer)
            self.assertIsNone(writer.diagnostics._file)
            self.assertIsNone(writer.extras._file)
            self.assertFalse((Path(tmp) / SUMMARY_FILE).exists())


class PersistenceTests(TestCase):

    def test_sample_from_record(self):
        cfg = run_config(t_end=0.1)
        result = run(cfg, SurfaceState(cfg.grid, np.zeros((3, 16, 16))))
        sim = SimulationRun.objects.create(label='flat', status=SimulationRun.Status.FINISHED)
        sample = DiagnosticsSample.from_record(sim, 0, result.records[0])
        sample.save()
        sample.refresh_from_db()
        self.assertEqual(sample.energy, 3.0)
        self.assertEqual(sample.min_sigma, 1.0)
        self.assertIn('flat', str(sim))

    def test_infinite_energy_is_stored_as_null(self):
        sim = SimulationRun.objects.create(label='unstable')
        record = SimpleNamespace(
            t=0.0, min_sigma=-1.0, gauge=1.0, inv_n=1.0, f_inf=0.0, g_inf=0.0, r1=0.0, r2=0.0,
            x_norm4=0.0, energy=math.inf, omega_iters=1, omega_res=0.0, max_xt=0.0,
            grad_xt=0.0, amplitude=0.0, rt_violated=True,
        )
        sample = DiagnosticsSample.from_record(sim, 0, record)
        sample.save()
        self.assertIsNone(DiagnosticsSample.objects.get(pk=sample.pk).energy)


class ResultsApiTests(APITestCase):

    def setUp(self):
        user = get_user_model().objects.create_user(username='analyst', password='pass-1234')
        self.client.force_authenticate(user=user)
        self.run = SimulationRun.objects.create(
            label='bump', status=SimulationRun.Status.FINISHED, stop_reason='finished',
            config={'diag.monitor_tol': 1e-3}, final_t=0.2, steps=2,
        )
        for step in range(3):
            DiagnosticsSample.objects.create(
                run=self.run, step=step, t=0.1 * step, min_sigma=1.0, gauge=1.0, inv_n=1.0,
                f_inf=0.0, g_inf=0.0, r1=0.0, r2=0.0, x_norm4=0.0, energy=3.0,
                omega_iters=0, omega_res=0.0, max_xt=0.0,
            )
        ValidationReport.objects.create(level='fast', passed=True, results=[], duration=1.0)

    def test_requires_authentication(self):
        self.client.force_authenticate(user=None)
        response = self.client.get('/api/v1/dynamics/runs/')
        self.assertEqual(response.status_code, 401)

    def test_list_and_filter_runs(self):
        SimulationRun.objects.create(label='other', status=SimulationRun.Status.FAILED)
        response = self.client.get('/api/v1/dynamics/runs/', {'status': 'finished'})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['label'], 'bump')

    def test_run_detail_carries_config(self):
        response = self.client.get(f'/api/v1/dynamics/runs/{self.run.pk}/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['config'], {'diag.monitor_tol': 1e-3})

    def test_samples_and_monitor(self):
        samples = self.client.get(f'/api/v1/dynamics/runs/{self.run.pk}/samples/')
        self.assertEqual(samples.status_code, 200)
        self.assertEqual([s['step'] for s in samples.data], [0, 1, 2])
        monitor = self.client.get(f'/api/v1/dynamics/runs/{self.run.pk}/monitor/')
        self.assertEqual(monitor.status_code, 200)
        self.assertTrue(monitor.data['passed'])
        self.assertEqual(monitor.data['violations'], 0)

    def test_runs_are_read_only(self):
        response = self.client.post('/api/v1/dynamics/runs/', {'label': 'x'})
        self.assertEqual(response.status_code, 405)

    def test_validation_reports(self):
        response = self.client.get('/api/v1/dynamics/validation-reports/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['results'][0]['level'], 'fast')
