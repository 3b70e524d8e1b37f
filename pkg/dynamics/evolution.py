"""
Time integration of the contour system with per-step diagnostics.
動力學模組 - 時間積分與診斷

One evaluation of the right-hand side solves Ω, forms ω and BR, and adds
the tangential terms: X_t = BR + C₁X₁ + C₂X₂. Steps are classical RK4;
stage 1 solves Ω from a cold start so the record at the start of a step is
a pure function of the state, stages 2-4 warm-start from the previous
stage.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from birkhoff_rott.velocity import br_velocity
from core.exceptions import Muskat3DError, RayleighTaylorViolation
from layerpot.darcy import darcy_residual, vorticity_density
from layerpot.solver import solve_omega
from spectral.operators import lambda_op, spectral_derivative
from surface.geometry import (
    chord_arc_gauge, chord_arc_rate, dot, geometry, isothermal_defect,
    isothermal_residual, sobolev_norm,
)
from surface.state import MARGIN_TOLERANCE
from tangential.coefficients import surface_velocity, tangential_coeffs
from .records import DiagnosticsRecord

logger = logging.getLogger(__name__)

# reasons that end a run with the guarded-stop status
GUARD_REASONS = (
    'rayleigh-taylor', 'boundary-margin', 'gauge-threshold', 'normal-threshold',
    'amplitude-growth', 'max-steps',
)


@dataclass(frozen=True)
class Evaluation:
    """一次右端項計算的中間量"""

    state: object
    cache: object
    omega_report: object
    omega: np.ndarray
    br: np.ndarray
    xt: np.ndarray

    @property
    def max_xt(self):
        return float(np.sqrt(dot(self.xt, self.xt)).max())


def evaluate(state, cfg, x0=None, cache=None):
    cache = cache or geometry(state)
    report = solve_omega(
        state, cache, cfg.fluid,
        tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, method=cfg.solver.method,
        restart=cfg.solver.restart, cfg=cfg.quadrature, x0=x0,
    )
    omega = vorticity_density(state, cache, report.omega)
    br = br_velocity(state, cache, omega, cfg.quadrature)
    tang = tangential_coeffs(state, cache, br)
    xt = surface_velocity(state, cache, br, tang)
    return Evaluation(state, cache, report, omega, br, xt)


def rayleigh_taylor(state, cache, params, br):
    """σ = (μ² − μ¹) BR·N + (ρ² − ρ¹) N₃ and its minimum over the grid."""
    sigma = params.viscosity_jump * dot(br, cache.N) + params.density_jump * cache.N[2]
    return sigma, float(sigma.min())


def energy(state, params, k=4, cache=None, br=None, gauge=None, min_sigma=None,
           gauge_stride=1, x_norm=None, guarded=True, cfg=None):
    """
    E = ‖X‖²_k + ‖F(X)‖²∞ + ‖|N|⁻¹‖∞ + (min σ)⁻¹.

    Missing inputs are computed from the state; BR comes from the solver
    and quadrature settings of ``cfg`` when given, else from the defaults.
    With min σ ≤ 0 a guarded call raises RayleighTaylorViolation; an
    unguarded call returns +inf.
    """
    cache = cache or geometry(state)
    if min_sigma is None:
        if br is None:
            br = _solve_br(state, cache, params, cfg)
        min_sigma = rayleigh_taylor(state, cache, params, br)[1]
    if min_sigma <= 0.0:
        if guarded:
            raise RayleighTaylorViolation(
                f'Rayleigh-Taylor condition fails at t={state.t:.6g}: min σ = {min_sigma:.6e}',
                min_sigma=min_sigma,
            )
        return math.inf
    if gauge is None:
        gauge = chord_arc_gauge(state, stride=gauge_stride)
    if x_norm is None:
        x_norm = sobolev_norm(state, k)
    return x_norm * x_norm + gauge * gauge + cache.inv_normal_max + 1.0 / min_sigma


def _solve_br(state, cache, params, cfg=None):
    if cfg is not None:
        return evaluate(state, replace(cfg, fluid=params), cache=cache).br
    report = solve_omega(state, cache, params)
    return br_velocity(state, cache, vorticity_density(state, cache, report.omega))


def rt_dissipation(state, cache, params, sigma, k):
    """
    −Σ_i 2^{3/2}/(μ¹ + μ²) ∫ σ/|∇X|³ ∂_i^kX·Λ(∂_i^kX) dα; non-positive
    while σ > 0.
    """
    grid = state.grid
    grad_cubed = (dot(cache.X1, cache.X1) + dot(cache.X2, cache.X2)) ** 1.5
    total = 0.0
    for i in (1, 2):
        derivative = spectral_derivative(state.U, i, grid, order=k)
        if k == 1:
            derivative[i - 1] += 1.0
        total += grid.integrate(sigma / grad_cubed * dot(derivative, lambda_op(derivative, grid)))
    return -(2.0 ** 1.5) / (params.mu1 + params.mu2) * total


def velocity_gradient_max(xt, grid):
    """‖∇X_t‖∞ as the pointwise Frobenius norm (|∂₁X_t|² + |∂₂X_t|²)^{1/2}."""
    d1 = spectral_derivative(xt, 1, grid)
    d2 = spectral_derivative(xt, 2, grid)
    return float(np.sqrt(dot(d1, d1) + dot(d2, d2)).max())


def diagnose(state, cfg, evaluation=None, dt=0.0):
    """Full DiagnosticsRecord at the state; solves Ω cold when no evaluation is given."""
    evaluation = evaluation or evaluate(state, cfg)
    cache = evaluation.cache
    params = cfg.fluid
    grid = state.grid
    k = cfg.diag.sobolev_k

    sigma, min_sigma = rayleigh_taylor(state, cache, params, evaluation.br)
    gauge = chord_arc_gauge(state, stride=cfg.diag.gauge_stride)
    gauge_exact = chord_arc_gauge(state, stride=1) if cfg.diag.gauge_exact else math.nan
    f, g = isothermal_residual(state, cache)
    r1, r2 = darcy_residual(state, cache, params, evaluation.omega_report.omega, evaluation.br)
    x_norm = sobolev_norm(state, k)
    rt_violated = min_sigma <= 0.0
    total = energy(
        state, params, k=k, cache=cache, gauge=gauge, min_sigma=min_sigma, x_norm=x_norm,
        guarded=False,
    )
    return DiagnosticsRecord(
        t=state.t,
        min_sigma=min_sigma,
        gauge=gauge,
        inv_n=cache.inv_normal_max,
        f_inf=float(np.abs(f).max()),
        g_inf=float(np.abs(g).max()),
        r1=r1,
        r2=r2,
        x_norm4=x_norm,
        energy=total,
        omega_iters=int(evaluation.omega_report.iterations),
        omega_res=float(evaluation.omega_report.residual),
        max_xt=evaluation.max_xt,
        dt=float(dt),
        grad_xt=velocity_gradient_max(evaluation.xt, grid),
        iso_j=isothermal_defect(state, cache),
        amplitude=float(np.abs(state.U[2]).max()),
        gauge_exact=gauge_exact,
        gauge_rate=chord_arc_rate(state, evaluation.xt, stride=cfg.diag.gauge_stride),
        rt_dissipation=rt_dissipation(state, cache, params, sigma, k),
        margin_ratio=0.0 if state.periodic else state.margin_ratio,
        rt_violated=rt_violated,
        omega_method=evaluation.omega_report.method,
    )


def choose_dt(cfg, t, max_xt):
    """CFL: c·h / max(max|X_t|, |A_ρ|), clipped to dt_max and t_end − t."""
    policy = cfg.time
    remaining = policy.t_end - t
    if policy.dt_policy == 'fixed':
        dt = policy.dt
    else:
        speed = max(max_xt, abs(cfg.fluid.a_rho))
        dt = policy.cfl * cfg.grid.h / speed if speed > 0.0 else policy.dt_max
        dt = min(dt, policy.dt_max)
    return min(dt, remaining)


def check_stage(evaluation, cfg, stage):
    """Guarded runs abort as soon as a stage has min σ at or below run.sigma_min."""
    if not cfg.run.guarded:
        return
    min_sigma = rayleigh_taylor(evaluation.state, evaluation.cache, cfg.fluid, evaluation.br)[1]
    if min_sigma <= cfg.run.sigma_min:
        raise RayleighTaylorViolation(
            f'Rayleigh-Taylor condition fails in RK stage {stage} at t={evaluation.state.t:.6g}: '
            f'min σ = {min_sigma:.6e}',
            min_sigma=min_sigma, stage=stage,
        )


def advance(state, cfg, dt, start=None):
    """
    One RK4 step of size dt; ``start`` is the evaluation at the state.

    A supplied ``start`` is taken as already checked; stages computed here
    go through check_stage.
    """
    if start is None:
        start = evaluate(state, cfg)
        check_stage(start, cfg, 1)
    U, t = state.U, state.t
    k1 = start.xt
    second = evaluate(state.replace(U=U + 0.5 * dt * k1, t=t + 0.5 * dt), cfg, x0=start.omega_report.omega)
    check_stage(second, cfg, 2)
    k2 = second.xt
    third = evaluate(state.replace(U=U + 0.5 * dt * k2, t=t + 0.5 * dt), cfg, x0=second.omega_report.omega)
    check_stage(third, cfg, 3)
    k3 = third.xt
    fourth = evaluate(state.replace(U=U + dt * k3, t=t + dt), cfg, x0=third.omega_report.omega)
    check_stage(fourth, cfg, 4)
    k4 = fourth.xt
    return state.replace(U=U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t=t + dt)


def step(state, cfg, dt):
    """Advance by dt; returns the new state and the record at the step's start."""
    start = evaluate(state, cfg)
    record = diagnose(state, cfg, start, dt)
    if cfg.run.guarded and record.min_sigma <= cfg.run.sigma_min:
        raise RayleighTaylorViolation(
            f'Rayleigh-Taylor condition fails at t={state.t:.6g}: min σ = {record.min_sigma:.6e}',
            min_sigma=record.min_sigma, stage=1, record=record,
        )
    return advance(state, cfg, dt, start), record


def threshold_stop(record, cfg):
    """Stop reason triggered by a record, or None."""
    guard = cfg.run
    if guard.guarded and record.min_sigma <= guard.sigma_min:
        return 'rayleigh-taylor'
    if record.gauge > guard.gauge_max:
        return 'gauge-threshold'
    if record.inv_n > guard.inv_n_max:
        return 'normal-threshold'
    if record.amplitude > guard.amplitude_max:
        return 'amplitude-growth'
    return None


@dataclass
class RunResult:
    """模擬執行結果"""

    state: object
    records: list = field(default_factory=list)
    stop_reason: str = 'finished'
    message: str = ''
    steps: int = 0
    margin_breached: bool = False

    @property
    def status(self):
        if self.stop_reason == 'finished':
            return 'finished'
        if self.stop_reason in GUARD_REASONS:
            return 'stopped'
        return 'failed'

    @property
    def final_t(self):
        return self.state.t


class Runner:
    """
    時間推進主迴圈

    ``observer`` receives ``record(step, record)``, ``snapshot(step, state)``
    and ``finish(result)`` calls; the output writer implements it.
    """

    def __init__(self, cfg, observer=None):
        self.cfg = cfg
        self.observer = observer
        self.pending = None

    def notify(self, name, *args):
        handler = getattr(self.observer, name, None)
        if handler is not None:
            handler(*args)

    def emit(self, index, record, state):
        self.notify('record', index, record)
        self.notify('snapshot', index, state)
        self.pending = None

    def check_margin(self, state, result):
        policy = self.cfg.run.margin_policy
        if policy != 'warn':
            state.check_margin(policy)
            return
        if state.periodic or result.margin_breached:
            return
        ratio = state.margin_ratio
        if ratio > MARGIN_TOLERANCE:
            result.margin_breached = True
            logger.warning(
                'boundary margin breached at t=%.6g: frame/max ratio %.3e exceeds %.0e',
                state.t, ratio, MARGIN_TOLERANCE,
            )

    def run(self, state=None):
        try:
            return self.loop(state)
        except Exception as exc:
            if not isinstance(exc, Muskat3DError):
                logger.exception('run aborted by an unexpected error')
            self.notify('close')
            raise

    def loop(self, state=None):
        cfg = self.cfg
        if state is None:
            state = cfg.init.build(cfg.grid)
        result = RunResult(state)
        cadence = cfg.output.cadence
        end_slack = 1e-12 * max(1.0, abs(cfg.time.t_end))
        logger.info(
            'run start: n=%d L=%.6g t_end=%.6g periodic=%s', cfg.grid.n, cfg.grid.L,
            cfg.time.t_end, state.periodic,
        )
        try:
            self.check_margin(state, result)
        except Muskat3DError as exc:
            return self.stop(result, exc.stop_reason, str(exc))

        index = 0
        while True:
            try:
                start = evaluate(state, cfg)
                done = cfg.time.t_end - state.t <= end_slack
                dt = 0.0 if done else choose_dt(cfg, state.t, start.max_xt)
                record = diagnose(state, cfg, start, dt)
            except Muskat3DError as exc:
                return self.stop(result, exc.stop_reason, str(exc))

            result.records.append(record)
            self.pending = (index, record, state)
            reason = threshold_stop(record, cfg)
            if index % cadence == 0:
                self.emit(index, record, state)
                logger.info(
                    'step %d: t=%.6g dt=%.3e min_sigma=%.6g max_xt=%.3e omega_iters=%d',
                    index, state.t, dt, record.min_sigma, record.max_xt, record.omega_iters,
                )
            if reason is not None:
                return self.stop(result, reason, f'{reason} threshold reached at t={state.t:.6g}')
            if done:
                return self.stop(result, 'finished')
            if index >= cfg.time.max_steps:
                return self.stop(result, 'max-steps', f'step budget {cfg.time.max_steps} exhausted')

            try:
                advanced = advance(state, cfg, dt, start)
                self.check_margin(advanced, result)
            except Muskat3DError as exc:
                return self.stop(result, exc.stop_reason, str(exc))
            state = advanced
            index += 1
            result.state = state
            result.steps = index

    def stop(self, result, reason, message=''):
        """Flush the last record and close the run with ``reason``."""
        if self.pending is not None:
            self.emit(*self.pending)
        result.stop_reason = reason
        result.message = message
        if reason == 'finished':
            logger.info('run finished at t=%.6g after %d steps', result.final_t, result.steps)
        else:
            logger.warning('run stopped at t=%.6g: %s (%s)', result.final_t, reason, message)
        self.notify('finish', result)
        return result


def run(cfg, state=None, observer=None):
    return Runner(cfg, observer).run(state)
