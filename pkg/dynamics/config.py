"""
Run configuration objects.
動力學模組 - 執行設定

The management command validates the flat key = value text and builds these
frozen dataclasses; the numerical code only ever sees the dataclasses.
"""

import math
from dataclasses import dataclass, field, replace

from birkhoff_rott.quadrature import QuadratureConfig
from layerpot.params import FluidParams
from layerpot.solver import METHODS
from spectral.grid import ParamGrid
from surface.state import MARGIN_POLICIES

DT_POLICIES = ('cfl', 'fixed')


@dataclass(frozen=True)
class TimeConfig:
    """時間步設定"""

    dt_policy: str = 'cfl'
    dt: float = 0.01
    cfl: float = 0.5
    dt_max: float = 0.1
    t_end: float = 1.0
    max_steps: int = 100000

    def __post_init__(self):
        if self.dt_policy not in DT_POLICIES:
            raise ValueError(f'time.dt_policy must be one of {DT_POLICIES}, got {self.dt_policy!r}')
        for name in ('dt', 'cfl', 'dt_max'):
            if not getattr(self, name) > 0:
                raise ValueError(f'time.{name} must be positive')
        if self.t_end < 0:
            raise ValueError('time.t_end must not be negative')
        if self.max_steps < 1:
            raise ValueError('time.max_steps must be positive')


@dataclass(frozen=True)
class SolverConfig:
    """Ω 求解設定"""

    method: str = 'gmres'
    tol: float = 1e-10
    max_iter: int = 200
    restart: int = 30

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f'solver.method must be one of {METHODS}, got {self.method!r}')
        if not self.tol > 0 or self.max_iter < 1 or self.restart < 1:
            raise ValueError('solver.tol, solver.max_iter and solver.restart must be positive')


@dataclass(frozen=True)
class GuardConfig:
    """停止條件與執行模式"""

    guarded: bool = True
    deterministic: bool = True
    sigma_min: float = 0.0
    gauge_max: float = 1e3
    inv_n_max: float = 1e6
    amplitude_max: float = 10.0
    margin_policy: str = 'warn'
    seed: int = 0

    def __post_init__(self):
        if self.margin_policy not in MARGIN_POLICIES:
            raise ValueError(f'run.margin_policy must be one of {MARGIN_POLICIES}')
        if self.sigma_min < 0:
            raise ValueError('run.sigma_min must not be negative')
        for name in ('gauge_max', 'inv_n_max', 'amplitude_max'):
            if not getattr(self, name) > 0:
                raise ValueError(f'run.{name} must be positive')


@dataclass(frozen=True)
class DiagConfig:
    """診斷設定"""

    gauge_stride: int = 4
    gauge_exact: bool = False
    sobolev_k: int = 4
    monitor_tol: float = 1e-3

    def __post_init__(self):
        if self.gauge_stride < 1 or self.sobolev_k < 1:
            raise ValueError('diag.gauge_stride and diag.sobolev_k must be positive')
        if self.monitor_tol < 0:
            raise ValueError('diag.monitor_tol must not be negative')


@dataclass(frozen=True)
class OutputConfig:
    """輸出設定"""

    dir: str = 'runs/default'
    cadence: int = 10
    persist: bool = True

    def __post_init__(self):
        if self.cadence < 1:
            raise ValueError('output.cadence must be positive')


@dataclass(frozen=True)
class RunConfig:
    """
    模擬執行設定

    ``init`` is any object with ``build(grid)`` returning the initial
    SurfaceState; the command layer supplies an InitialDataSpec.
    """

    grid: ParamGrid = field(default_factory=lambda: ParamGrid(32, math.pi))
    fluid: FluidParams = field(default_factory=FluidParams)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    run: GuardConfig = field(default_factory=GuardConfig)
    diag: DiagConfig = field(default_factory=DiagConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    init: object = None
    label: str = ''

    def __post_init__(self):
        if self.diag.sobolev_k > self.grid.n // 4:
            raise ValueError(
                f'diag.sobolev_k={self.diag.sobolev_k} needs grid.n >= {4 * self.diag.sobolev_k}'
            )
        self.quad.effective_cutoff(self.grid)

    @property
    def quadrature(self):
        """Pair-quadrature settings with the run's deterministic flag applied."""
        if self.quad.deterministic == self.run.deterministic:
            return self.quad
        return replace(self.quad, deterministic=self.run.deterministic)
