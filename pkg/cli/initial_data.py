"""
Initial-data generation.
命令列模組 - 初始資料
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import ConfigSchemaError
from spectral.grid import FRAME_FRACTION
from spectral.testing import gaussian_bump
from surface.isothermal import Isothermalizer
from surface.snapshot import read_snapshot
from surface.state import MARGIN_TOLERANCE, SurfaceState

logger = logging.getLogger(__name__)

KINDS = ('flat', 'cosine', 'bump', 'random-bump', 'file')
PERIODIC_CHOICES = ('auto', 'true', 'false')

# random-bump: clearance to the outer frame, in bump widths
DECAY_WIDTHS = 4.3


@dataclass(frozen=True)
class InitialDataSpec:
    """
    初始資料規格

    cosine: U₃ = ε cos((π/L)(k₁α₁ + k₂α₂)), periodic by default.
    bump: U₃ = a exp(−|α − c|²/w²).
    random-bump: a vector bump with a seeded unit direction, centre and width,
    placed so the boundary margin holds.
    file: a snapshot written by a previous run.
    """

    kind: str = 'flat'
    k1: int = 1
    k2: int = 0
    eps: float = 1e-4
    amplitude: float = 0.1
    width: float = 0.5
    center1: float = 0.0
    center2: float = 0.0
    path: str = ''
    periodic: str = 'auto'
    isothermalize: bool = False
    iso_tol: float = 1e-2
    iso_max_iter: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigSchemaError(f'init.kind must be one of {KINDS}', key='init.kind')
        if self.periodic not in PERIODIC_CHOICES:
            raise ConfigSchemaError(f'init.periodic must be one of {PERIODIC_CHOICES}', key='init.periodic')
        if self.amplitude < 0 or self.eps < 0:
            raise ConfigSchemaError('init amplitudes must be non-negative', key='init.amplitude')
        if not self.width > 0:
            raise ConfigSchemaError('init.width must be positive', key='init.width')
        if self.kind == 'file' and not self.path:
            raise ConfigSchemaError('init.kind = file needs init.path', key='init.path')

    @property
    def is_periodic(self):
        if self.periodic == 'auto':
            return self.kind == 'cosine'
        return self.periodic == 'true'

    def deviation(self, grid):
        a1, a2 = grid.mesh
        U = np.zeros((3, *grid.shape))
        if self.kind == 'cosine':
            scale = math.pi / grid.L
            U[2] = self.eps * np.cos(scale * (self.k1 * a1 + self.k2 * a2))
        elif self.kind == 'bump':
            U[2] = gaussian_bump(grid, self.amplitude, self.width, (self.center1, self.center2))
        elif self.kind == 'random-bump':
            U = self.random_bump(grid)
        return U

    def random_bump(self, grid):
        """
        Seeded unit direction, width and centre. The width is capped and the
        centre confined so every frame node sits at least h + DECAY_WIDTHS·w
        from the centre, which keeps the frame/peak ratio below
        exp(−DECAY_WIDTHS²) ≈ 1e−8.
        """
        rng = np.random.default_rng(self.seed)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        offsets = rng.uniform(-1.0, 1.0, size=2)
        width = self.width * rng.uniform(0.75, 1.25)

        reach = (1.0 - 2.0 * FRAME_FRACTION) * grid.L - grid.h
        cap = reach / DECAY_WIDTHS
        if width > cap:
            logger.debug('random-bump width %.4g capped to %.4g by the boundary margin', width, cap)
            width = cap
        room = min(reach - DECAY_WIDTHS * width, 0.25 * grid.L)
        center = tuple(room * offsets)
        return direction[:, None, None] * gaussian_bump(grid, self.amplitude, width, center)

    def load(self, grid):
        state = read_snapshot(self.path, periodic=self.is_periodic)
        if state.grid != grid:
            raise ConfigSchemaError(
                f'snapshot {self.path} has n={state.grid.n} L={state.grid.L!r}, '
                f'configuration has n={grid.n} L={grid.L!r}',
                key='init.path',
            )
        return state

    def prepare(self, grid):
        """Build the initial state; returns (state, isothermalization report or None)."""
        if self.kind == 'file':
            state = self.load(grid)
        else:
            state = SurfaceState(grid, self.deviation(grid), periodic=self.is_periodic)
            if self.kind == 'random-bump' and not state.periodic:
                ratio = state.margin_ratio
                if ratio > MARGIN_TOLERANCE:
                    raise ConfigSchemaError(
                        f'random-bump with init.width={self.width!r} breaches the boundary margin '
                        f'(frame/max ratio {ratio:.3e})',
                        key='init.width',
                    )
        report = None
        if self.isothermalize:
            report = Isothermalizer(tol=self.iso_tol, max_iter=self.iso_max_iter).run(state)
            logger.info(
                'isothermalized initial data: J %.3e -> %.3e in %d iterations',
                report.j_initial, report.j_final, report.iterations,
            )
            state = report.state
        return state, report

    def build(self, grid):
        return self.prepare(grid)[0]
