"""
Surface state: the deviation U = X − (α, 0) sampled on the parameter grid.
曲面模組 - 曲面狀態
"""

import logging

import numpy as np

from core.exceptions import BoundaryMarginError
from spectral.grid import check_field

logger = logging.getLogger(__name__)

# max|U| on the outer frame relative to max|U|
MARGIN_TOLERANCE = 1e-6

MARGIN_POLICIES = ('warn', 'error', 'off')


class SurfaceState:
    """
    曲面狀態

    ``periodic`` selects the far-field model of the pair quadratures:
    nearest-image offsets for seeded Fourier modes, box truncation for
    compact perturbations of the plane.
    """

    def __init__(self, grid, U, periodic=False, t=0.0):
        U = check_field(U, grid, 'U', components=3).copy()
        U.flags.writeable = False
        self.grid = grid
        self.U = U
        self.periodic = bool(periodic)
        self.t = float(t)

    def __repr__(self):
        return (
            f'SurfaceState(n={self.grid.n}, L={self.grid.L!r}, t={self.t!r}, '
            f'periodic={self.periodic})'
        )

    @property
    def X(self):
        return self.grid.flat_embedding() + self.U

    def replace(self, U=None, t=None):
        return SurfaceState(
            self.grid,
            self.U if U is None else U,
            periodic=self.periodic,
            t=self.t if t is None else t,
        )

    def translated(self, shift):
        """Rigid translation of the image by a constant 3-vector."""
        shift = np.asarray(shift, dtype=np.float64).reshape(3, 1, 1)
        return self.replace(U=self.U + shift)

    @property
    def margin_ratio(self):
        magnitude = np.sqrt(np.sum(self.U * self.U, axis=0))
        peak = float(magnitude.max())
        if peak == 0.0:
            return 0.0
        return float(magnitude[self.grid.frame_mask].max()) / peak

    def check_margin(self, policy='error'):
        """
        Apply the boundary-margin policy; returns the measured ratio.
        Periodic states are exempt and always report 0.
        """
        if policy not in MARGIN_POLICIES:
            raise ValueError(f'unknown margin policy {policy!r}')
        if self.periodic or policy == 'off':
            return 0.0
        ratio = self.margin_ratio
        if ratio > MARGIN_TOLERANCE:
            message = (
                f'boundary margin breached at t={self.t:.6g}: frame/max ratio {ratio:.3e} '
                f'exceeds {MARGIN_TOLERANCE:.0e}'
            )
            if policy == 'error':
                raise BoundaryMarginError(message, ratio=ratio)
            logger.warning(message)
        return ratio
