"""
Parameter grid and field validation.
頻譜模組 - 參數網格與欄位檢查

Fields are plain numpy arrays: a scalar field is (n, n), a vector field is
(3, n, n). Axis 0 of a scalar field runs along α₁, axis 1 along α₂, and
node (i, j) sits at (−L + i·h, −L + j·h).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from core.exceptions import InvalidFieldError

# outer frame of the box checked by the boundary-margin invariant
FRAME_FRACTION = 0.125


@dataclass(frozen=True)
class ParamGrid:
    """參數平面上的均勻網格 [-L, L)²"""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 or self.n & (self.n - 1):
            raise InvalidFieldError(f'grid.n must be a power of two >= 8, got {self.n}')
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidFieldError(f'grid.L must be positive and finite, got {self.L}')

    @property
    def h(self):
        return 2.0 * self.L / self.n

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def shape(self):
        return (self.n, self.n)

    @cached_property
    def nodes(self):
        nodes = -self.L + self.h * np.arange(self.n)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def mesh(self):
        a1, a2 = np.meshgrid(self.nodes, self.nodes, indexing='ij')
        a1.flags.writeable = False
        a2.flags.writeable = False
        return a1, a2

    @cached_property
    def wavenumbers(self):
        """Centered lattice (π/L)·m in FFT order; the Nyquist entry is −(π/L)·n/2."""
        k = (np.pi / self.L) * fft.fftfreq(self.n, d=1.0 / self.n)
        k.flags.writeable = False
        return k

    @cached_property
    def xi(self):
        xi1, xi2 = np.meshgrid(self.wavenumbers, self.wavenumbers, indexing='ij')
        xi1.flags.writeable = False
        xi2.flags.writeable = False
        return xi1, xi2

    @cached_property
    def xi_norm(self):
        xi1, xi2 = self.xi
        norm = np.hypot(xi1, xi2)
        norm.flags.writeable = False
        return norm

    @cached_property
    def frame_mask(self):
        """Nodes in the outer frame (|α_j| ≥ 0.75 L on either axis)."""
        a1, a2 = self.mesh
        edge = (1.0 - 2.0 * FRAME_FRACTION) * self.L
        mask = (np.abs(a1) >= edge - 1e-12 * self.L) | (np.abs(a2) >= edge - 1e-12 * self.L)
        mask.flags.writeable = False
        return mask

    def integrate(self, F):
        """Trapezoid rule on the periodic box."""
        return self.cell_area * float(np.sum(F))

    def flat_embedding(self):
        """(α₁, α₂, 0) sampled on the grid, shape (3, n, n)."""
        a1, a2 = self.mesh
        return np.stack([a1, a2, np.zeros_like(a1)])


def check_field(F, grid, name='field', components=None):
    """Coerce F to float64 and reject wrong shapes or non-finite samples."""
    F = np.asarray(F, dtype=np.float64)
    expected = grid.shape if components is None else (components, *grid.shape)
    if F.shape[-2:] != grid.shape or (components is not None and F.shape != expected):
        raise InvalidFieldError(f'{name} has shape {F.shape}, expected {expected}')
    bad = ~np.isfinite(F)
    if bad.any():
        first = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidFieldError(
            f'{name} has {int(bad.sum())} non-finite samples (first at index {first})'
        )
    return F
