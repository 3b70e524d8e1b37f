"""
Birkhoff-Rott velocity on the surface and Biot-Savart sampling off it.
Birkhoff-Rott 模組 - 介面速度

BR(X, ω)(α) = −(1/4π) PV∫ (X(α) − X(β))/|X(α) − X(β)|³ ∧ ω(β) dβ
"""

import logging

import numpy as np

from core.exceptions import InvalidFieldError, PointTooCloseError
from spectral.grid import check_field
from spectral.operators import riesz
from surface.geometry import cross, dot
from .quadrature import PairQuadrature, QuadratureConfig

logger = logging.getLogger(__name__)

TANGENCY_TOLERANCE = 1e-8


def flat_sheet_velocity(omega, grid):
    """Exact flat-sheet part: −½(R₂ω₃, −R₁ω₃, R₁ω₂ − R₂ω₁)."""
    return -0.5 * np.stack([
        riesz(omega[2], 2, grid),
        -riesz(omega[2], 1, grid),
        riesz(omega[1], 1, grid) - riesz(omega[0], 2, grid),
    ])


def check_tangent(omega, cache):
    normal_part = np.abs(dot(omega, cache.N))
    scale = max(1.0, float(np.max(np.abs(omega))) * float(np.max(cache.N_norm)))
    worst = float(normal_part.max())
    if worst > TANGENCY_TOLERANCE * scale:
        raise InvalidFieldError(f'vorticity density is not tangent: max |ω·N| = {worst:.3e}')


def br_velocity(state, cache, omega, cfg=None):
    grid = state.grid
    omega = check_field(omega, grid, 'omega', components=3)
    check_tangent(omega, cache)
    if not omega.any():
        return np.zeros((3, *grid.shape))

    cfg = cfg or QuadratureConfig()
    quad = PairQuadrature(state, cfg)
    sources = omega.reshape(3, -1)[:, None, :]

    def block_sum(block):
        kernel = block.kernel()
        if quad.periodic:
            kernel -= quad.flat_kernel(block)
        return np.add.reduce(cross(kernel, sources), axis=-1)

    total = np.concatenate(quad.map_blocks(block_sum), axis=1)
    moment = quad.ring_moment(cache, subtract_flat=quad.periodic)
    total -= cross(moment, omega.reshape(3, -1))
    velocity = (-1.0 / (4.0 * np.pi)) * total.reshape(3, *grid.shape)
    if quad.periodic:
        velocity += flat_sheet_velocity(omega, grid)
    return velocity


def velocity_at_point(state, cache, omega, x):
    """
    Biot-Savart velocity at a point off the surface by the plain trapezoid
    rule. The point must keep a distance of at least 2h from every node;
    use br_velocity on the surface itself. ``cache`` is not needed by the
    smooth rule and may be None.
    """
    grid = state.grid
    omega = check_field(omega, grid, 'omega', components=3).reshape(3, -1)
    x = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(x)):
        raise InvalidFieldError(f'sample point {x} is not finite')
    d = x[:, None] - state.X.reshape(3, -1)
    if state.periodic:
        period = 2.0 * grid.L
        d[:2] = (d[:2] + grid.L) % period - grid.L
    r = np.sqrt(np.sum(d * d, axis=0))
    closest = float(r.min())
    if closest < 2.0 * grid.h:
        raise PointTooCloseError(
            f'point {tuple(x)} is {closest:.3e} from the surface (< 2h = {2 * grid.h:.3e}); '
            'use br_velocity for on-surface values'
        )
    kernel = d / r ** 3
    return (-grid.cell_area / (4.0 * np.pi)) * np.add.reduce(cross(kernel, omega), axis=-1)
