"""
Vorticity density and Darcy-law consistency residuals.
層勢模組 - 渦度密度與 Darcy 殘差
"""

import numpy as np

from spectral.grid import check_field
from spectral.operators import spectral_derivative


def vorticity_density(state, cache, omega):
    """ω = ∂₂Ω X₁ − ∂₁Ω X₂; tangent to the surface by construction."""
    grid = state.grid
    omega = check_field(omega, grid, 'Omega')
    if not omega.any():
        return np.zeros((3, *grid.shape))
    d1 = spectral_derivative(omega, 1, grid)
    d2 = spectral_derivative(omega, 2, grid)
    return d2 * cache.X1 - d1 * cache.X2


def darcy_mask(state):
    """Nodes where the residuals are measured: interior for truncated states."""
    if state.periodic:
        return np.ones(state.grid.shape, dtype=bool)
    return ~state.grid.frame_mask


def darcy_residual_fields(state, cache, params, omega, br):
    grid = state.grid
    fields = []
    for j, tangent in ((1, cache.X1), (2, cache.X2)):
        along = br[0] * tangent[0] + br[1] * tangent[1] + br[2] * tangent[2]
        fields.append(
            spectral_derivative(omega, j, grid)
            + 2.0 * params.a_mu * along
            + 2.0 * params.a_rho * tangent[2]
        )
    return fields


def darcy_residual(state, cache, params, omega, br):
    """r_j = ‖∂_jΩ + 2A_μ BR·∂_jX + 2A_ρ ∂_jX₃‖∞."""
    mask = darcy_mask(state)
    r1, r2 = darcy_residual_fields(state, cache, params, omega, br)
    return float(np.max(np.abs(r1[mask]))), float(np.max(np.abs(r2[mask])))
