"""
Tangential coefficients and the interface velocity.
切向模組 - 切向係數與介面速度

With a = (∂₂BR·X₂ − ∂₁BR·X₁)/|X₂|² and b = (∂₁BR·X₂ + ∂₂BR·X₁)/|X₁|²,

  C₁ = ∂₁Δ⁻¹a − ∂₂Δ⁻¹b,   C₂ = −∂₂Δ⁻¹a − ∂₁Δ⁻¹b,

so that ∂₁C₁ − ∂₂C₂ = a and ∂₁C₂ + ∂₂C₁ = −b on mean-zero modes. The
velocity is X_t = BR + C₁X₁ + C₂X₂.
"""

from dataclasses import dataclass

import numpy as np

from core.exceptions import DegenerateSurfaceError
from spectral.grid import check_field
from spectral.operators import inv_lap_grad, spectral_derivative
from surface.geometry import MIN_NORMAL, dot


@dataclass(frozen=True)
class TangentialFields:
    """切向係數 C₁, C₂"""

    C1: np.ndarray
    C2: np.ndarray


def tangential_densities(state, cache, br):
    grid = state.grid
    d1 = spectral_derivative(br, 1, grid)
    d2 = spectral_derivative(br, 2, grid)
    norm1 = dot(cache.X1, cache.X1)
    norm2 = dot(cache.X2, cache.X2)
    smallest = float(min(norm1.min(), norm2.min()))
    if smallest <= MIN_NORMAL:
        raise DegenerateSurfaceError(
            f'tangent vector degenerates: min |X_j|² = {smallest:.3e}', min_normal=cache.min_normal,
        )
    a = (dot(d2, cache.X2) - dot(d1, cache.X1)) / norm2
    b = (dot(d1, cache.X2) + dot(d2, cache.X1)) / norm1
    return a, b


def tangential_coeffs(state, cache, br):
    grid = state.grid
    br = check_field(br, grid, 'BR', components=3)
    if not br.any():
        zeros = np.zeros(grid.shape)
        return TangentialFields(zeros, zeros.copy())
    a, b = tangential_densities(state, cache, br)
    C1 = inv_lap_grad(a, 1, grid) - inv_lap_grad(b, 2, grid)
    C2 = -inv_lap_grad(a, 2, grid) - inv_lap_grad(b, 1, grid)
    return TangentialFields(C1, C2)


def surface_velocity(state, cache, br, tang):
    return br + tang.C1 * cache.X1 + tang.C2 * cache.X2
