"""
Fourier multiplier operators on the periodic parameter box.
頻譜模組 - 傅立葉乘子運算子

Convention: forward transform with e^{−iξ·α}. The Riesz transform R_j has
multiplier −iξ_j/|ξ| (so R₁ cos = sin), Λ = (−Δ)^{1/2} has |ξ|, and
inv_lap_grad realizes ∂_jΔ⁻¹ with multiplier −iξ_j/|ξ|². Zero modes of
Λ, R_j and Δ⁻¹ map to 0; Nyquist modes of odd multipliers are zeroed.
"""

from functools import lru_cache

import numpy as np
from scipy import fft

from .grid import check_field

AXES = (-2, -1)


class SpectralOperators:
    """Multiplier tables for one grid. Read-only after construction."""

    def __init__(self, grid):
        self.grid = grid
        xi1, xi2 = grid.xi
        norm = grid.xi_norm
        nonzero = norm > 0
        safe = np.where(nonzero, norm, 1.0)

        self._xi = (xi1, xi2)
        self._nyquist = (self._nyquist_mask(0), self._nyquist_mask(1))
        self.lambda_multiplier = self._freeze(norm.copy())
        self.riesz_multiplier = tuple(
            self._freeze(np.where(nonzero & ~nyq, -1j * xi / safe, 0.0))
            for xi, nyq in zip(self._xi, self._nyquist)
        )
        self.inv_lap_grad_multiplier = tuple(
            self._freeze(np.where(nonzero & ~nyq, -1j * xi / safe ** 2, 0.0))
            for xi, nyq in zip(self._xi, self._nyquist)
        )
        self.inv_lap_multiplier = self._freeze(np.where(nonzero, 1.0 / safe ** 2, 0.0))

    def _nyquist_mask(self, axis):
        mask = np.zeros(self.grid.shape, dtype=bool)
        index = [slice(None), slice(None)]
        index[axis] = self.grid.n // 2
        mask[tuple(index)] = True
        return mask

    @staticmethod
    def _freeze(array):
        array.flags.writeable = False
        return array

    def derivative_multiplier(self, j, order=1):
        xi = self._xi[j - 1]
        multiplier = (1j * xi) ** order
        if order % 2:
            multiplier = np.where(self._nyquist[j - 1], 0.0, multiplier)
        return multiplier

    def apply(self, F, multiplier, with_residue=False):
        """Apply a multiplier over the last two axes; returns the real part."""
        result = fft.ifft2(multiplier * fft.fft2(F, axes=AXES), axes=AXES)
        if with_residue:
            return result.real, float(np.max(np.abs(result.imag), initial=0.0))
        return result.real


@lru_cache(maxsize=16)
def operators_for(grid):
    return SpectralOperators(grid)


def _axis(j):
    if j not in (1, 2):
        raise ValueError(f'axis must be 1 or 2, got {j}')
    return j


def spectral_derivative(F, j, grid, order=1):
    """∂_{α_j}^order F by the multiplier (iξ_j)^order."""
    F = check_field(F, grid, 'derivative input')
    ops = operators_for(grid)
    return ops.apply(F, ops.derivative_multiplier(_axis(j), order))


def gradient(F, grid):
    """(∂₁F, ∂₂F) for a scalar or stacked field."""
    return spectral_derivative(F, 1, grid), spectral_derivative(F, 2, grid)


def riesz(F, j, grid):
    F = check_field(F, grid, 'riesz input')
    ops = operators_for(grid)
    return ops.apply(F, ops.riesz_multiplier[_axis(j) - 1])


def lambda_op(F, grid):
    """Λ = (−Δ)^{1/2}."""
    F = check_field(F, grid, 'lambda input')
    ops = operators_for(grid)
    return ops.apply(F, ops.lambda_multiplier)


def inv_lap_grad(F, j, grid):
    """∂_jΔ⁻¹F, i.e. convolution with (α_j − β_j)/(2π|α − β|²)."""
    F = check_field(F, grid, 'inv_lap_grad input')
    ops = operators_for(grid)
    return ops.apply(F, ops.inv_lap_grad_multiplier[_axis(j) - 1])


def inv_laplacian(F, grid):
    """(−Δ)⁻¹ on mean-zero fields; zero mode dropped."""
    F = check_field(F, grid, 'inv_laplacian input')
    ops = operators_for(grid)
    return ops.apply(F, ops.inv_lap_multiplier)


def cordoba_defect(theta, grid):
    """θΛθ − ½Λ(θ²); pointwise non-negative for smooth θ."""
    theta = check_field(theta, grid, 'theta')
    return theta * lambda_op(theta, grid) - 0.5 * lambda_op(theta * theta, grid)


def fourier_interpolate(F, grid, points1, points2):
    """
    Evaluate the trigonometric interpolant of F (scalar or stacked) at
    arbitrary parameter points. Exact at grid nodes.
    """
    F = np.asarray(F, dtype=np.float64)
    n = grid.n
    lead_shape = F.shape[:-2]
    coeffs = fft.fft2(F, axes=AXES).reshape(-1, n, n) / (n * n)
    k = grid.wavenumbers
    p1 = np.asarray(points1, dtype=np.float64).ravel() + grid.L
    p2 = np.asarray(points2, dtype=np.float64).ravel() + grid.L
    e1 = np.exp(1j * np.outer(p1, k))
    e2 = np.exp(1j * np.outer(p2, k))
    partial = np.matmul(e1[None, :, :], coeffs)
    values = np.sum(partial * e2[None, :, :], axis=-1).real
    return values.reshape(*lead_shape, *np.shape(points1))
