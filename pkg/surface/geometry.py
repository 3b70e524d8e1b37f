"""
Surface geometry and regularity diagnostics.
曲面模組 - 幾何量與正則性診斷

All derivatives are spectral derivatives of the periodic deviation U; the
tangents add the flat unit vectors, X₁ = e₁ + ∂₁U and X₂ = e₂ + ∂₂U.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import DegenerateSurfaceError, ResolutionError, SelfIntersectionError
from spectral.grid import check_field
from spectral.operators import spectral_derivative

logger = logging.getLogger(__name__)

MIN_NORMAL = 1e-10
MIN_SEPARATION = 1e-14


def cross(a, b):
    """Pointwise cross product of stacked (3, n, n) fields."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@dataclass(frozen=True)
class GeometryCache:
    """幾何快取：切向量、法向量與其長度"""

    X1: np.ndarray
    X2: np.ndarray
    N: np.ndarray
    N_norm: np.ndarray
    min_normal: float

    @property
    def inv_normal_max(self):
        """‖|N|⁻¹‖∞"""
        return 1.0 / self.min_normal


def tangents(state):
    grid = state.grid
    X1 = spectral_derivative(state.U, 1, grid)
    X2 = spectral_derivative(state.U, 2, grid)
    X1[0] += 1.0
    X2[1] += 1.0
    return X1, X2


def geometry(state):
    return geometry_from_tangents(*tangents(state))


def geometry_from_tangents(X1, X2):
    """Build the cache from explicit tangent fields, e.g. for linear maps of the plane."""
    X1 = np.array(X1, dtype=np.float64)
    X2 = np.array(X2, dtype=np.float64)
    N = cross(X1, X2)
    N_norm = np.sqrt(dot(N, N))
    min_normal = float(N_norm.min())
    if min_normal <= MIN_NORMAL:
        index = tuple(int(i) for i in np.unravel_index(N_norm.argmin(), N_norm.shape))
        raise DegenerateSurfaceError(
            f'normal degenerates at node {index}: |N| = {min_normal:.3e}',
            min_normal=min_normal,
        )
    for array in (X1, X2, N, N_norm):
        array.flags.writeable = False
    return GeometryCache(X1=X1, X2=X2, N=N, N_norm=N_norm, min_normal=min_normal)


def isothermal_residual(state, cache=None):
    """f = (|X₁|² − |X₂|²)/2 and g = X₁·X₂."""
    if cache is None:
        X1, X2 = tangents(state)
    else:
        X1, X2 = cache.X1, cache.X2
    f = 0.5 * (dot(X1, X1) - dot(X2, X2))
    g = dot(X1, X2)
    return f, g


def isothermal_defect(state, cache=None):
    """J = ∫ f² + g²."""
    f, g = isothermal_residual(state, cache)
    return state.grid.integrate(f * f + g * g)


def _wrapped_offsets(indices, n):
    return (indices + n // 2) % n - n // 2


def chord_arc_gauge(state, stride=1, chunk_sources=64):
    """
    max |β| / |X(α) − X(α − β)| over target nodes α and source nodes taken
    every ``stride`` nodes on each axis. Horizontal offsets use the
    nearest-image box metric; stride 1 is the exact evaluation.
    """
    if stride < 1:
        raise ValueError(f'stride must be positive, got {stride}')
    grid = state.grid
    n, h = grid.n, grid.h
    U = state.U
    targets = np.arange(n)
    sources = np.arange(0, n, stride)
    s1, s2 = (a.ravel() for a in np.meshgrid(sources, sources, indexing='ij'))
    U_flat = U.reshape(3, -1)

    worst = 0.0
    for start in range(0, s1.size, chunk_sources):
        c1 = s1[start:start + chunk_sources]
        c2 = s2[start:start + chunk_sources]
        m1 = _wrapped_offsets(targets[None, :, None] - c1[:, None, None], n)
        m2 = _wrapped_offsets(targets[None, None, :] - c2[:, None, None], n)
        b1 = h * m1.astype(np.float64)
        b2 = h * m2.astype(np.float64)
        source_U = U_flat[:, c1 * n + c2][:, :, None, None]
        d1 = b1 + (U[0][None] - source_U[0])
        d2 = b2 + (U[1][None] - source_U[1])
        d3 = U[2][None] - source_U[2]
        numerator = np.sqrt(b1 * b1 + b2 * b2)
        denominator = np.sqrt(d1 * d1 + d2 * d2 + d3 * d3)
        coincident = (m1 == 0) & (m2 == 0)
        denominator = np.where(coincident, np.inf, denominator)
        closest = float(denominator.min())
        if closest <= MIN_SEPARATION:
            raise SelfIntersectionError(
                f'coincident surface images: |X(α) − X(β)| = {closest:.3e}'
            )
        worst = max(worst, float(np.max(numerator / denominator)))
    return worst


def sobolev_norm(state, k):
    """
    ‖U₁‖_{L³} + ‖U₂‖_{L³} + ‖U₃‖_{L²}
      + Σ_c (‖∇U_c‖²_{L²} + ‖∂₁^k U_c‖²_{L²} + ‖∂₂^k U_c‖²_{L²})
    """
    grid = state.grid
    if k < 1 or k > grid.n // 4:
        raise ResolutionError(
            f'derivative order k={k} needs 1 <= k <= n/4 (n={grid.n})'
        )
    U = state.U
    integrate = grid.integrate
    value = (
        integrate(np.abs(U[0]) ** 3) ** (1.0 / 3.0)
        + integrate(np.abs(U[1]) ** 3) ** (1.0 / 3.0)
        + np.sqrt(integrate(U[2] * U[2]))
    )
    for j in (1, 2):
        first = spectral_derivative(U, j, grid)
        pure = spectral_derivative(U, j, grid, order=k)
        value += integrate(first * first) + integrate(pure * pure)
    return float(value)


def chord_arc_rate(state, xt, stride=1, chunk_sources=64):
    """
    max over sampled pairs of d/dt |β|/|ΔX| = −|β|(ΔX·ΔX_t)/|ΔX|³,
    with the same source sampling as chord_arc_gauge.
    """
    if stride < 1:
        raise ValueError(f'stride must be positive, got {stride}')
    grid = state.grid
    n, h = grid.n, grid.h
    U = state.U
    xt = check_field(xt, grid, 'X_t', components=3)
    targets = np.arange(n)
    sources = np.arange(0, n, stride)
    s1, s2 = (a.ravel() for a in np.meshgrid(sources, sources, indexing='ij'))
    U_flat = U.reshape(3, -1)
    xt_flat = xt.reshape(3, -1)

    worst = -np.inf
    for start in range(0, s1.size, chunk_sources):
        c1 = s1[start:start + chunk_sources]
        c2 = s2[start:start + chunk_sources]
        index = c1 * n + c2
        m1 = _wrapped_offsets(targets[None, :, None] - c1[:, None, None], n)
        m2 = _wrapped_offsets(targets[None, None, :] - c2[:, None, None], n)
        b1 = h * m1.astype(np.float64)
        b2 = h * m2.astype(np.float64)
        source_U = U_flat[:, index][:, :, None, None]
        source_xt = xt_flat[:, index][:, :, None, None]
        d = np.stack([
            b1 + (U[0][None] - source_U[0]),
            b2 + (U[1][None] - source_U[1]),
            U[2][None] - source_U[2],
        ])
        dt = xt[:, None] - source_xt
        coincident = (m1 == 0) & (m2 == 0)
        r = np.sqrt(np.sum(d * d, axis=0))
        r = np.where(coincident, np.inf, r)
        rate = -np.sqrt(b1 * b1 + b2 * b2) * np.sum(d * dt, axis=0) / (r * r * r)
        worst = max(worst, float(np.max(np.where(coincident, -np.inf, rate))))
    return worst + 0.0
