"""
The double-layer operator
層勢模組 - 雙層位勢算子

  𝒟(Ω)(α) = (1/2π) PV∫ (X(α) − X(β))/|X(α) − X(β)|³ · N(β) Ω(β) dβ

evaluated with the pair quadrature of birkhoff_rott. The matrix is
assembled when n² ≤ dense_limit; larger grids apply it block by block.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from birkhoff_rott.quadrature import PairQuadrature, QuadratureConfig
from spectral.grid import check_field

logger = logging.getLogger(__name__)

# rows per deterministic dense product
ROW_CHUNK = 256


class DoubleLayerOperator:
    """雙層位勢算子"""

    def __init__(self, state, cache, cfg=None):
        self.state = state
        self.cache = cache
        self.cfg = cfg or QuadratureConfig()
        self.grid = state.grid
        self.size = state.grid.n ** 2
        self.matrix = None
        self.applications = 0

        # kernel numerators d·N(β) vanish identically for horizontal planes
        height = state.U[2]
        self.is_null = not np.any(height - height.flat[0]) and not np.any(cache.N[:2])
        if self.is_null:
            return

        self.quad = PairQuadrature(state, self.cfg)
        self.sources_N = cache.N.reshape(3, -1)[:, None, :]
        moment = self.quad.ring_moment(cache)
        self.diagonal = -np.add.reduce(moment * cache.N.reshape(3, -1), axis=0) / (2.0 * np.pi)
        if self.size <= self.cfg.dense_limit:
            self.matrix = self.assemble()

    @property
    def dense(self):
        return self.matrix is not None

    def block_rows(self, block):
        return np.add.reduce(block.kernel() * self.sources_N, axis=0) / (2.0 * np.pi)

    def assemble(self):
        rows = np.concatenate(self.quad.map_blocks(self.block_rows), axis=0)
        rows[np.arange(self.size), np.arange(self.size)] += self.diagonal
        logger.debug('assembled dense double-layer matrix (%d x %d)', self.size, self.size)
        return rows

    def matvec(self, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        self.applications += 1
        if self.is_null or not values.any():
            return np.zeros(self.size)
        if self.dense:
            if not self.cfg.deterministic:
                return self.matrix @ values
            return np.concatenate([
                np.add.reduce(self.matrix[start:start + ROW_CHUNK] * values, axis=1)
                for start in range(0, self.size, ROW_CHUNK)
            ])
        parts = self.quad.map_blocks(
            lambda block: np.add.reduce(self.block_rows(block) * values, axis=1)
        )
        return np.concatenate(parts) + self.diagonal * values

    def apply(self, omega):
        omega = check_field(omega, self.grid, 'Omega')
        return self.matvec(omega).reshape(self.grid.shape)

    __call__ = apply

    def as_linear_operator(self, shift=0.0, scale=1.0):
        """LinearOperator for shift·I + scale·𝒟 on flattened fields."""
        return LinearOperator(
            (self.size, self.size),
            matvec=lambda v: shift * np.ravel(v) + scale * self.matvec(v),
            dtype=np.float64,
        )


def double_layer_apply(state, cache, omega, cfg=None):
    return DoubleLayerOperator(state, cache, cfg).apply(omega)


@dataclass(frozen=True)
class SpectralRadiusEstimate:
    """譜半徑估計"""

    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.value


def _project_mean_zero(values):
    return values - values.mean()


def spectral_radius_estimate(state, cache, iters=50, cfg=None, seed=0, rtol=1e-6, operator=None):
    """
    Power iteration on P𝒟P (P removes the mean). Each iteration applies the
    operator twice and estimates |λ| = sqrt(‖(P𝒟P)²v‖/‖v‖), which settles
    even when ±λ pairs share the dominant modulus.
    """
    operator = operator or DoubleLayerOperator(state, cache, cfg)
    if operator.is_null:
        return SpectralRadiusEstimate(0.0, True, 0)

    rng = np.random.default_rng(seed)
    v = _project_mean_zero(rng.standard_normal(operator.size))
    v /= np.linalg.norm(v)
    estimate, previous = 0.0, np.inf
    for iteration in range(1, iters + 1):
        w = _project_mean_zero(operator.matvec(_project_mean_zero(operator.matvec(v))))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return SpectralRadiusEstimate(0.0, True, iteration)
        estimate = np.sqrt(norm)
        if abs(estimate - previous) <= rtol * estimate:
            return SpectralRadiusEstimate(float(estimate), True, iteration)
        previous = estimate
        v = w / norm
    logger.debug('spectral radius power iteration stopped at %d iterations', iters)
    return SpectralRadiusEstimate(float(estimate), False, iters)
