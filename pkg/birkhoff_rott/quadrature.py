"""
Principal-value pair quadrature shared by the double-layer operator and the
Birkhoff-Rott velocity.
Birkhoff-Rott 模組 - 主值配對積分

Rule, for target node α and source node β = α − h·m, m ≠ 0:

  weight(m) = h² · (2 − 4·[m₁, m₂ both even])

i.e. twice the punctured trapezoid sum minus the sum over the stride-2
sublattice through the target. Both sums omit the singular node; their
combination cancels the O(h) error of the even degree −1 part of the
kernel expansion. Over the near ring |m| ≤ ring the odd linearized kernel,
evaluated at d = h(m₁X₁(α) + m₂X₂(α)) with the target density, is
subtracted as a diagonal term. The weights are even in m and the
linearized kernel is odd, so the ring sum vanishes up to rounding wherever the
whole ring is present: at interior targets and on periodic states. It
only acts at targets of a truncated state whose ring is clipped by the
box edge.

Truncated states sum over the box with raw offsets. Periodic states use
nearest-image offsets and the caller splits off the flat-sheet kernel.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from core.conf import get_setting
from core.exceptions import SelfIntersectionError
from surface.geometry import MIN_SEPARATION

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    """主值積分設定"""

    ring: int = 3
    deterministic: bool = True
    cutoff: float | None = None
    chunk_pairs: int = field(default_factory=lambda: get_setting('CHUNK_PAIRS'))
    dense_limit: int = field(default_factory=lambda: get_setting('DENSE_LIMIT'))
    workers: int = field(default_factory=lambda: get_setting('WORKERS'))

    def __post_init__(self):
        if self.ring < 1:
            raise ValueError(f'quad.ring must be >= 1, got {self.ring}')
        if self.cutoff is not None and self.cutoff <= 0:
            raise ValueError(f'quad.cutoff must be positive, got {self.cutoff}')
        if self.chunk_pairs < 1 or self.workers < 1:
            raise ValueError('chunk_pairs and workers must be positive')

    def effective_cutoff(self, grid):
        if self.cutoff is None:
            return None
        if self.cutoff > grid.L:
            raise ValueError(f'quad.cutoff {self.cutoff} exceeds the box half-width {grid.L}')
        return self.cutoff


def richardson_weights(m1, m2, h):
    """h²(2 − 4·[both even]); zero at m = 0."""
    both_even = (m1 % 2 == 0) & (m2 % 2 == 0)
    weights = np.where(both_even, -2.0, 2.0) * (h * h)
    return np.where((m1 == 0) & (m2 == 0), 0.0, weights)


def wrap_offsets(m, n):
    return (m + n // 2) % n - n // 2


@dataclass
class PairBlock:
    """A chunk of targets against every source node."""

    targets: slice
    m1: np.ndarray
    m2: np.ndarray
    weights: np.ndarray
    d: np.ndarray
    weighted_inv_r3: np.ndarray

    def kernel(self):
        """weight · d/|d|³, shape (3, targets, sources)."""
        return self.d * self.weighted_inv_r3


class PairQuadrature:
    """
    配對積分引擎

    Iterates over target chunks of at most ``chunk_pairs`` pairs; every
    per-target reduction runs along the source axis with numpy's fixed
    pairwise order, so results do not depend on the chunking or workers.
    """

    def __init__(self, state, cfg):
        self.state = state
        self.cfg = cfg
        self.grid = grid = state.grid
        self.periodic = state.periodic
        n = grid.n
        self.size = n * n
        self.i1, self.i2 = np.divmod(np.arange(self.size), n)
        self.U = state.U.reshape(3, -1)
        self.cutoff = cfg.effective_cutoff(grid)
        self.rows_per_block = max(1, min(self.size, cfg.chunk_pairs // self.size))

    def target_slices(self):
        for start in range(0, self.size, self.rows_per_block):
            yield slice(start, min(start + self.rows_per_block, self.size))

    def offsets(self, targets):
        m1 = self.i1[targets, None] - self.i1[None, :]
        m2 = self.i2[targets, None] - self.i2[None, :]
        if self.periodic:
            n = self.grid.n
            m1 = wrap_offsets(m1, n)
            m2 = wrap_offsets(m2, n)
        return m1, m2

    def block(self, targets):
        h = self.grid.h
        m1, m2 = self.offsets(targets)
        weights = richardson_weights(m1, m2, h)
        if self.cutoff is not None:
            weights = np.where(np.hypot(h * m1, h * m2) > self.cutoff, 0.0, weights)
        U = self.U
        d = np.stack([
            h * m1 + (U[0, targets, None] - U[0, None, :]),
            h * m2 + (U[1, targets, None] - U[1, None, :]),
            U[2, targets, None] - U[2, None, :],
        ])
        r = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        live = weights != 0.0
        if live.any():
            closest = float(r[live].min())
            if closest <= MIN_SEPARATION:
                raise SelfIntersectionError(
                    f'coincident surface images in pair quadrature: |X(α) − X(β)| = {closest:.3e}'
                )
        weighted_inv_r3 = np.divide(weights, r * r * r, out=np.zeros_like(r), where=live)
        return PairBlock(targets, m1, m2, weights, d, weighted_inv_r3)

    def flat_kernel(self, block):
        """weight · (hm, 0)/|hm|³ for the nearest-image flat sheet."""
        h = self.grid.h
        hor1 = h * block.m1
        hor2 = h * block.m2
        rho = np.sqrt(hor1 * hor1 + hor2 * hor2)
        live = block.weights != 0.0
        factor = np.divide(block.weights, rho * rho * rho, out=np.zeros_like(rho), where=live)
        return np.stack([hor1 * factor, hor2 * factor, np.zeros_like(factor)])

    def map_blocks(self, fn):
        """Apply fn to every block; results come back in target order."""
        slices = list(self.target_slices())
        if self.cfg.deterministic or self.cfg.workers == 1 or len(slices) == 1:
            return [fn(self.block(s)) for s in slices]
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            return list(pool.map(lambda s: fn(self.block(s)), slices))

    def ring_offsets(self):
        ring = self.cfg.ring
        span = np.arange(-ring, ring + 1)
        m1, m2 = (a.ravel() for a in np.meshgrid(span, span, indexing='ij'))
        keep = (m1 * m1 + m2 * m2 <= ring * ring) & ((m1 != 0) | (m2 != 0))
        return m1[keep], m2[keep]

    def ring_moment(self, cache, subtract_flat=False):
        """
        Σ_ring weight · K(d_lin) at every target, with K(d) = d/|d|³ and
        d_lin = h(m₁X₁ + m₂X₂). Shape (3, n²). Ring members whose source
        falls outside the box are skipped for truncated states; a complete
        ring sums to zero.
        """
        h = self.grid.h
        n = self.grid.n
        X1 = cache.X1.reshape(3, -1)
        X2 = cache.X2.reshape(3, -1)
        moment = np.zeros((3, self.size))
        for m1, m2 in zip(*self.ring_offsets()):
            weight = richardson_weights(np.array(m1), np.array(m2), h)
            if self.cutoff is not None and np.hypot(h * m1, h * m2) > self.cutoff:
                continue
            d = h * (m1 * X1 + m2 * X2)
            r3 = np.sum(d * d, axis=0) ** 1.5
            term = weight * d / r3
            if subtract_flat:
                rho3 = (h * h * (m1 * m1 + m2 * m2)) ** 1.5
                term[0] -= weight * h * m1 / rho3
                term[1] -= weight * h * m2 / rho3
            if not self.periodic:
                s1 = self.i1 - m1
                s2 = self.i2 - m2
                inside = (s1 >= 0) & (s1 < n) & (s2 >= 0) & (s2 < n)
                term = np.where(inside, term, 0.0)
            moment += term
        return moment
